"""Command-line client for the range service.

Every subcommand speaks to the HTTP API. By default an in-process service
instance is spun up for the duration of the invocation; point --api (or
LACCOLITH_RANGE_API) at a running `laccolith serve` to work against live
state instead.

Exit codes: 0 on success, 1 on a domain error (unknown id, crashed guest,
lost agent, server failure), 2 on a usage or validation error. Read
commands take --json to print the raw API response.
"""

from __future__ import annotations

import json
import os
import shlex
import sys
import warnings

import click
import httpx

EXIT_FAILURE = 1
EXIT_USAGE = 2

# Domain errors exit 1, bad input exits 2. Unknown ids are domain errors:
# the request was well-formed, the range just has no such thing.
FAILURE_STATUS = (404, 409)


class Client:
    def __init__(self, api_url: str | None):
        if api_url:
            self._client = httpx.Client(base_url=api_url.rstrip("/"), timeout=120.0)
        else:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                from fastapi.testclient import TestClient

            from .api.app import create_app

            self._client = TestClient(create_app())

    def request(self, method: str, path: str, **kwargs) -> dict | list:
        try:
            response = self._client.request(method, path, **kwargs)
        except httpx.HTTPError as exc:
            click.echo(f"error: cannot reach the range service: {exc}", err=True)
            sys.exit(EXIT_FAILURE)
        if response.status_code >= 400:
            detail = ""
            try:
                body = response.json()
                detail = body.get("detail") or body.get("error") or response.text
            except ValueError:
                detail = response.text
            click.echo(f"error ({response.status_code}): {detail}", err=True)
            failure = (
                response.status_code in FAILURE_STATUS
                or response.status_code >= 500
            )
            sys.exit(EXIT_FAILURE if failure else EXIT_USAGE)
        if response.status_code == 204 or not response.content:
            return {}
        return response.json()

    def get(self, path: str, **params) -> dict | list:
        return self.request("GET", path, params=params or None)

    def post(self, path: str, body: dict) -> dict | list:
        return self.request("POST", path, json=body)


pass_client = click.make_pass_decorator(Client)

json_option = click.option(
    "--json", "as_json", is_flag=True, help="Print the raw API response as JSON."
)


def _dump(document) -> None:
    click.echo(json.dumps(document, indent=2))


@click.group()
@click.option(
    "--api",
    "api_url",
    envvar="LACCOLITH_RANGE_API",
    default=None,
    help="Base URL of a running range service; defaults to in-process.",
)
@click.pass_context
def main(ctx: click.Context, api_url: str | None) -> None:
    """Control a deterministic injection range."""
    ctx.obj = Client(api_url)


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8787, show_default=True)
def serve(host: str, port: int) -> None:
    """Run the HTTP service in the foreground."""
    import uvicorn

    from .api.app import create_app

    uvicorn.run(create_app(), host=host, port=port)


# -- guests -------------------------------------------------------------------


@main.group()
def guest() -> None:
    """Boot and list synthetic guests."""


@guest.command("boot")
@click.option("--seed", type=int, default=None)
@click.option("--config", "config_name", default=None, help="Bundled guest config name.")
@json_option
@pass_client
def guest_boot(client: Client, seed: int | None, config_name: str | None,
               as_json: bool) -> None:
    info = client.post("/api/guests", {"seed": seed, "config": config_name})
    if as_json:
        _dump(info)
        return
    click.echo(
        f"{info['id']}  build={info['build_id']}  seed={info['seed']}  "
        f"base={info['kernel_base']}"
    )


@guest.command("list")
@json_option
@pass_client
def guest_list(client: Client, as_json: bool) -> None:
    guests = client.get("/api/guests")
    if as_json:
        _dump(guests)
        return
    if not guests:
        click.echo("no guests")
        return
    for info in guests:
        state = "crashed" if info["crashed"] else "running"
        agent = " agent" if info["agent_loaded"] else ""
        av = f" av={info['av']}" if info["av"] else ""
        click.echo(
            f"{info['id']}  {state:8s} clock={info['clock']:9.2f} "
            f"seed={info['seed']}{av}{agent}"
        )


@main.command()
@click.option("--guest", "guest_id", required=True, help="Guest to inject into.")
@click.option("--at", "--time", "injection_time", type=float, default=60.0,
              show_default=True, help="Seconds past the login prompt before starting.")
@click.option("--symbol", "--region", "region", default=None,
              help="Kernel function to borrow.")
@json_option
@pass_client
def inject(client: Client, guest_id: str, injection_time: float,
           region: str | None, as_json: bool) -> None:
    """Inject the agent into a guest."""
    result = client.post(
        f"/api/guests/{guest_id}/inject",
        {"injection_time": injection_time, "region": region},
    )
    if as_json:
        _dump(result)
    else:
        for step in result["timeline"]:
            click.echo(f"  [{step['step']}] t={step['time']:9.3f}  {step['label']}")
        click.echo(
            f"{result['status']}  region={result['region_name']}  agent={result['agent']}"
        )
    if result["status"] != "success":
        sys.exit(EXIT_FAILURE)


# -- agents -------------------------------------------------------------------


@main.group()
def agents() -> None:
    """Inspect live agents."""


@agents.command("list")
@json_option
@pass_client
def agents_list(client: Client, as_json: bool) -> None:
    entries = client.get("/api/agents")
    if as_json:
        _dump(entries)
        return
    if not entries:
        click.echo("no agents")
        return
    for info in entries:
        click.echo(
            f"{info['id']}  guest={info['guest']}  {info['state']:9s} "
            f"commands={info['commands']}  last_seen={info['last_seen']:.2f}"
        )


def _strip_quotes(token: str) -> str:
    if len(token) >= 2 and token[0] == token[-1] and token[0] in "'\"":
        return token[1:-1]
    return token


def _parse_shell_line(line: str) -> tuple[str, dict, str | None]:
    exec_path = None
    if line.startswith("@user "):
        exec_path = "user"
        line = line[len("@user "):]
    # Non-POSIX mode keeps backslashes in Windows paths intact.
    parts = [_strip_quotes(part) for part in shlex.split(line, posix=False)]
    command, rest = parts[0].lower(), parts[1:]
    if command in ("dir", "read"):
        args = {"path": rest[0]} if rest else {}
    elif command == "write":
        if len(rest) < 2:
            raise click.UsageError("write needs a path and data")
        args = {"path": rest[0], "data": " ".join(rest[1:])}
    elif command == "setkey":
        if len(rest) < 3:
            raise click.UsageError("setkey needs hive, key, and value")
        args = {"hive": rest[0], "key": rest[1], "value": rest[2]}
    elif command == "dump":
        if not rest:
            raise click.UsageError("dump needs a process name")
        args = {"process": rest[0]}
    elif command == "usermode":
        args = {"command": " ".join(rest)}
    elif command == "echo":
        args = {"text": " ".join(rest)}
    else:
        args = {}
    return command, args, exec_path


def _run_shell_line(client: Client, agent_id: str, line: str) -> bool:
    command, args, exec_path = _parse_shell_line(line)
    result = client.post(
        f"/api/agents/{agent_id}/command",
        {"command": command, "args": args, "exec_path": exec_path},
    )
    if result["blocked"]:
        click.echo(f"[BLOCKED] {result['output']}")
    elif not result["ok"]:
        click.echo(f"[ERROR] {result['output']}")
    elif result["output"]:
        click.echo(result["output"])
    return command != "close"


@main.command()
@click.argument("agent_id")
@click.option("-c", "--command", "one_shot", multiple=True,
              help="Run one command line and exit; repeatable.")
@pass_client
def shell(client: Client, agent_id: str, one_shot: tuple[str, ...]) -> None:
    """Interactive command shell on a live agent.

    Lines look like `dir C:\\Users`, `read C:\\x.txt`, `write PATH DATA`,
    `setkey HIVE KEY VALUE`, `dump lsass.exe`, `usermode ipconfig /all`.
    Prefix a line with `@user ` to take the visible user-space path.
    `close` ends the session.
    """
    if one_shot:
        for line in one_shot:
            if not _run_shell_line(client, agent_id, line):
                break
        return
    click.echo(f"connected to {agent_id}; `close` or Ctrl-D to leave")
    while True:
        try:
            line = input(f"{agent_id}> ").strip()
        except EOFError:
            click.echo("")
            return
        if not line:
            continue
        if line in ("exit", "quit"):
            return
        try:
            if not _run_shell_line(client, agent_id, line):
                return
        except click.UsageError as exc:
            click.echo(f"usage: {exc.message}")


# -- operations ---------------------------------------------------------------


@main.group()
def op() -> None:
    """Run and inspect profile-driven operations."""


@op.command("run")
@click.argument("profile")
@click.option("--guest", "guest_id", default=None, help="Reuse an existing guest.")
@click.option("--av", default=None, help="Security product model to install.")
@click.option("--seed", type=int, default=None)
@click.option("--time", "injection_time", type=float, default=60.0, show_default=True)
@json_option
@pass_client
def op_run(client: Client, profile: str, guest_id: str | None, av: str | None,
           seed: int | None, injection_time: float, as_json: bool) -> None:
    result = client.post(
        "/api/operations",
        {
            "profile": profile,
            "av": av,
            "guest": guest_id,
            "seed": seed,
            "injection_time": injection_time,
        },
    )
    if as_json:
        _dump(result)
    else:
        for action in result["actions"]:
            marker = {
                "executed": "ok",
                "blocked": "BLOCKED",
                "failed": "failed",
                "pending": "-",
            }.get(action["status"], action["status"])
            click.echo(f"  {action['id']:24s} {action['command']:9s} [{marker}]")
        progress = result["progress"]
        shown = progress["exact"] if progress else "n/a"
        click.echo(
            f"{result['id']}  {result['status']}  progress={shown}  "
            f"detections={len(result['detections'])}"
        )
    if result["status"].startswith("injection_") or result["status"] == "agent_lost":
        sys.exit(EXIT_FAILURE)


@op.command("list")
@json_option
@pass_client
def op_list(client: Client, as_json: bool) -> None:
    entries = client.get("/api/operations")
    if as_json:
        _dump(entries)
        return
    if not entries:
        click.echo("no operations")
        return
    for info in entries:
        progress = info["progress"]["exact"] if info["progress"] else "n/a"
        av = info["av"] or "-"
        click.echo(
            f"{info['id']:6s} {info['profile']:14s} av={av:15s} "
            f"{info['status']:18s} progress={progress}"
        )


@op.command("show")
@click.argument("op_id")
@pass_client
def op_show(client: Client, op_id: str) -> None:
    _dump(client.get(f"/api/operations/{op_id}"))


@main.command()
@click.argument("op_id")
@click.option("-o", "--output", "output_path", default=None,
              help="Destination file or directory (default: <op_id>.json).")
@pass_client
def export(client: Client, op_id: str, output_path: str | None) -> None:
    """Write an operation's full record to a JSON file."""
    record = client.get(f"/api/operations/{op_id}")
    path = output_path or f"{op_id}.json"
    if os.path.isdir(path):
        path = os.path.join(path, f"{op_id}.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(record, fh, indent=2, sort_keys=True)
        fh.write("\n")
    click.echo(f"wrote {path}")


# -- metrics and reliability ---------------------------------------------------


@main.command()
@json_option
@pass_client
def metrics(client: Client, as_json: bool) -> None:
    """Show campaign metrics collected so far."""
    summary = client.get("/api/metrics")
    if as_json:
        _dump(summary)
        return
    operations = summary["operations"]
    click.echo("operations:")
    if not operations:
        click.echo("  none")
    for info in operations:
        progress = info["progress"]["exact"] if info["progress"] else "n/a"
        av = info["av"] or "-"
        click.echo(
            f"  {info['id']:6s} {info['profile']:14s} av={av:15s} "
            f"progress={progress:7s} detections={info['detections']}"
        )
    click.echo("reliability:")
    runs = summary["reliability"]["runs"]
    if not runs:
        click.echo("  none")
    for run in runs:
        metric = run["metric"]
        band = metric["band"]
        label = run["label"] or "-"
        click.echo(
            f"  {label:15s} {metric['exact']:8s} at t+{run['injection_time']:.0f}s  "
            f"band=[{band[0]:.2f}, {band[1]:.2f}]"
        )
    overall = summary["reliability"]["overall"]
    if overall:
        click.echo(f"  overall: {overall['exact']} ({overall['value']:.2f})")


@main.group()
def reliability() -> None:
    """Repeated-injection reliability batches."""


@reliability.command("run")
@click.option("--trials", type=int, default=20, show_default=True)
@click.option("--at", "--time", "injection_time", type=float, default=60.0,
              show_default=True, help="Injection time past the login prompt.")
@click.option("--seed", type=int, default=1, show_default=True)
@click.option("--av", "avs", multiple=True,
              help="Label a batch per product model; repeatable.")
@click.option("--label", default="")
@click.option("--sweep", is_flag=True, help="One batch per bundled product model.")
@click.option("--json", "json_path", is_flag=False, flag_value="-", default=None,
              help="Emit the full report as JSON, to stdout or to a file.")
@pass_client
def reliability_run(client: Client, trials: int, injection_time: float, seed: int,
                    avs: tuple[str, ...], label: str, sweep: bool,
                    json_path: str | None) -> None:
    result = client.post(
        "/api/reliability",
        {
            "trials": trials,
            "injection_time": injection_time,
            "seed": seed,
            "label": label,
            "sweep": sweep,
            "avs": list(avs) or None,
        },
    )
    if json_path is not None:
        if json_path == "-":
            _dump(result)
        else:
            with open(json_path, "w", encoding="utf-8") as fh:
                json.dump(result, fh, indent=2, sort_keys=True)
                fh.write("\n")
            click.echo(f"wrote {json_path}")
        return
    reports = result.values() if (sweep or avs) else [result]
    for report in reports:
        metric = report["metric"]
        name = report["label"] or "-"
        click.echo(
            f"{name:15s} {report['successes']}/{report['trials']}  "
            f"band=[{metric['band'][0]:.2f}, {metric['band'][1]:.2f}]"
        )


# -- introspection --------------------------------------------------------------


@main.group()
def vmi() -> None:
    """Kernel symbol profile introspection."""


@vmi.command("show")
@click.argument("symbol", required=False)
@json_option
@pass_client
def vmi_show(client: Client, symbol: str | None, as_json: bool) -> None:
    """Show the symbol table, or one symbol's scan details."""
    info = client.get("/api/vmi")
    if symbol is not None:
        matches = [s for s in info["symbols"] if s["name"] == symbol]
        if not matches:
            click.echo(f"error: no symbol {symbol!r} in profile", err=True)
            sys.exit(EXIT_FAILURE)
        record = matches[0]
        if as_json:
            _dump(record)
            return
        click.echo(f"{record['name']}  (build {info['build_id']})")
        click.echo(f"  page offset: {record['page_offset']:#x}")
        click.echo(f"  size:        {record['size']}")
        click.echo(f"  linear:      {'yes' if record['linear'] else 'no'}")
        click.echo(f"  prefix:      {record['prefix']}")
        return
    if as_json:
        _dump(info)
        return
    click.echo(f"build {info['build_id']}  page_size={info['page_size']}")
    click.echo(f"chosen region: {info['chosen_region']}")
    for record in info["symbols"]:
        mark = "*" if record["linear"] else " "
        callees = ", ".join(record["callees"]) or "-"
        click.echo(
            f" {mark} {record['name']:28s} off={record['page_offset']:5d} "
            f"size={record['size']:5d} calls: {callees}"
        )


@main.group()
def av() -> None:
    """Modeled security products."""


@av.command("list")
@json_option
@pass_client
def av_list(client: Client, as_json: bool) -> None:
    entries = client.get("/api/avs")
    if as_json:
        _dump(entries)
        return
    for info in entries:
        gate = "gate" if info["gate_requires_approval"] else "no-gate"
        click.echo(
            f"{info['name']:16s} rules={len(info['rules'])}  {gate}  "
            f"detections={info['detections']}"
        )


@av.command("show")
@click.argument("name")
@json_option
@pass_client
def av_show(client: Client, name: str, as_json: bool) -> None:
    info = client.get(f"/api/avs/{name}")
    if as_json:
        _dump(info)
        return
    click.echo(f"{info['name']} ({info['display_name']})")
    click.echo(f"  launch gate: {'yes' if info['gate_requires_approval'] else 'no'}")
    click.echo(f"  static signatures: {len(info['static_signatures'])}")
    for rule in info["rules"]:
        target = rule.get("target_pattern") or "any target"
        click.echo(f"  rule {rule['id']}: {rule['category']} ({target})")


@main.group()
def profiles() -> None:
    """Bundled adversary profiles."""


@profiles.command("list")
@json_option
@pass_client
def profiles_list(client: Client, as_json: bool) -> None:
    entries = client.get("/api/profiles")
    if as_json:
        _dump(entries)
        return
    for info in entries:
        commands = ", ".join(info["commands"])
        click.echo(
            f"{info['name']:16s} steps={info['steps']}  commands: {commands}"
        )


if __name__ == "__main__":
    main()
