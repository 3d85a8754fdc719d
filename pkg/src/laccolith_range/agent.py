"""In-guest agent: command execution semantics and the serving loop.

The agent lives in kernel memory, so its built-in commands act on guest
resources directly and never cross the hook points a user-space security
product watches. The one exception is `usermode`, which spawns a visible
helper process to run classic network discovery commands; those executions
take the user path on purpose, because some reconnaissance output only
exists up there.

Every primitive action the agent performs is recorded as an ActionTrace on
the guest. User-path traces are shown to the installed security product
before their effect is applied; a match blocks the action.
"""

from __future__ import annotations

import queue
import threading
from dataclasses import dataclass, field

from .errors import ChannelClosedError, ValidationError
from .guest import GuestMachine
from .protocol import (
    STATUS_BLOCKED,
    STATUS_ERROR,
    STATUS_OK,
    FrameBuffer,
    Opcode,
    decode_request,
    encode_response,
)

AGENT_VERSION = "Laccolith agent 1.0.0 (kernel mode)"

# Fixed virtual-time cost per served command; moves the guest clock without
# touching its workload randomness.
COMMAND_SECONDS = 0.25

KERNEL_PATH = "kernel"
USER_PATH = "user"

USERMODE_COMMANDS = ("ipconfig", "arp", "nbtstat", "net")


@dataclass(slots=True)
class ActionTrace:
    time: float
    path: str
    category: str
    target: str
    pid: int | None = None
    blocked: bool = False

    def to_dict(self) -> dict:
        return {
            "time": self.time,
            "path": self.path,
            "category": self.category,
            "target": self.target,
            "pid": self.pid,
            "blocked": self.blocked,
        }


@dataclass(slots=True)
class CommandResult:
    status: int
    output: bytes
    traces: list[ActionTrace] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.status == STATUS_OK

    @property
    def blocked(self) -> bool:
        return self.status == STATUS_BLOCKED


class ChannelEnd:
    """One side of an in-memory duplex byte channel."""

    def __init__(self, outgoing: queue.Queue, incoming: queue.Queue):
        self._out = outgoing
        self._in = incoming
        self._closed = threading.Event()

    def send(self, data: bytes) -> None:
        if self._closed.is_set():
            raise ChannelClosedError("channel is closed")
        self._out.put(data)

    def recv(self, timeout: float | None = None) -> bytes:
        if self._closed.is_set() and self._in.empty():
            raise ChannelClosedError("channel is closed")
        try:
            item = self._in.get(timeout=timeout)
        except queue.Empty:
            raise ChannelClosedError("receive timed out") from None
        if item is None:
            self._closed.set()
            raise ChannelClosedError("peer closed the channel")
        return item

    def close(self) -> None:
        if not self._closed.is_set():
            self._closed.set()
            self._out.put(None)

    @property
    def closed(self) -> bool:
        return self._closed.is_set()


def make_channel() -> tuple[ChannelEnd, ChannelEnd]:
    """Returns (client end, agent end)."""
    a_to_b: queue.Queue = queue.Queue()
    b_to_a: queue.Queue = queue.Queue()
    return ChannelEnd(a_to_b, b_to_a), ChannelEnd(b_to_a, a_to_b)


def execute_command(guest: GuestMachine, opcode: Opcode, args: dict) -> CommandResult:
    """Apply one agent command to the guest, honoring the security product's
    user-path hooks. Returns the raw result; traces are also appended to
    guest.trace_log."""
    if guest.crashed:
        return CommandResult(STATUS_ERROR, b"guest has crashed")
    guest.fast_forward(guest.clock + COMMAND_SECONDS)

    try:
        handler = _HANDLERS[opcode]
    except KeyError:
        return CommandResult(STATUS_ERROR, f"unhandled opcode {opcode!r}".encode())
    try:
        result = handler(guest, args)
    except ValidationError as exc:
        result = CommandResult(STATUS_ERROR, str(exc).encode())
    guest.trace_log.extend(result.traces)
    return result


def _exec_path(args: dict) -> str:
    path = args.get("exec_path", KERNEL_PATH)
    if path not in (KERNEL_PATH, USER_PATH):
        raise ValidationError(f"exec_path must be 'kernel' or 'user', got {path!r}")
    return path


def _gate(guest: GuestMachine, traces: list[ActionTrace]) -> CommandResult | None:
    """Show user-path traces to the installed security product, in order.
    Returns a blocked result at the first match, else None."""
    av = getattr(guest, "av", None)
    for trace in traces:
        if trace.path != USER_PATH or av is None:
            continue
        event = av.inspect(trace)
        if event is not None:
            trace.blocked = True
            message = f"blocked by {av.name}: {event.rule}"
            return CommandResult(STATUS_BLOCKED, message.encode(), traces)
    return None


def _do_echo(guest: GuestMachine, args: dict) -> CommandResult:
    text = str(args.get("text", ""))
    return CommandResult(STATUS_OK, text.encode())


def _do_version(guest: GuestMachine, args: dict) -> CommandResult:
    path = _exec_path(args)
    traces = [ActionTrace(guest.clock, path, "sys.info", "agent")]
    blocked = _gate(guest, traces)
    if blocked:
        return blocked
    text = f"{AGENT_VERSION} on {guest.kernel_image.build_id}"
    return CommandResult(STATUS_OK, text.encode(), traces)


def _do_dir(guest: GuestMachine, args: dict) -> CommandResult:
    path = _exec_path(args)
    target = str(args.get("path", "C:\\"))
    traces = [ActionTrace(guest.clock, path, "fs.list", target)]
    blocked = _gate(guest, traces)
    if blocked:
        return blocked
    try:
        dirs, files = guest.filesystem.list_dir(target)
    except FileNotFoundError:
        return CommandResult(STATUS_ERROR, f"path not found: {target}".encode(), traces)
    lines = [f" Directory of {target}", ""]
    lines += [f"    <DIR>          {name}" for name in dirs]
    lines += [f"                   {name}" for name in files]
    return CommandResult(STATUS_OK, "\n".join(lines).encode(), traces)


def _do_read(guest: GuestMachine, args: dict) -> CommandResult:
    path = _exec_path(args)
    target = str(args.get("path", ""))
    traces = [ActionTrace(guest.clock, path, "fs.read", target)]
    blocked = _gate(guest, traces)
    if blocked:
        return blocked
    try:
        data = guest.filesystem.read(target)
    except FileNotFoundError:
        return CommandResult(STATUS_ERROR, f"file not found: {target}".encode(), traces)
    return CommandResult(STATUS_OK, data, traces)


def _do_write(guest: GuestMachine, args: dict) -> CommandResult:
    path = _exec_path(args)
    target = str(args.get("path", ""))
    if not target:
        raise ValidationError("write requires a path")
    data = str(args.get("data", "")).encode()
    traces = [ActionTrace(guest.clock, path, "fs.write", target)]
    blocked = _gate(guest, traces)
    if blocked:
        return blocked
    guest.filesystem.write(target, data)
    return CommandResult(STATUS_OK, f"wrote {len(data)} bytes".encode(), traces)


def _do_setkey(guest: GuestMachine, args: dict) -> CommandResult:
    path = _exec_path(args)
    hive = str(args.get("hive", "HKLM"))
    key = str(args.get("key", ""))
    value = str(args.get("value", ""))
    if not key:
        raise ValidationError("setkey requires a key")
    traces = [ActionTrace(guest.clock, path, "registry.write", f"{hive}\\{key}")]
    blocked = _gate(guest, traces)
    if blocked:
        return blocked
    try:
        guest.registry.set_value(hive, key, value)
    except KeyError:
        return CommandResult(STATUS_ERROR, f"no such hive: {hive}".encode(), traces)
    return CommandResult(STATUS_OK, f"{hive}\\{key} = {value}".encode(), traces)


def _do_dump(guest: GuestMachine, args: dict) -> CommandResult:
    path = _exec_path(args)
    name = args.get("process")
    if not name:
        raise ValidationError("dump requires a process name")
    proc = guest.process_table.by_name(str(name))
    if proc is None:
        return CommandResult(STATUS_ERROR, f"no such process: {name}".encode())
    traces = [ActionTrace(guest.clock, path, "memory.dump", proc.name, pid=proc.pid)]
    if proc.name.lower().startswith("lsass"):
        traces.append(
            ActionTrace(guest.clock, path, "credential_dump", proc.name, pid=proc.pid)
        )
    blocked = _gate(guest, traces)
    if blocked:
        return blocked
    return CommandResult(STATUS_OK, proc.memory, traces)


def _do_usermode(guest: GuestMachine, args: dict) -> CommandResult:
    command = str(args.get("command", "")).strip()
    if not command:
        raise ValidationError("usermode requires a command")
    tool = command.split()[0].lower()
    if tool not in USERMODE_COMMANDS:
        raise ValidationError(f"unsupported user-mode command {tool!r}")
    traces = [
        ActionTrace(guest.clock, USER_PATH, "process.spawn", f"{tool}.exe"),
        ActionTrace(guest.clock, USER_PATH, "discovery.net", command),
    ]
    blocked = _gate(guest, traces)
    if blocked:
        return blocked
    output = render_usermode(guest, command)
    return CommandResult(STATUS_OK, output.encode(), traces)


_HANDLERS = {
    Opcode.ECHO: _do_echo,
    Opcode.VERSION: _do_version,
    Opcode.DIR: _do_dir,
    Opcode.READ: _do_read,
    Opcode.WRITE: _do_write,
    Opcode.SETKEY: _do_setkey,
    Opcode.DUMP: _do_dump,
    Opcode.USERMODE: _do_usermode,
}


# -- user-mode command output rendering --------------------------------------


def render_usermode(guest: GuestMachine, command: str) -> str:
    parts = command.split()
    tool = parts[0].lower()
    if tool == "ipconfig":
        return _render_ipconfig(guest)
    if tool == "arp":
        return _render_arp(guest)
    if tool == "nbtstat":
        target = parts[-1] if len(parts) > 1 else ""
        return _render_nbtstat(guest, target)
    if tool == "net":
        if len(parts) >= 3 and parts[1].lower() == "view":
            return _render_net_view(guest, parts[2])
        raise ValidationError(f"unsupported net subcommand in {command!r}")
    raise ValidationError(f"unsupported user-mode command {tool!r}")


def _netbios_enabled(guest: GuestMachine, hostname: str) -> bool:
    enabled = {name.lower() for name in guest.network.smb_enabled}
    return hostname.lower() in enabled


def _render_ipconfig(guest: GuestMachine) -> str:
    net = guest.network
    me = net.self_host()
    gateway = ""
    for ip in net.arp_cache:
        host = net.host_by_ip(ip)
        if host is not None and host.name.lower() == "gateway":
            gateway = host.ip
            break
    netbios = "Enabled" if _netbios_enabled(guest, net.hostname) else "Disabled"
    return "\n".join(
        [
            "Windows IP Configuration",
            "",
            f"   Host Name . . . . . . . . . . . . : {net.hostname}",
            "   Node Type . . . . . . . . . . . . : Hybrid",
            "",
            "Ethernet adapter Ethernet0:",
            "",
            f"   Physical Address. . . . . . . . . : {me.mac}",
            f"   IPv4 Address. . . . . . . . . . . : {me.ip}",
            "   Subnet Mask . . . . . . . . . . . : 255.255.255.0",
            f"   Default Gateway . . . . . . . . . : {gateway}",
            f"   NetBIOS over Tcpip. . . . . . . . : {netbios}",
        ]
    )


def _render_arp(guest: GuestMachine) -> str:
    net = guest.network
    me = net.self_host()
    lines = [
        f"Interface: {me.ip} --- 0x6",
        "  Internet Address      Physical Address      Type",
    ]
    for ip in net.arp_cache:
        host = net.host_by_ip(ip)
        mac = host.mac.lower().replace(":", "-") if host else "00-00-00-00-00-00"
        lines.append(f"  {ip:<21} {mac:<21} dynamic")
    return "\n".join(lines)


def _render_nbtstat(guest: GuestMachine, target_ip: str) -> str:
    net = guest.network
    host = net.host_by_ip(target_ip)
    if host is None or not _netbios_enabled(guest, host.name):
        return "Host not found."
    name = host.name.upper()
    return "\n".join(
        [
            "Ethernet0:",
            f"Node IpAddress: [{target_ip}] Scope Id: []",
            "",
            "           NetBIOS Remote Machine Name Table",
            "",
            "       Name               Type         Status",
            "    ---------------------------------------------",
            f"    {name:<15}<00>  UNIQUE      Registered",
            f"    {name:<15}<20>  UNIQUE      Registered",
            "    WORKGROUP      <00>  GROUP       Registered",
            "",
            f"    MAC Address = {host.mac.upper().replace(':', '-')}",
        ]
    )


def _render_net_view(guest: GuestMachine, target: str) -> str:
    name = target.lstrip("\\")
    host = guest.network.host_by_name(name)
    if host is None:
        return "System error 53 has occurred.\n\nThe network path was not found."
    lines = [
        f"Shared resources at \\\\{host.name}",
        "",
        "Share name  Type  Used as  Comment",
        "",
        "-------------------------------------------------------------------------------",
    ]
    for share in host.shares:
        lines.append(f"{share:<11} Disk")
    lines.append("The command completed successfully.")
    return "\n".join(lines)


# -- serving loop -------------------------------------------------------------


def agent_main(guest: GuestMachine, channel: ChannelEnd) -> None:
    """Serve framed requests until the channel closes or a close command
    arrives. A malformed request gets an error response; the loop survives.
    """
    buf = FrameBuffer()
    while True:
        try:
            data = channel.recv()
        except ChannelClosedError:
            return
        try:
            frames = buf.feed(data)
        except ValidationError:
            # Oversized frame: the stream cannot be resynchronized.
            channel.close()
            return
        for body in frames:
            try:
                opcode, args = decode_request(body)
            except ValidationError as exc:
                channel.send(encode_response(STATUS_ERROR, str(exc).encode()))
                continue
            if opcode is Opcode.CLOSE:
                channel.send(encode_response(STATUS_OK, b"bye"))
                channel.close()
                return
            result = execute_command(guest, opcode, args)
            try:
                channel.send(encode_response(result.status, result.output))
            except ChannelClosedError:
                return
