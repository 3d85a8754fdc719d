"""Range manager: guests, agent sessions, operations, and the event feed.

This is the long-running coordinator everything else talks to. It boots
guests, drives injections, keeps one serving thread per live agent, runs
profile-driven operations, and numbers every happening into an event feed
that interfaces can stream or poll.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, field
from pathlib import Path

from . import detection, profiles, reliability
from .agent import FrameBuffer, agent_main, make_channel
from .config import GuestConfig
from .errors import ChannelClosedError, UnknownEntityError
from .guest import GuestMachine, boot_guest
from .injection import InjectionOutcome, InjectionParams, inject
from .metrics import execution_progress, injection_success
from .persistence import EventLog, export_json
from .profiles import FactStore, Plan, Profile, run_extractors
from .protocol import (
    STATUS_BLOCKED,
    STATUS_OK,
    decode_response,
    encode_request,
    opcode_for,
)
from .vmi import SymbolProfile, generate_profile

DEFAULT_OPERATION_SEED = 7
DEFAULT_INJECTION_TIME = 60.0
# An agent silent for longer than this much guest time is listed as lost.
RECONNECT_BUDGET_SECONDS = 600.0
REQUEST_WALL_TIMEOUT = 30.0


@dataclass
class GuestRecord:
    id: str
    guest: GuestMachine
    seed: int
    config_name: str

    def describe(self) -> dict:
        info = self.guest.describe()
        info.update({"id": self.id, "config": self.config_name, "av": getattr(self.guest.av, "name", None)})
        return info


class AgentSession:
    """Client handle for one live agent; requests are serialized."""

    def __init__(self, agent_id: str, guest_record: GuestRecord):
        self.id = agent_id
        self.guest_record = guest_record
        self.state = "connected"
        self.connected_at = guest_record.guest.clock
        self.last_seen = guest_record.guest.clock
        self.history: list[dict] = []
        self._buf = FrameBuffer()
        self._lock = threading.Lock()
        self.client, server = make_channel()
        self._thread = threading.Thread(
            target=agent_main,
            args=(guest_record.guest, server),
            daemon=True,
            name=f"agent-{agent_id}",
        )
        self._thread.start()

    def request(self, command: str, args: dict | None = None, exec_path: str | None = None) -> dict:
        """Send one command and wait for its reply. Raises
        ChannelClosedError when the agent is gone."""
        opcode = opcode_for(command)
        payload = dict(args or {})
        if exec_path is not None:
            payload["exec_path"] = exec_path
        with self._lock:
            if self.state != "connected":
                raise ChannelClosedError(f"agent {self.id} is {self.state}")
            try:
                self.client.send(encode_request(opcode, payload))
                body = self._read_frame()
            except ChannelClosedError:
                self.state = "lost"
                raise
            status, output = decode_response(body)
            guest = self.guest_record.guest
            self.last_seen = guest.clock
            entry = {
                "agent": self.id,
                "command": command,
                "args": payload,
                "status": status,
                "ok": status == STATUS_OK,
                "blocked": status == STATUS_BLOCKED,
                "output": output.decode("utf-8", errors="replace"),
                "clock": guest.clock,
            }
            self.history.append(entry)
            if command == "close":
                self.state = "closed"
            return entry

    def _read_frame(self) -> bytes:
        while True:
            frames = self._buf.feed(self.client.recv(timeout=REQUEST_WALL_TIMEOUT))
            if frames:
                return frames[0]

    def close(self) -> None:
        with self._lock:
            if self.state == "connected":
                try:
                    self.client.send(encode_request(opcode_for("close"), {}))
                except ChannelClosedError:
                    pass
                self.state = "closed"
            self.client.close()

    def describe(self) -> dict:
        guest = self.guest_record.guest
        state = self.state
        if state == "connected":
            if guest.crashed:
                state = "lost"
            elif guest.clock - self.last_seen > RECONNECT_BUDGET_SECONDS:
                state = "stale"
        return {
            "id": self.id,
            "guest": self.guest_record.id,
            "state": state,
            "connected_at": self.connected_at,
            "last_seen": self.last_seen,
            "commands": len(self.history),
        }


@dataclass
class OperationRecord:
    id: str
    profile: Profile
    av_name: str | None
    guest_id: str
    agent_id: str | None
    seed: int
    injection_time: float
    status: str = "running"
    injection: InjectionOutcome | None = None
    plan: Plan | None = None
    facts: FactStore = field(default_factory=FactStore)
    detections: list[dict] = field(default_factory=list)
    started_clock: float = 0.0
    finished_clock: float = 0.0

    @property
    def planned_count(self) -> int:
        return self.plan.planned_count if self.plan else 0

    @property
    def executed_count(self) -> int:
        return self.plan.executed_count if self.plan else 0

    def progress(self):
        return execution_progress(self.executed_count, self.planned_count)

    def to_dict(self, include_actions: bool = True) -> dict:
        doc = {
            "id": self.id,
            "profile": self.profile.name,
            "av": self.av_name,
            "guest": self.guest_id,
            "agent": self.agent_id,
            "seed": self.seed,
            "injection_time": self.injection_time,
            "status": self.status,
            "planned": self.planned_count,
            "executed": self.executed_count,
            "progress": self.progress().to_dict() if self.planned_count else None,
            "detections": list(self.detections),
            "facts": [
                {
                    "name": f.name,
                    "value": f.value,
                    "step": f.step_id,
                    "seq": f.seq,
                }
                for f in self.facts.all()
            ],
            "started_clock": self.started_clock,
            "finished_clock": self.finished_clock,
            "injection": self.injection.to_dict() if self.injection else None,
        }
        if include_actions:
            doc["actions"] = [a.to_dict() for a in self.plan.actions] if self.plan else []
        return doc


class RangeManager:
    def __init__(self, config: GuestConfig | None = None, data_dir: str | Path | None = None):
        self.config = config or GuestConfig.from_fixture("default")
        self.config_name = "default" if config is None else "custom"
        self.data_dir = Path(data_dir) if data_dir is not None else None
        events_path = self.data_dir / "events.jsonl" if self.data_dir else None
        self.events = EventLog(events_path)
        self.guests: dict[str, GuestRecord] = {}
        self.agents: dict[str, AgentSession] = {}
        self.operations: dict[str, OperationRecord] = {}
        self.reliability_reports: list[reliability.ReliabilityReport] = []
        self._symbol_profile: SymbolProfile | None = None
        self._counters = {"guest": 0, "agent": 0, "op": 0}
        self._lock = threading.RLock()

    # -- id and lookup helpers ----------------------------------------------

    def _next_id(self, kind: str, prefix: str) -> str:
        self._counters[kind] += 1
        return f"{prefix}{self._counters[kind]}"

    def guest_record(self, guest_id: str) -> GuestRecord:
        try:
            return self.guests[guest_id]
        except KeyError:
            raise UnknownEntityError(f"no guest {guest_id!r}") from None

    def agent_session(self, agent_id: str) -> AgentSession:
        try:
            return self.agents[agent_id]
        except KeyError:
            raise UnknownEntityError(f"no agent {agent_id!r}") from None

    def operation_record(self, op_id: str) -> OperationRecord:
        try:
            return self.operations[op_id]
        except KeyError:
            raise UnknownEntityError(f"no operation {op_id!r}") from None

    def symbol_profile(self) -> SymbolProfile:
        if self._symbol_profile is None:
            self._symbol_profile = generate_profile(
                self.config.kernel_image, self.config.page_size
            )
        return self._symbol_profile

    # -- guests ---------------------------------------------------------------

    def boot(self, seed: int | None = None, config: GuestConfig | None = None,
             config_name: str | None = None) -> GuestRecord:
        with self._lock:
            guest_id = self._next_id("guest", "g")
            if seed is None:
                seed = DEFAULT_OPERATION_SEED + self._counters["guest"] - 1
            record = GuestRecord(
                id=guest_id,
                guest=boot_guest(config or self.config, seed),
                seed=seed,
                config_name=config_name or (self.config_name if config is None else "custom"),
            )
            self.guests[guest_id] = record
        self.events.emit("guest.booted", record.describe())
        return record

    def install_av(self, guest_id: str, av: str | detection.AvModel | None) -> None:
        record = self.guest_record(guest_id)
        if isinstance(av, detection.AvModel):
            record.guest.av = av
        else:
            record.guest.av = detection.load_av(av) if av else None

    # -- injection and sessions ----------------------------------------------

    def inject(
        self,
        guest_id: str,
        injection_time: float = DEFAULT_INJECTION_TIME,
        params: InjectionParams | None = None,
    ) -> tuple[InjectionOutcome, AgentSession | None]:
        record = self.guest_record(guest_id)
        guest = record.guest
        target_clock = self.config.login_prompt_at + injection_time
        if guest.clock < target_clock:
            guest.fast_forward(target_clock)
        outcome = inject(guest, self.symbol_profile(), params)
        session: AgentSession | None = None
        if outcome.success:
            with self._lock:
                agent_id = self._next_id("agent", "a")
                session = AgentSession(agent_id, record)
                self.agents[agent_id] = session
            self.events.emit("agent.connected", session.describe())
        self.events.emit(
            "injection.completed", {"guest": guest_id, **outcome.to_dict()}
        )
        return outcome, session

    def send_command(
        self,
        agent_id: str,
        command: str,
        args: dict | None = None,
        exec_path: str | None = None,
    ) -> dict:
        session = self.agent_session(agent_id)
        entry = session.request(command, args, exec_path)
        self.events.emit("command.executed", entry)
        return entry

    # -- operations ------------------------------------------------------------

    def run_operation(
        self,
        profile_name: str | Profile,
        av_name: str | detection.AvModel | None = None,
        guest_id: str | None = None,
        seed: int | None = None,
        injection_time: float = DEFAULT_INJECTION_TIME,
        injection_params: InjectionParams | None = None,
    ) -> OperationRecord:
        """Inject into a fresh (or given) guest and walk the profile's plan
        through the agent, extracting facts and honoring detections."""
        profile = (
            profile_name
            if isinstance(profile_name, Profile)
            else profiles.load_profile(profile_name)
        )
        if isinstance(av_name, detection.AvModel):
            av_name, av = av_name.name, av_name
        else:
            av = av_name
        if seed is None:
            seed = DEFAULT_OPERATION_SEED
        if guest_id is None:
            record = self.boot(seed=seed)
        else:
            record = self.guest_record(guest_id)
        self.install_av(record.id, av)

        with self._lock:
            op = OperationRecord(
                id=self._next_id("op", "op"),
                profile=profile,
                av_name=av_name,
                guest_id=record.id,
                agent_id=None,
                seed=record.seed,
                injection_time=injection_time,
            )
            self.operations[op.id] = op
        self.events.emit(
            "operation.started",
            {"id": op.id, "profile": profile.name, "av": av_name, "guest": record.id},
        )

        op.started_clock = record.guest.clock
        op.plan = Plan(profile)
        outcome, session = self.inject(record.id, injection_time, injection_params)
        op.injection = outcome
        if not outcome.success:
            op.plan.halt(op.facts)
            op.status = "injection_" + outcome.status
            op.finished_clock = record.guest.clock
            self._finish_operation(op)
            return op
        op.agent_id = session.id

        while (action := op.plan.next_action(op.facts)) is not None:
            try:
                entry = session.request(
                    action.step.command, action.args, exec_path=action.step.exec_path
                )
            except ChannelClosedError:
                action.status = profiles.STATUS_FAILED
                op.status = "agent_lost"
                op.plan.halt(op.facts)
                break
            action.executed_at = entry["clock"]
            action.output = entry["output"]
            self.events.emit(
                "operation.action",
                {
                    "operation": op.id,
                    "action": action.action_id,
                    "command": action.step.command,
                    "exec_path": action.step.exec_path,
                    "status": entry["status"],
                    "blocked": entry["blocked"],
                },
            )
            if entry["blocked"]:
                action.status = profiles.STATUS_BLOCKED
                event = record.guest.av.log[-1].to_dict() if record.guest.av else None
                action.detection = event
                if event is not None:
                    op.detections.append(event)
                    self.events.emit("detection.raised", {"operation": op.id, **event})
                op.plan.halt(op.facts)
                op.status = "halted"
                break
            if not entry["ok"]:
                action.status = profiles.STATUS_FAILED
                continue
            action.status = profiles.STATUS_EXECUTED
            for fact in run_extractors(action.step, entry["output"], op.facts):
                self.events.emit(
                    "fact.added",
                    {
                        "operation": op.id,
                        "name": fact.name,
                        "value": fact.value,
                        "step": fact.step_id,
                    },
                )
        else:
            op.status = "completed"

        op.finished_clock = record.guest.clock
        self._finish_operation(op)
        return op

    def _finish_operation(self, op: OperationRecord) -> None:
        self.events.emit(
            "operation.completed",
            {
                "id": op.id,
                "status": op.status,
                "planned": op.planned_count,
                "executed": op.executed_count,
                "detections": len(op.detections),
            },
        )
        if self.data_dir is not None:
            export_json(self.data_dir / "operations" / f"{op.id}.json", op.to_dict())

    # -- reliability ------------------------------------------------------------

    def run_reliability(
        self,
        trials: int = 20,
        injection_time: float = DEFAULT_INJECTION_TIME,
        base_seed: int = 1,
        label: str = "",
        params: InjectionParams | None = None,
    ) -> reliability.ReliabilityReport:
        report = reliability.run_trials(
            self.config,
            trials=trials,
            injection_time=injection_time,
            base_seed=base_seed,
            params=params,
            label=label,
        )
        with self._lock:
            self.reliability_reports.append(report)
        self.events.emit(
            "reliability.completed",
            {
                "label": label,
                "trials": trials,
                "successes": report.successes,
                "metric": report.metric.to_dict(),
            },
        )
        if self.data_dir is not None:
            index = len(self.reliability_reports)
            export_json(
                self.data_dir / "reliability" / f"run{index}.json", report.to_dict()
            )
        return report

    def run_reliability_sweep(
        self,
        av_names: list[str] | None = None,
        trials: int = 20,
        injection_time: float = DEFAULT_INJECTION_TIME,
        base_seed: int = 1,
    ) -> dict[str, reliability.ReliabilityReport]:
        """One reliability batch per product model. The product does not
        touch the injection path, so batches differ only by seed."""
        if av_names is None:
            av_names = detection.list_avs()
        reports: dict[str, reliability.ReliabilityReport] = {}
        for index, name in enumerate(av_names):
            reports[name] = self.run_reliability(
                trials=trials,
                injection_time=injection_time,
                base_seed=base_seed + index,
                label=name,
            )
        return reports

    # -- summaries --------------------------------------------------------------

    def metrics_summary(self) -> dict:
        operations = []
        for op in self.operations.values():
            # A run that lost its agent mid-flight has no meaningful
            # progress number; keep it out of the table.
            if op.status == "agent_lost":
                continue
            operations.append(
                {
                    "id": op.id,
                    "profile": op.profile.name,
                    "av": op.av_name,
                    "status": op.status,
                    "planned": op.planned_count,
                    "executed": op.executed_count,
                    "progress": op.progress().to_dict() if op.planned_count else None,
                    "detections": len(op.detections),
                }
            )
        runs = [
            {
                "label": r.label,
                "trials": r.trials,
                "injection_time": r.injection_time,
                "successes": r.successes,
                "metric": r.metric.to_dict(),
            }
            for r in self.reliability_reports
        ]
        total_trials = sum(r.trials for r in self.reliability_reports)
        overall = None
        if total_trials:
            successes = sum(r.successes for r in self.reliability_reports)
            overall = injection_success(successes, total_trials).to_dict()
        return {
            "operations": operations,
            "reliability": {"runs": runs, "overall": overall},
        }

    def shutdown(self) -> None:
        for session in list(self.agents.values()):
            session.close()
