"""Request and response bodies for the HTTP API."""

from __future__ import annotations

from pydantic import BaseModel, Field


class BootRequest(BaseModel):
    seed: int | None = None
    config: str | None = None  # bundled guest config name


class GuestInfo(BaseModel):
    id: str
    config: str
    seed: int
    build_id: str
    clock: float
    crashed: bool
    crash_reason: str | None
    kernel_base: str
    page_size: int
    frame_count: int
    agent_loaded: bool
    av: str | None


class InjectRequest(BaseModel):
    injection_time: float = 60.0
    overwrite_seconds: float | None = None
    restore_seconds: float | None = None
    poll_interval: float | None = None
    timeout: float | None = None
    region: str | None = None


class TimelineStepOut(BaseModel):
    step: int
    time: float
    label: str


class InjectResponse(BaseModel):
    guest: str
    agent: str | None
    status: str
    region_name: str
    region_paddr: int
    timeline: list[TimelineStepOut]
    crash_step: int | None
    agent_paddr: int | None
    egg: str
    started_at: float
    finished_at: float


class AgentInfo(BaseModel):
    id: str
    guest: str
    state: str
    connected_at: float
    last_seen: float
    commands: int


class CommandRequest(BaseModel):
    command: str
    args: dict = Field(default_factory=dict)
    exec_path: str | None = None


class CommandResponse(BaseModel):
    agent: str
    command: str
    args: dict
    status: int
    ok: bool
    blocked: bool
    output: str
    clock: float


class MetricOut(BaseModel):
    numerator: int
    denominator: int
    exact: str
    value: float
    margin: float
    band: list[float]


class OperationRequest(BaseModel):
    profile: str
    av: str | None = None
    guest: str | None = None
    seed: int | None = None
    injection_time: float = 60.0


class OperationSummary(BaseModel):
    id: str
    profile: str
    av: str | None
    status: str
    planned: int
    executed: int
    progress: MetricOut | None
    detections: int


class ReliabilityRequest(BaseModel):
    trials: int = 20
    injection_time: float = 60.0
    seed: int = 1
    label: str = ""
    sweep: bool = False  # one batch per bundled product model
    avs: list[str] | None = None


class ReliabilityRunOut(BaseModel):
    label: str
    trials: int
    injection_time: float
    successes: int
    metric: MetricOut


class FactOut(BaseModel):
    name: str
    value: str
    step: str
    seq: int


class EventOut(BaseModel):
    seq: int
    ts: str
    kind: str
    data: dict


class ProfileInfo(BaseModel):
    name: str
    display_name: str
    description: str
    steps: int
    commands: list[str]


class AvInfo(BaseModel):
    name: str
    display_name: str
    gate_requires_approval: bool
    rules: list[dict]
    static_signatures: list[str]
    detections: int


class SymbolOut(BaseModel):
    name: str
    page_offset: int
    size: int
    prefix: str
    callees: list[str]
    linear: bool


class VmiInfo(BaseModel):
    build_id: str
    page_size: int
    symbols: list[SymbolOut]
    chosen_region: str
