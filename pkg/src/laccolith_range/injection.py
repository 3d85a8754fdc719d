"""Hypervisor-side agent injection.

The injector plants a small first stage inside an existing kernel function,
waits for the guest's own workload to execute it, and then swaps in the full
agent through a memory buffer the first stage allocates. The borrowed
function is restored byte for byte afterwards, so the only lasting footprint
is the agent buffer itself plus a two-byte lock word.

The borrowed function must be a linear region of code: entered only at its
first byte, calling nothing, and contained in a single memory page. The
first constraint is a property of this machine model (executions always
start at a function's entry), the other two are checked here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .errors import HandshakeError, ValidationError
from .guest import CodeBinding, GuestMachine, SyscallEvent, TornCode
from .kernel import derive_bytes
from .vmi import SymbolProfile, SymbolRecord, scan_for_symbol

# Lock word value the first stage leaves behind; later entries that find it
# already set return immediately instead of re-running the payload.
SPINLOCK_COOKIE = 0xDEAD
CONCURRENT_RETURN_VALUE = 0x0BAD

STAGE1_FOOTPRINT = 256
EGG_SIZE = 16
ALLOC_SIZE = 16 * 1024

AGENT_MAGIC = b"LACCOLITH-AGENT\x00"
AGENT_IMAGE_SIZE = 10240

# Writing and restoring the borrowed bytes each takes a short, fixed slice
# of guest time during which a call into the region executes torn code and
# blue-screens the guest. The two slices below are sized so that with the
# stock guest workload, whose off-peak rate of calls into the default region
# is 0.5 per second, an injection succeeds with probability 0.90:
# exp(-0.5 * 2 * ln(10/9)) = 0.9.
DEFAULT_OVERWRITE_SECONDS = math.log(10 / 9)
DEFAULT_RESTORE_SECONDS = math.log(10 / 9)
DEFAULT_POLL_INTERVAL = 0.5
DEFAULT_TIMEOUT = 300.0


@dataclass(frozen=True, slots=True)
class LinearRegion:
    name: str
    page_offset: int
    size: int


@dataclass(slots=True)
class InjectionParams:
    overwrite_seconds: float = DEFAULT_OVERWRITE_SECONDS
    restore_seconds: float = DEFAULT_RESTORE_SECONDS
    poll_interval: float = DEFAULT_POLL_INTERVAL
    timeout: float = DEFAULT_TIMEOUT
    region: str | None = None  # override the automatic region choice


@dataclass(slots=True)
class TimelineStep:
    step: int
    time: float
    label: str

    def to_dict(self) -> dict:
        return {"step": self.step, "time": self.time, "label": self.label}


@dataclass(slots=True)
class InjectionOutcome:
    status: str  # "success" | "crashed" | "timeout"
    region_name: str
    region_paddr: int
    timeline: list[TimelineStep] = field(default_factory=list)
    crash_step: int | None = None
    agent_paddr: int | None = None
    egg: bytes = b""
    saved_bytes: bytes = b""  # original region bytes, kept for the restore
    started_at: float = 0.0
    finished_at: float = 0.0

    @property
    def success(self) -> bool:
        return self.status == "success"

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "region_name": self.region_name,
            "region_paddr": self.region_paddr,
            "timeline": [s.to_dict() for s in self.timeline],
            "crash_step": self.crash_step,
            "agent_paddr": self.agent_paddr,
            "egg": self.egg.hex(),
            "started_at": self.started_at,
            "finished_at": self.finished_at,
        }


def find_linear_regions(profile: SymbolProfile) -> list[LinearRegion]:
    """All profile symbols usable as injection sites, largest first.

    A symbol qualifies when it calls no other function and its body does not
    cross a page boundary.
    """
    regions = [
        LinearRegion(name=s.name, page_offset=s.page_offset, size=s.size)
        for s in profile.symbols
        if not s.callees and s.page_offset + s.size <= profile.page_size
    ]
    regions.sort(key=lambda r: (-r.size, r.name))
    return regions


def agent_image(build_id: str) -> bytes:
    return AGENT_MAGIC + derive_bytes(build_id, "agent-image", AGENT_IMAGE_SIZE - len(AGENT_MAGIC))


def stage1_bytes(build_id: str) -> bytes:
    return derive_bytes(build_id, "stage1-shellcode", STAGE1_FOOTPRINT)


def make_egg(build_id: str, guest_seed: int, sequence: int) -> bytes:
    return derive_bytes(build_id, f"egg/{guest_seed}/{sequence}", EGG_SIZE)


def hunt_egg(guest: GuestMachine, egg: bytes) -> list[int]:
    """Guest-physical addresses where the egg pattern occurs."""
    matches: list[int] = []
    start = 0
    while True:
        idx = guest.phys_mem.find(egg, start)
        if idx < 0:
            return matches
        matches.append(idx)
        start = idx + 1


class Stage1Binding(CodeBinding):
    """Planted first stage: the first caller wins the lock word, allocates a
    buffer, and publishes the egg; every later caller bails out."""

    kind = "stage1"

    def __init__(self, egg: bytes):
        self.egg = egg
        self.won_at: float | None = None
        self.alloc = None

    def on_execute(self, guest: GuestMachine, event: SyscallEvent) -> None:
        if guest.exchange_spinlock(SPINLOCK_COOKIE) == SPINLOCK_COOKIE:
            event.status = "concurrent_return"
            event.retval = CONCURRENT_RETURN_VALUE
            return
        event.status = "stage1_won"
        self.alloc = guest.allocate_contiguous(ALLOC_SIZE, label="agent-buffer")
        guest.write_phys(self.alloc.paddr, self.egg)
        self.won_at = event.time


def choose_region(profile: SymbolProfile, params: InjectionParams) -> LinearRegion:
    regions = [r for r in find_linear_regions(profile) if r.size >= STAGE1_FOOTPRINT]
    if params.region is not None:
        for region in regions:
            if region.name == params.region:
                return region
        raise ValidationError(f"{params.region!r} is not a usable injection region")
    if not regions:
        raise ValidationError("kernel build exposes no usable injection region")
    return regions[0]


def locate_region(guest: GuestMachine, record: SymbolRecord) -> int:
    matches = scan_for_symbol(guest, record)
    if len(matches) != 1:
        raise ValidationError(
            f"expected one copy of {record.name!r} in guest memory, found {len(matches)}"
        )
    return matches[0]


def inject(
    guest: GuestMachine,
    profile: SymbolProfile,
    params: InjectionParams | None = None,
) -> InjectionOutcome:
    """Run the full injection chain against a booted guest at its current
    clock. Returns the outcome with a step-by-step timeline; a crashed guest
    stays crashed.
    """
    params = params or InjectionParams()
    guest.require_running()
    profile.validate_against(guest.kernel_image)
    region = choose_region(profile, params)
    record = profile.symbol(region.name)
    build_id = guest.kernel_image.build_id

    guest.injection_count += 1
    egg = make_egg(build_id, guest.seed, guest.injection_count)
    # Pre-flight: an egg value already present in memory could never be
    # hunted down unambiguously later.
    if hunt_egg(guest, egg):
        raise HandshakeError("egg value already occurs in guest memory")

    # Step 1: find the region's physical address by its code prefix.
    region_paddr = locate_region(guest, record)
    outcome = InjectionOutcome(
        status="in_progress",
        region_name=region.name,
        region_paddr=region_paddr,
        egg=egg,
        started_at=guest.clock,
    )
    outcome.timeline.append(
        TimelineStep(1, guest.clock, f"located {region.name} at {region_paddr:#x}")
    )

    original = guest.read_phys(region_paddr, region.size)
    outcome.saved_bytes = original
    stage1 = Stage1Binding(egg)

    # Step 2: write the first stage over the region. Calls that land while
    # the bytes are half-written execute garbage.
    guest.bind_code(region.name, TornCode())
    guest.step(params.overwrite_seconds)
    if guest.crashed:
        return _crashed(guest, outcome, step=2, label="guest crashed during overwrite")
    guest.write_phys(region_paddr, stage1_bytes(build_id)[: region.size])
    guest.bind_code(region.name, stage1)
    outcome.timeline.append(
        TimelineStep(2, guest.clock, "wrote first-stage shellcode over region")
    )

    # Steps 3 and 4 happen inside the guest when its workload next calls the
    # region; the injector just lets time pass and polls.
    deadline = guest.clock + params.timeout
    while stage1.won_at is None:
        if guest.clock >= deadline:
            guest.write_phys(region_paddr, original)
            guest.unbind_code(region.name)
            outcome.status = "timeout"
            outcome.finished_at = guest.clock
            return outcome
        guest.step(min(params.poll_interval, deadline - guest.clock))
    outcome.timeline.append(
        TimelineStep(3, stage1.won_at, "first stage won the entry lock")
    )
    outcome.timeline.append(
        TimelineStep(4, stage1.won_at, "first stage allocated a buffer and wrote the egg")
    )

    # Step 5: the injector's next poll sees the egg, hunts it down in
    # physical memory, and replaces it with the agent image.
    _advance_to(guest, stage1.won_at + params.poll_interval)
    matches = hunt_egg(guest, egg)
    if len(matches) != 1:
        raise HandshakeError(f"egg hunt found {len(matches)} matches, expected 1")
    agent_paddr = matches[0]
    guest.write_phys(agent_paddr, agent_image(build_id))
    outcome.agent_paddr = agent_paddr
    outcome.timeline.append(
        TimelineStep(5, guest.clock, f"found egg and wrote agent image at {agent_paddr:#x}")
    )

    # Steps 6 and 7: the first stage notices the egg is gone and hands the
    # buffer to a fresh kernel thread.
    _advance_to(guest, guest.clock + params.poll_interval)
    guest.agent_entry = agent_paddr
    outcome.timeline.append(
        TimelineStep(6, guest.clock, "first stage spawned a kernel thread")
    )
    outcome.timeline.append(TimelineStep(7, guest.clock, "agent thread running"))

    # Step 8: put the original bytes back. Same torn-code hazard as step 2.
    guest.bind_code(region.name, TornCode())
    guest.step(params.restore_seconds)
    if guest.crashed:
        return _crashed(guest, outcome, step=8, label="guest crashed during restore")
    guest.write_phys(region_paddr, original)
    guest.unbind_code(region.name)
    outcome.timeline.append(
        TimelineStep(8, guest.clock, "restored original region bytes")
    )

    outcome.status = "success"
    outcome.finished_at = guest.clock
    return outcome


def _advance_to(guest: GuestMachine, target: float) -> None:
    if guest.clock < target:
        guest.step(target - guest.clock)


def _crashed(
    guest: GuestMachine, outcome: InjectionOutcome, step: int, label: str
) -> InjectionOutcome:
    outcome.status = "crashed"
    outcome.crash_step = step
    outcome.timeline.append(TimelineStep(step, guest.clock, label))
    outcome.finished_at = guest.clock
    return outcome
