"""Repeated-injection reliability measurement.

Each trial boots a fresh guest from the same config with its own seed,
waits a fixed interval past the login prompt, runs one injection, and
confirms success with an echo/close round trip through the live agent.
Reliability is the exact success ratio over the batch. Because a trial is
a pure function of (config, seed, timing), whole reports reproduce
bit-for-bit from the same base seed.
"""

from __future__ import annotations

import math
import random
from collections import Counter
from dataclasses import dataclass, field

from .agent import agent_main, make_channel
from .config import GuestConfig
from .errors import ChannelClosedError
from .guest import boot_guest
from .injection import InjectionOutcome, InjectionParams, choose_region, inject
from .metrics import RatioMetric, injection_success
from .protocol import (
    STATUS_OK,
    FrameBuffer,
    Opcode,
    decode_response,
    encode_request,
)
from .vmi import SymbolProfile, generate_profile


@dataclass(slots=True)
class TrialResult:
    index: int
    seed: int
    status: str
    crash_step: int | None
    clock_spent: float

    def to_dict(self) -> dict:
        return {
            "index": self.index,
            "seed": self.seed,
            "status": self.status,
            "crash_step": self.crash_step,
            "clock_spent": self.clock_spent,
        }


@dataclass
class ReliabilityReport:
    trials: int
    injection_time: float
    base_seed: int
    label: str
    results: list[TrialResult] = field(default_factory=list)

    @property
    def successes(self) -> int:
        return sum(1 for r in self.results if r.status == "success")

    @property
    def metric(self) -> RatioMetric:
        return injection_success(self.successes, self.trials)

    @property
    def status_counts(self) -> dict[str, int]:
        return dict(Counter(r.status for r in self.results))

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "trials": self.trials,
            "injection_time": self.injection_time,
            "base_seed": self.base_seed,
            "successes": self.successes,
            "metric": self.metric.to_dict(),
            "statuses": self.status_counts,
            "results": [r.to_dict() for r in self.results],
        }


def trial_seeds(base_seed: int, trials: int) -> list[int]:
    rng = random.Random(base_seed)
    return [rng.randrange(1 << 63) for _ in range(trials)]


def verify_agent_round_trip(guest) -> bool:
    """Send echo then close through the full framed channel and check both
    replies. The queues are preloaded, so the serving loop drains them and
    returns without needing a second thread."""
    client, server = make_channel()
    client.send(encode_request(Opcode.ECHO, {"text": "ping"}))
    client.send(encode_request(Opcode.CLOSE, {}))
    agent_main(guest, server)
    buf = FrameBuffer()
    replies: list[tuple[int, bytes]] = []
    try:
        while len(replies) < 2:
            for body in buf.feed(client.recv(timeout=0.0)):
                replies.append(decode_response(body))
    except ChannelClosedError:
        return False
    return replies == [(STATUS_OK, b"ping"), (STATUS_OK, b"bye")]


def run_single_trial(
    config: GuestConfig,
    seed: int,
    injection_time: float,
    params: InjectionParams | None = None,
    profile: SymbolProfile | None = None,
) -> tuple[InjectionOutcome, bool]:
    """One boot-and-inject trial. Returns the outcome plus whether a live
    agent answered an echo/close round trip afterwards."""
    guest = boot_guest(config, seed)
    guest.fast_forward(config.login_prompt_at + injection_time)
    if profile is None:
        profile = generate_profile(config.kernel_image, config.page_size)
    outcome = inject(guest, profile, params)
    verified = outcome.success and verify_agent_round_trip(guest)
    return outcome, verified


def run_trials(
    config: GuestConfig,
    trials: int = 20,
    injection_time: float = 60.0,
    base_seed: int = 1,
    params: InjectionParams | None = None,
    label: str = "",
) -> ReliabilityReport:
    profile = generate_profile(config.kernel_image, config.page_size)
    report = ReliabilityReport(
        trials=trials,
        injection_time=injection_time,
        base_seed=base_seed,
        label=label,
    )
    for index, seed in enumerate(trial_seeds(base_seed, trials)):
        outcome, verified = run_single_trial(config, seed, injection_time, params, profile)
        status = outcome.status
        if outcome.success and not verified:
            status = "agent_unresponsive"
        report.results.append(
            TrialResult(
                index=index,
                seed=seed,
                status=status,
                crash_step=outcome.crash_step,
                clock_spent=outcome.finished_at - outcome.started_at,
            )
        )
    return report


def expected_success_probability(
    config: GuestConfig,
    injection_time: float,
    params: InjectionParams | None = None,
) -> float:
    """Analytic estimate: probability that no call enters the borrowed
    region during either torn-code window, using the workload rate at the
    moment the injection starts. Exact while both windows sit inside one
    rate regime."""
    params = params or InjectionParams()
    profile = generate_profile(config.kernel_image, config.page_size)
    region = choose_region(profile, params)
    entry_points = [
        fn.name
        for fn in config.kernel_image.functions
        if region.name in config.kernel_image.call_closure(fn.name)
    ]
    clock = config.login_prompt_at + injection_time
    rate = 0.0
    for proc in config.processes:
        weight = sum(proc.targets.get(name, 0.0) for name in entry_points)
        rate += proc.rate_at(clock) * weight
    exposure = params.overwrite_seconds + params.restore_seconds
    return math.exp(-rate * exposure)
