"""End-to-end acceptance gate.

One test per headline behavior, each with an explicit wall-clock budget:
exact metric arithmetic, the four clean campaign profiles, the user-space
baseline contrast, timing-sensitive injection reliability, the injection
chain invariants over a large seed sweep, the region-finder oracle, and
the structural invisibility of kernel-path actions.
"""

import math
import random
import time
from fractions import Fraction

import pytest

from laccolith_range import reliability
from laccolith_range.config import GuestConfig
from laccolith_range.detection import (
    EVASION_SUCCESS_PROBABILITY,
    list_avs,
    load_av,
    run_deployment_trials,
)
from laccolith_range.errors import HandshakeError
from laccolith_range.guest import boot_guest
from laccolith_range.injection import (
    ALLOC_SIZE,
    find_linear_regions,
    inject,
    make_egg,
)
from laccolith_range.kernel import KernelImage
from laccolith_range.manager import RangeManager
from laccolith_range.metrics import execution_progress, injection_success
from laccolith_range.profiles import Profile, load_profile
from laccolith_range.vmi import generate_profile

PAGE = 4096

PROFILE_TABLE = {
    "thief": "3/3",
    "op-2": "4/4",
    "ransomware": "5/5",
    "shares-hunter": "7/7",
}


def test_metric_formulas_are_exact():
    started = time.monotonic()

    progress = execution_progress(7, 10)
    assert progress.value == Fraction(7, 10)
    assert str(progress) == "7/10"

    success = injection_success(90, 100)
    assert success.value == Fraction(9, 10)
    assert success.margin == 0.1
    assert success.band == (0.8, 1.0)
    assert success.to_dict()["exact"] == "90/100"

    assert time.monotonic() - started < 1.0


def test_profile_table_clean_against_every_product():
    started = time.monotonic()
    manager = RangeManager()
    try:
        for av_name in list_avs():
            for profile_name, expected in PROFILE_TABLE.items():
                op = manager.run_operation(profile_name, av_name=av_name)
                assert op.status == "completed", (profile_name, av_name)
                assert str(op.progress()) == expected, (profile_name, av_name)
                assert op.detections == [], (profile_name, av_name)
                guest = manager.guest_record(op.guest_id).guest
                assert guest.av.log == [], (profile_name, av_name)
    finally:
        manager.shutdown()
    assert time.monotonic() - started < 10.0


def test_usermode_baseline_blocked_but_evasion_lands_a_quarter():
    started = time.monotonic()

    for av_name in list_avs():
        outcomes = run_deployment_trials(
            load_av(av_name), trials=20, seed=3, evaded=False
        )
        assert sum(o.success for o in outcomes) == 0, av_name
        assert all(o.stage == "static_scan" for o in outcomes), av_name

    trials = 400
    outcomes = run_deployment_trials(
        load_av("defender-like"), trials=trials, seed=11, evaded=True
    )
    rate = sum(o.success for o in outcomes) / trials
    assert abs(rate - EVASION_SUCCESS_PROBABILITY) <= 1.0 / math.sqrt(trials)

    assert time.monotonic() - started < 30.0


def test_reliability_rates_and_timing_sensitivity():
    started = time.monotonic()
    manager = RangeManager()
    try:
        reports = manager.run_reliability_sweep(trials=20)
    finally:
        manager.shutdown()
    assert len(reports) == 5
    overall = sum(r.successes for r in reports.values())
    assert 80 <= overall <= 100

    rates = [r.successes / r.trials for r in reports.values()]
    limit = 2.0 / math.sqrt(20)
    for i, a in enumerate(rates):
        for b in rates[i + 1:]:
            assert abs(a - b) <= limit

    config = GuestConfig.from_fixture("default")
    early = reliability.run_trials(config, trials=200, injection_time=10.0,
                                   base_seed=101)
    late = reliability.run_trials(config, trials=200, injection_time=60.0,
                                  base_seed=101)
    assert early.successes < late.successes

    assert time.monotonic() - started < 120.0


def test_injection_chain_invariants_over_thousand_seeds():
    started = time.monotonic()
    config = GuestConfig.from_fixture("default")
    profile = generate_profile(config.kernel_image, config.page_size)
    target_clock = config.login_prompt_at + 60.0
    region_size = config.kernel_image.function("MmQueryVirtualMemory").size

    successes = 0
    for seed in range(1000):
        guest = boot_guest(config, seed)
        guest.fast_forward(target_clock)
        outcome = inject(guest, profile)

        buffers = [a for a in guest.allocations if a.label == "agent-buffer"]
        if outcome.status == "success":
            successes += 1
            assert [s.step for s in outcome.timeline] == [1, 2, 3, 4, 5, 6, 7, 8]
            times = [s.time for s in outcome.timeline]
            assert times == sorted(times)
            # Exactly-once stage 1: one buffer, one egg, one agent.
            assert len(buffers) == 1
            assert guest.read_phys(outcome.region_paddr, region_size) == \
                outcome.saved_bytes
            agent_span = (outcome.agent_paddr, outcome.agent_paddr + ALLOC_SIZE)
            for begin, end in guest.memory_diff():
                inside_agent = agent_span[0] <= begin and end <= agent_span[1]
                inside_lock = begin < PAGE  # spinlock cell page
                assert inside_agent or inside_lock, (seed, begin, end)
        else:
            assert outcome.status == "crashed"
            assert outcome.crash_step in (2, 8)
            if outcome.crash_step == 2:
                assert buffers == []  # stage 1 never ran

    assert successes >= 800  # calibrated to roughly nine in ten

    # Egg collision refusal: a pre-seeded egg value stops the chain cold.
    guest = boot_guest(config, seed=7)
    guest.fast_forward(target_clock)
    guest.write_phys(0x3000, make_egg(config.kernel_image.build_id, 7, 1))
    poisoned = bytes(guest.phys_mem)
    with pytest.raises(HandshakeError):
        inject(guest, profile)
    assert bytes(guest.phys_mem) == poisoned

    assert time.monotonic() - started < 120.0


def test_region_finder_matches_bruteforce_over_random_images():
    started = time.monotonic()
    rng = random.Random(987123)
    for trial in range(500):
        functions = []
        cursor = rng.randrange(0, 2 * PAGE)
        for i in range(rng.randrange(1, 201)):
            roll = rng.random()
            if roll < 0.1:
                # Boundary case: run exactly to the end of the page.
                size = PAGE - (cursor % PAGE)
            elif roll < 0.15:
                # Boundary case: a whole page, sometimes aligned.
                if rng.random() < 0.5:
                    cursor += (-cursor) % PAGE
                size = PAGE
            else:
                size = rng.randrange(16, 6000)
            callees = []
            if functions and rng.random() < 0.35:
                callees = [rng.choice(functions)[0]]
            functions.append((f"fn{trial}_{i}", cursor, size, callees))
            cursor += size + rng.randrange(0, 256)

        image = KernelImage.from_dict({
            "build_id": f"rand-{trial}",
            "functions": [
                {"name": n, "rel_offset": o, "size": s, "callees": c}
                for n, o, s, c in functions
            ],
        })
        profile = generate_profile(image, PAGE)
        expected = sorted(
            (
                (name, size)
                for name, offset, size, callees in functions
                if not callees and (offset % PAGE) + size <= PAGE
            ),
            key=lambda item: (-item[1], item[0]),
        )
        got = [(r.name, r.size) for r in find_linear_regions(profile)]
        assert got == expected, trial

    assert time.monotonic() - started < 30.0


def test_kernel_path_is_invisible_and_one_user_flip_is_caught():
    started = time.monotonic()

    manager = RangeManager()
    try:
        for av_name in list_avs():
            op = manager.run_operation("op-2", av_name=av_name)
            guest = manager.guest_record(op.guest_id).guest
            assert guest.av.log == [], av_name
            assert op.detections == [], av_name

        flipped = load_profile("op-2").to_dict()
        assert flipped["steps"][3]["command"] == "dump"
        flipped["steps"][3]["exec_path"] = "user"
        op = manager.run_operation(
            Profile.from_dict(flipped), av_name="defender-like"
        )
        assert op.status == "halted"
        guest = manager.guest_record(op.guest_id).guest
        assert len(guest.av.log) == 1
        assert len(op.detections) == 1
        actions = [a.to_dict() for a in op.plan.actions]
        assert [a["status"] for a in actions] == \
            ["executed", "executed", "executed", "blocked"]
        assert op.detections[0]["category"] == "credential_dump"
    finally:
        manager.shutdown()

    assert time.monotonic() - started < 10.0
