"""The eight-step agent load: region selection, the exactly-once first
stage, the egg handshake, and the byte-exact restore."""

import random

import pytest

from laccolith_range.config import GuestConfig
from laccolith_range.errors import (
    GuestCrashedError,
    HandshakeError,
    ValidationError,
)
from laccolith_range.guest import SyscallEvent, boot_guest
from laccolith_range.injection import (
    AGENT_MAGIC,
    ALLOC_SIZE,
    CONCURRENT_RETURN_VALUE,
    SPINLOCK_COOKIE,
    STAGE1_FOOTPRINT,
    InjectionParams,
    Stage1Binding,
    choose_region,
    find_linear_regions,
    hunt_egg,
    inject,
    make_egg,
)
from laccolith_range.kernel import KernelImage
from laccolith_range.vmi import generate_profile

PAGE = 4096


def profile_for(functions, page_size=PAGE, build_id="synth"):
    image = KernelImage.from_dict({
        "build_id": build_id,
        "functions": [
            {"name": n, "rel_offset": o, "size": s, "callees": list(c)}
            for n, o, s, c in functions
        ],
    })
    return generate_profile(image, page_size)


def linear_names(profile):
    return [r.name for r in find_linear_regions(profile)]


# -- region finding ------------------------------------------------------------


def test_large_leaf_within_page_qualifies():
    profile = profile_for([("big_leaf", 0x40, 3800, ())])
    assert linear_names(profile) == ["big_leaf"]


def test_function_with_callee_excluded():
    profile = profile_for([
        ("caller", 0, 500, ("leaf",)),
        ("leaf", 1024, 500, ()),
    ])
    assert linear_names(profile) == ["leaf"]


def test_page_straddler_excluded():
    profile = profile_for([("straddler", PAGE - 100, 200, ())])
    assert linear_names(profile) == []


def test_size_exactly_to_page_edge_qualifies():
    profile = profile_for([("edge", PAGE - 200, 200, ())])
    assert linear_names(profile) == ["edge"]


def test_page_sized_function_at_offset_zero_qualifies():
    profile = profile_for([("whole_page", PAGE, PAGE, ())])
    assert linear_names(profile) == ["whole_page"]


def test_page_sized_function_off_alignment_excluded():
    profile = profile_for([("shifted", PAGE + 8, PAGE, ())])
    assert linear_names(profile) == []


def test_regions_sorted_largest_first():
    profile = profile_for([
        ("small", 0, 300, ()),
        ("large", 4096, 2000, ()),
        ("mid", 8192, 900, ()),
    ])
    assert linear_names(profile) == ["large", "mid", "small"]


def test_default_image_region_ordering(default_profile):
    names = linear_names(default_profile)
    weights = {r.name: r.size for r in find_linear_regions(default_profile)}
    assert names[0] == "MmQueryVirtualMemory"
    assert weights["MmQueryVirtualMemory"] == 3800
    assert names.index("MiCreateSection") < names.index("MiMapViewOfSection")


def test_matches_bruteforce_predicate_on_random_images():
    rng = random.Random(20240817)
    for trial in range(25):
        functions = []
        cursor = rng.randrange(0, 512)
        for i in range(rng.randrange(1, 60)):
            size = rng.randrange(16, 6000)
            callees = []
            if functions and rng.random() < 0.4:
                callees = [rng.choice(functions)[0]]
            functions.append((f"fn{trial}_{i}", cursor, size, callees))
            cursor += size + rng.randrange(0, 256)
        profile = profile_for(functions)
        expected = sorted(
            (
                (name, size)
                for name, offset, size, callees in functions
                if not callees and (offset % PAGE) + size <= PAGE
            ),
            key=lambda item: (-item[1], item[0]),
        )
        got = [(r.name, r.size) for r in find_linear_regions(profile)]
        assert got == expected


def test_choose_region_rejects_too_small_explicit_target(default_profile):
    small = [
        r.name for r in find_linear_regions(default_profile)
        if r.size < STAGE1_FOOTPRINT
    ]
    assert small  # the bundled image has sub-footprint leaves
    with pytest.raises(ValidationError):
        choose_region(default_profile, InjectionParams(region=small[0]))


def test_choose_region_rejects_unknown_name(default_profile):
    with pytest.raises(ValidationError):
        choose_region(default_profile, InjectionParams(region="NtPhantom"))


# -- the first stage -----------------------------------------------------------


def test_first_call_wins_second_bails(logged_in_guest):
    egg = make_egg("winsim-19044", logged_in_guest.seed, 1)
    stage1 = Stage1Binding(egg)
    first = SyscallEvent(time=1.0, pid=4, syscall="NtQueryVirtualMemory")
    second = SyscallEvent(time=1.0, pid=512, syscall="NtQueryVirtualMemory")
    stage1.on_execute(logged_in_guest, first)
    stage1.on_execute(logged_in_guest, second)
    assert first.status == "stage1_won"
    assert second.status == "concurrent_return"
    assert second.retval == CONCURRENT_RETURN_VALUE
    assert logged_in_guest.read_spinlock() == SPINLOCK_COOKIE
    buffers = [a for a in logged_in_guest.allocations if a.label == "agent-buffer"]
    assert len(buffers) == 1
    assert logged_in_guest.read_phys(buffers[0].paddr, len(egg)) == egg


def test_eggs_unique_per_attempt():
    eggs = {
        make_egg("winsim-19044", seed, attempt)
        for seed in range(5)
        for attempt in range(1, 4)
    }
    assert len(eggs) == 15
    assert all(len(egg) == 16 for egg in eggs)


def test_hunt_egg_absent_and_present(logged_in_guest):
    egg = make_egg("winsim-19044", 7, 1)
    assert hunt_egg(logged_in_guest, egg) == []
    logged_in_guest.write_phys(0x9000, egg)
    assert hunt_egg(logged_in_guest, egg) == [0x9000]


# -- the full chain ------------------------------------------------------------


def test_successful_chain_checkpoints_in_order(default_config, default_profile):
    guest = boot_guest(default_config, seed=7)
    guest.fast_forward(default_config.login_prompt_at + 60.0)
    outcome = inject(guest, default_profile)
    assert outcome.status == "success"
    steps = [s.step for s in outcome.timeline]
    assert steps == [1, 2, 3, 4, 5, 6, 7, 8]
    times = [s.time for s in outcome.timeline]
    assert times == sorted(times)
    assert outcome.region_name == "MmQueryVirtualMemory"


def test_success_restores_region_bytes_exactly(default_config, default_profile):
    guest = boot_guest(default_config, seed=7)
    guest.fast_forward(default_config.login_prompt_at + 60.0)
    fn = default_config.kernel_image.function("MmQueryVirtualMemory")
    pristine = default_config.kernel_image.body_bytes(fn.name)
    outcome = inject(guest, default_profile)
    assert outcome.success
    assert outcome.saved_bytes == pristine
    assert guest.read_phys(outcome.region_paddr, fn.size) == pristine


def test_success_leaves_only_agent_and_lock_cell(default_config, default_profile):
    guest = boot_guest(default_config, seed=7)
    guest.fast_forward(default_config.login_prompt_at + 60.0)
    outcome = inject(guest, default_profile)
    assert outcome.success
    diff = guest.memory_diff()
    agent_span = (outcome.agent_paddr, outcome.agent_paddr + ALLOC_SIZE)
    lock_span = (0, 2)
    for start, end in diff:
        inside_agent = agent_span[0] <= start and end <= agent_span[1]
        inside_lock = lock_span[0] <= start and end <= lock_span[1] + 4094
        assert inside_agent or inside_lock
    touched = {s for s, _ in diff}
    assert any(agent_span[0] <= s < agent_span[1] for s in touched)


def test_agent_image_lands_at_reported_address(default_config, default_profile):
    guest = boot_guest(default_config, seed=7)
    guest.fast_forward(default_config.login_prompt_at + 60.0)
    outcome = inject(guest, default_profile)
    assert guest.read_phys(outcome.agent_paddr, len(AGENT_MAGIC)) == AGENT_MAGIC
    assert guest.agent_entry == outcome.agent_paddr


def test_rewriting_saved_bytes_changes_nothing(default_config, default_profile):
    guest = boot_guest(default_config, seed=7)
    guest.fast_forward(default_config.login_prompt_at + 60.0)
    outcome = inject(guest, default_profile)
    before = bytes(guest.phys_mem)
    guest.write_phys(outcome.region_paddr, outcome.saved_bytes)
    assert bytes(guest.phys_mem) == before


def test_preseeded_egg_rejected_before_any_write(default_config, default_profile):
    guest = boot_guest(default_config, seed=7)
    guest.fast_forward(default_config.login_prompt_at + 60.0)
    guest.write_phys(0x3000, make_egg("winsim-19044", 7, 1))
    poisoned = bytes(guest.phys_mem)
    with pytest.raises(HandshakeError):
        inject(guest, default_profile)
    assert bytes(guest.phys_mem) == poisoned  # nothing was overwritten


def test_idle_guest_times_out_and_restores(default_dict, default_profile):
    for proc in default_dict["processes"]:
        for seg in proc["rate"]:
            seg["per_sec"] = 0.0
    config = GuestConfig.from_dict(default_dict)
    guest = boot_guest(config, seed=7)
    guest.fast_forward(config.login_prompt_at + 60.0)
    outcome = inject(guest, default_profile, InjectionParams(timeout=30.0))
    assert outcome.status == "timeout"
    assert guest.memory_diff() == []
    assert not guest.crashed


def test_huge_overwrite_window_crashes_at_step_two(default_config, default_profile):
    guest = boot_guest(default_config, seed=7)
    guest.fast_forward(default_config.login_prompt_at + 60.0)
    params = InjectionParams(overwrite_seconds=120.0)
    outcome = inject(guest, default_profile, params)
    assert outcome.status == "crashed"
    assert outcome.crash_step == 2
    assert guest.crashed
    assert guest.crash_reason == "bug_check"


def test_crashed_guest_rejects_injection(default_config, default_profile):
    guest = boot_guest(default_config, seed=7)
    guest.crash("bug_check")
    with pytest.raises(GuestCrashedError):
        inject(guest, default_profile)


def test_losers_never_reallocate_across_seeds(default_config, default_profile):
    """Whatever the interleaving, at most one agent buffer exists."""
    for seed in range(1, 40):
        guest = boot_guest(default_config, seed)
        guest.fast_forward(default_config.login_prompt_at + 60.0)
        outcome = inject(guest, default_profile)
        buffers = [a for a in guest.allocations if a.label == "agent-buffer"]
        if outcome.success:
            assert len(buffers) == 1
            assert guest.read_spinlock() == SPINLOCK_COOKIE
        else:
            assert len(buffers) <= 1


def test_outcome_dict_is_json_shaped(default_config, default_profile):
    guest = boot_guest(default_config, seed=7)
    guest.fast_forward(default_config.login_prompt_at + 60.0)
    doc = inject(guest, default_profile).to_dict()
    assert doc["status"] == "success"
    assert len(doc["timeline"]) == 8
    assert isinstance(doc["egg"], str)
    assert "saved_bytes" not in doc  # raw region bytes stay out of exports
