"""Adversary profiles: validation, fact extraction from live output, and
the lane-per-template plan that grows as facts arrive."""

import pytest

from laccolith_range.agent import render_usermode
from laccolith_range.errors import PlanningError, UnknownEntityError, ValidationError
from laccolith_range.profiles import (
    FactStore,
    Plan,
    Profile,
    StepTemplate,
    list_profiles,
    load_profile,
    run_extractors,
)

ALL_PROFILES = ("oilrig-sample", "op-2", "ransomware", "shares-hunter", "thief")


def test_bundled_profiles_load_and_validate():
    assert tuple(list_profiles()) == ALL_PROFILES
    for name in ALL_PROFILES:
        profile = load_profile(name)
        profile.validate()


def test_unknown_profile():
    with pytest.raises(UnknownEntityError):
        load_profile("lazarus")


def test_template_counts():
    assert len(load_profile("thief").steps) == 2
    assert len(load_profile("op-2").steps) == 4
    assert len(load_profile("ransomware").steps) == 5
    assert len(load_profile("shares-hunter").steps) == 5
    assert len(load_profile("oilrig-sample").steps) == 10


def profile_from(steps):
    return Profile.from_dict({"name": "t", "steps": steps})


def test_duplicate_step_ids_rejected():
    with pytest.raises(ValidationError):
        profile_from([
            {"id": "a", "command": "version", "args": {}},
            {"id": "a", "command": "version", "args": {}},
        ])


def test_placeholder_without_expansion_rejected():
    with pytest.raises(ValidationError):
        profile_from([
            {"id": "a", "command": "read", "args": {"path": "{each}"}},
        ])


def test_extractor_needs_one_capture_group():
    with pytest.raises(ValidationError):
        profile_from([
            {
                "id": "a", "command": "usermode", "args": {"command": "arp -a"},
                "extract": [{"fact": "x", "pattern": "no group here"}],
            },
        ])


def test_roundtrip_through_dict():
    profile = load_profile("shares-hunter")
    again = Profile.from_dict(profile.to_dict())
    assert again.to_dict() == profile.to_dict()


# -- fact store ---------------------------------------------------------------


def test_facts_get_numbered_names():
    facts = FactStore()
    a, new_a = facts.add("neighbor.ip", "10.0.0.1", "s1")
    b, new_b = facts.add("neighbor.ip", "10.0.0.3", "s1")
    assert (a.name, b.name) == ("neighbor.ip.0", "neighbor.ip.1")
    assert new_a and new_b


def test_duplicate_value_not_stored_twice():
    facts = FactStore()
    first, _ = facts.add("smb.host", "VM2", "s1")
    again, created = facts.add("smb.host", "VM2", "s3")
    assert not created
    assert again is first
    assert len(facts) == 1


def test_match_uses_indexed_names_in_order():
    facts = FactStore()
    facts.add("neighbor.ip", "10.0.0.1", "s1")
    facts.add("smb.host", "VM2", "s2")
    facts.add("neighbor.ip", "10.0.0.3", "s1")
    names = [f.name for f in facts.match("neighbor.ip.*")]
    assert names == ["neighbor.ip.0", "neighbor.ip.1"]


def test_get_unknown_fact_is_planning_error():
    with pytest.raises(PlanningError):
        FactStore().get("ghost.0")


# -- extraction against real tool output --------------------------------------


def test_arp_output_yields_two_neighbor_facts(logged_in_guest):
    step = load_profile("shares-hunter").steps[1]
    assert step.id == "arp-neighbors"
    output = render_usermode(logged_in_guest, "arp -a")
    facts = FactStore()
    created = run_extractors(step, output, facts)
    assert [f.base for f in created] == ["neighbor.ip", "neighbor.ip"]
    assert [f.value for f in created] == ["10.0.0.1", "10.0.0.3"]


def test_empty_output_extracts_nothing():
    step = load_profile("shares-hunter").steps[1]
    assert run_extractors(step, "", FactStore()) == []


def test_require_clause_filters_whole_output(logged_in_guest):
    step = load_profile("shares-hunter").steps[0]
    output = render_usermode(logged_in_guest, "ipconfig /all")
    facts = FactStore()
    run_extractors(step, output, facts)
    # NetBIOS is enabled on the fixture host, so the guarded extractor fires
    assert [f.value for f in facts.match("smb.host.*")] == ["VM1"]
    assert [f.value for f in facts.match("local.ip.*")] == ["10.0.0.2"]


def test_single_whole_match_yields_one_fact():
    step = StepTemplate(
        id="s", command="read", args={},
        extract=(load_profile("shares-hunter").steps[0].extract[0],),
    )
    facts = FactStore()
    created = run_extractors(step, "IPv4 Address. . . : 10.9.9.9\n", facts)
    assert len(created) == 1


# -- planning -----------------------------------------------------------------


def test_static_profile_plans_every_step_once():
    plan = Plan(load_profile("ransomware"))
    facts = FactStore()
    seen = []
    while (action := plan.next_action(facts)) is not None:
        action.status = "executed"
        seen.append(action.action_id)
    assert len(seen) == 5
    assert plan.planned_count == 5


def test_expansion_follows_fact_arrival():
    profile = profile_from([
        {
            "id": "scan", "command": "usermode", "args": {"command": "arp -a"},
            "extract": [{"fact": "ip", "pattern": r"^ip=(\S+)"}],
        },
        {
            "id": "probe", "command": "usermode",
            "args": {"command": "nbtstat -A {each}"},
            "for_each": "ip.*",
        },
    ])
    plan = Plan(profile)
    facts = FactStore()
    first = plan.next_action(facts)
    assert first.step.id == "scan"
    first.status = "executed"
    run_extractors(first.step, "ip=10.0.0.8\nip=10.0.0.9\n", facts)
    probes = []
    while (action := plan.next_action(facts)) is not None:
        action.status = "executed"
        probes.append(action.args["command"])
    assert probes == ["nbtstat -A 10.0.0.8", "nbtstat -A 10.0.0.9"]
    assert plan.planned_count == 3


def test_expanded_actions_get_indexed_ids():
    profile = profile_from([
        {
            "id": "scan", "command": "usermode", "args": {"command": "arp -a"},
            "extract": [{"fact": "ip", "pattern": r"^ip=(\S+)"}],
        },
        {
            "id": "probe", "command": "usermode",
            "args": {"command": "ping {each}"},
            "for_each": "ip.*",
        },
    ])
    plan = Plan(profile)
    facts = FactStore()
    plan.next_action(facts).status = "executed"
    run_extractors(profile.steps[0], "ip=a\nip=b\n", facts)
    ids = []
    while (action := plan.next_action(facts)) is not None:
        action.status = "executed"
        ids.append(action.action_id)
    assert ids == ["probe[0]", "probe[1]"]


def test_halt_freezes_execution_but_counts_commitments():
    plan = Plan(load_profile("ransomware"))
    facts = FactStore()
    for _ in range(3):
        plan.next_action(facts).status = "executed"
    blocked = plan.next_action(facts)
    blocked.status = "blocked"
    plan.halt(facts)
    assert plan.next_action(facts) is None
    assert plan.executed_count == 3
    assert plan.planned_count == 5


def test_empty_fact_pool_skips_expansion_lane():
    profile = profile_from([
        {"id": "a", "command": "version", "args": {}},
        {
            "id": "b", "command": "usermode",
            "args": {"command": "ping {each}"}, "for_each": "ip.*",
        },
    ])
    plan = Plan(profile)
    facts = FactStore()
    plan.next_action(facts).status = "executed"
    assert plan.next_action(facts) is None
    assert plan.planned_count == 1
