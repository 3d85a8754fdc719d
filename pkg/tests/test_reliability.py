"""Repeated boot-and-inject trials: reproducibility, the analytic success
model, and the timing dependence of the race windows."""

import math

import pytest

from laccolith_range.config import GuestConfig
from laccolith_range.guest import boot_guest
from laccolith_range.injection import (
    DEFAULT_OVERWRITE_SECONDS,
    DEFAULT_RESTORE_SECONDS,
    InjectionParams,
)
from laccolith_range.reliability import (
    expected_success_probability,
    run_trials,
    trial_seeds,
    verify_agent_round_trip,
)


def flat_config(default_dict, per_sec_by_pid=None):
    """Default guest with one constant rate per process (no boot burst)."""
    for proc in default_dict["processes"]:
        rate = (per_sec_by_pid or {}).get(proc["pid"], proc["rate"][-1]["per_sec"])
        proc["rate"] = [{"until": None, "per_sec": rate}]
    return GuestConfig.from_dict(default_dict)


def test_trial_seeds_deterministic_and_distinct():
    a = trial_seeds(5, 50)
    b = trial_seeds(5, 50)
    assert a == b
    assert len(set(a)) == 50
    assert trial_seeds(6, 50) != a


def test_identical_params_identical_outcome_vector(default_config):
    first = run_trials(default_config, trials=10, injection_time=60.0, base_seed=3)
    second = run_trials(default_config, trials=10, injection_time=60.0, base_seed=3)
    assert [r.status for r in first.results] == [r.status for r in second.results]
    assert [r.seed for r in first.results] == [r.seed for r in second.results]


def test_default_windows_target_ninety_percent(default_config):
    """The default torn-code windows are solved so that the late-session
    region rate of 0.5/s gives exp(-0.5 * 2 * window) = 0.90 exactly."""
    assert DEFAULT_OVERWRITE_SECONDS == pytest.approx(math.log(10 / 9))
    p = expected_success_probability(default_config, injection_time=60.0)
    assert p == pytest.approx(0.90)


def test_early_boot_analytic_probability(default_config):
    p_early = expected_success_probability(default_config, injection_time=10.0)
    assert p_early == pytest.approx(math.exp(-4.0 * 2 * math.log(10 / 9)))
    assert p_early < expected_success_probability(default_config, 60.0)


def test_observed_rate_tracks_analytic_model(default_config):
    report = run_trials(default_config, trials=200, injection_time=60.0, base_seed=1)
    expected = expected_success_probability(default_config, 60.0)
    observed = report.successes / report.trials
    assert abs(observed - expected) <= 200 ** -0.5 + 0.03


def test_flat_workload_rate_insensitive_to_timing(default_dict):
    config = flat_config(default_dict)
    early = run_trials(config, trials=120, injection_time=10.0, base_seed=2)
    late = run_trials(config, trials=120, injection_time=60.0, base_seed=2)
    margin = 2 * 120 ** -0.5
    assert abs(early.successes - late.successes) / 120 <= margin


def test_failures_carry_crash_step(default_config):
    params = InjectionParams(
        overwrite_seconds=3.0 * DEFAULT_OVERWRITE_SECONDS,
        restore_seconds=3.0 * DEFAULT_RESTORE_SECONDS,
    )
    report = run_trials(default_config, trials=60, injection_time=10.0,
                        base_seed=4, params=params)
    crashed = [r for r in report.results if r.status == "crashed"]
    assert crashed  # wide windows under the boot burst must cost trials
    assert all(r.crash_step in (2, 8) for r in crashed)


def test_report_dict_shape(default_config):
    doc = run_trials(default_config, trials=5, injection_time=60.0,
                     base_seed=1, label="smoke").to_dict()
    assert doc["label"] == "smoke"
    assert doc["trials"] == 5
    assert doc["successes"] == sum(
        1 for r in doc["results"] if r["status"] == "success"
    )
    assert set(doc["statuses"]) <= {
        "success", "crashed", "timeout", "agent_unresponsive"
    }
    assert doc["metric"]["denominator"] == 5


def test_round_trip_check_passes_on_live_guest(default_config):
    guest = boot_guest(default_config, 7)
    guest.fast_forward(150.0)
    assert verify_agent_round_trip(guest)


def test_round_trip_check_fails_on_crashed_guest(default_config):
    guest = boot_guest(default_config, 7)
    guest.fast_forward(150.0)
    guest.crash("bug_check")
    assert not verify_agent_round_trip(guest)
