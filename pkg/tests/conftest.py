"""Shared fixtures: the bundled guest config plus helpers for building
small synthetic configs without touching the bundled fixture files."""

from __future__ import annotations

import copy
import json
from importlib import resources

import pytest

from laccolith_range.config import GuestConfig
from laccolith_range.guest import boot_guest
from laccolith_range.vmi import generate_profile


def _fixture_dict() -> dict:
    entry = resources.files("laccolith_range") / "fixtures" / "guests" / "default.json"
    return json.loads(entry.read_text(encoding="utf-8"))


_DEFAULT_DICT = _fixture_dict()


@pytest.fixture(scope="session")
def default_config() -> GuestConfig:
    return GuestConfig.from_fixture("default")


@pytest.fixture()
def default_dict() -> dict:
    """A mutable copy of the bundled guest config document."""
    return copy.deepcopy(_DEFAULT_DICT)


@pytest.fixture(scope="session")
def default_profile(default_config):
    return generate_profile(default_config.kernel_image, default_config.page_size)


@pytest.fixture()
def logged_in_guest(default_config):
    """Default guest one minute past the login prompt, agent not injected."""
    guest = boot_guest(default_config, seed=7)
    guest.fast_forward(default_config.login_prompt_at + 60.0)
    return guest
