"""Symbol profiles and physical-memory scanning: page-offset candidate
filtering must be sound without knowing the randomized kernel base."""

import json

import pytest

from laccolith_range.errors import ProfileMissingError, ValidationError
from laccolith_range.guest import boot_guest
from laccolith_range.kernel import KernelImage
from laccolith_range.vmi import (
    SymbolProfile,
    SymbolRecord,
    candidate_pages,
    generate_profile,
    load_profile,
    scan_for_symbol,
)


def test_bundled_profile_has_scan_target():
    profile = load_profile("winsim-19044")
    assert profile.has_symbol("MmQueryVirtualMemory")
    record = profile.symbol("MmQueryVirtualMemory")
    assert record.size == 3800
    assert record.page_offset == 0x40


def test_unknown_build_raises():
    with pytest.raises(ProfileMissingError):
        load_profile("winsim-99999")


def test_profile_search_dir_wins(tmp_path, default_config):
    profile = generate_profile(default_config.kernel_image, default_config.page_size)
    doc = profile.to_dict()
    doc["symbols"] = doc["symbols"][:3]
    path = tmp_path / "winsim-19044.json"
    path.write_text(json.dumps(doc), encoding="utf-8")
    loaded = load_profile("winsim-19044", search_dir=tmp_path)
    assert len(loaded.symbols) == 3


def test_generated_profile_validates_against_its_image(default_config):
    profile = generate_profile(default_config.kernel_image, default_config.page_size)
    profile.validate_against(default_config.kernel_image)
    record = profile.symbol("MmQueryVirtualMemory")
    image_fn = default_config.kernel_image.function("MmQueryVirtualMemory")
    assert record.page_offset == image_fn.rel_offset % default_config.page_size
    assert record.callees == image_fn.callees


def test_duplicate_prefix_image_rejected():
    """Two functions sharing identical leading bytes make prefix scanning
    ambiguous; profile validation must refuse such an image."""
    image = KernelImage.from_dict({
        "build_id": "dup",
        "functions": [
            {"name": "a", "rel_offset": 0, "size": 64, "callees": []},
            {"name": "b", "rel_offset": 128, "size": 64, "callees": []},
        ],
    })
    profile = generate_profile(image, 4096)
    twin = SymbolProfile(
        build_id="dup",
        page_size=4096,
        symbols=[
            SymbolRecord(
                name=s.name,
                page_offset=s.page_offset,
                size=s.size,
                prefix=profile.symbol("a").prefix,  # same bytes for both
                callees=s.callees,
            )
            for s in profile.symbols
        ],
    )
    with pytest.raises(ValidationError):
        twin.validate_against(image)


def test_wrong_prefix_rejected(default_config):
    profile = generate_profile(default_config.kernel_image, default_config.page_size)
    record = profile.symbol("MmQueryVirtualMemory")
    bad = SymbolRecord(
        name=record.name,
        page_offset=record.page_offset,
        size=record.size,
        prefix=bytes(len(record.prefix)),
        callees=record.callees,
    )
    mangled = SymbolProfile(
        profile.build_id, profile.page_size,
        [bad if s.name == bad.name else s for s in profile.symbols],
    )
    with pytest.raises(ValidationError):
        mangled.validate_against(default_config.kernel_image)


def test_too_short_prefix_rejected():
    with pytest.raises(ValidationError):
        SymbolProfile(
            build_id="x", page_size=4096,
            symbols=[SymbolRecord("f", 0, 400, b"\x01\x02", ())],
        )


def test_roundtrip_through_dict(default_profile):
    again = SymbolProfile.from_dict(default_profile.to_dict())
    assert again.to_dict() == default_profile.to_dict()


def test_candidates_share_page_offset(default_config, default_profile):
    guest = boot_guest(default_config, 7)
    record = default_profile.symbol("MmQueryVirtualMemory")
    pages = candidate_pages(guest, record)
    assert all(p % guest.page_size == 0x40 for p in pages)


def test_one_candidate_per_frame(default_config, default_profile):
    guest = boot_guest(default_config, 7)
    for name in ("MmQueryVirtualMemory", "KiSystemServiceStart"):
        assert len(candidate_pages(guest, default_profile.symbol(name))) == 1024


def test_true_location_always_among_candidates(default_config, default_profile):
    record = default_profile.symbol("MmQueryVirtualMemory")
    fn = default_config.kernel_image.function("MmQueryVirtualMemory")
    for seed in range(1, 101):
        guest = boot_guest(default_config, seed)
        truth = guest.translate(guest.kernel_base + fn.rel_offset)
        assert truth in candidate_pages(guest, record)


def test_scan_finds_exactly_the_true_location(default_config, default_profile):
    record = default_profile.symbol("MmQueryVirtualMemory")
    fn = default_config.kernel_image.function("MmQueryVirtualMemory")
    for seed in (1, 7, 55):
        guest = boot_guest(default_config, seed)
        truth = guest.translate(guest.kernel_base + fn.rel_offset)
        assert scan_for_symbol(guest, record) == [truth]
