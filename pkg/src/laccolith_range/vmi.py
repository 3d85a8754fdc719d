"""Virtual machine introspection: locating kernel symbols from outside.

A symbol profile is generated offline from a kernel build's debug data and
records, for every exported function, its offset within a page and a prefix
of its machine code that is unique across the build. At run time the
hypervisor finds the function by scanning guest-physical memory for pages
carrying that prefix at that offset, which sidesteps base-address
randomization entirely.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources as importlib_resources
from pathlib import Path

from .errors import ProfileMissingError, ValidationError
from .kernel import SIGNATURE_LEN, KernelImage

PROFILE_SCHEMA_VERSION = 1

# Shorter prefixes collide too easily to anchor a memory scan; a prefix may
# only be shorter when it covers the whole function body.
MIN_PREFIX_LEN = 16


@dataclass(frozen=True, slots=True)
class SymbolRecord:
    name: str
    page_offset: int
    size: int
    prefix: bytes
    callees: tuple[str, ...] = ()


class SymbolProfile:
    def __init__(self, build_id: str, page_size: int, symbols: list[SymbolRecord]):
        self.build_id = build_id
        self.page_size = page_size
        self.symbols = list(symbols)
        self._by_name = {s.name: s for s in self.symbols}
        if len(self._by_name) != len(self.symbols):
            raise ValidationError("duplicate symbol names in profile")
        for record in self.symbols:
            if len(record.prefix) < MIN_PREFIX_LEN and len(record.prefix) < record.size:
                raise ValidationError(
                    f"prefix of {record.name!r} is too short to scan for"
                )

    def symbol(self, name: str) -> SymbolRecord:
        try:
            return self._by_name[name]
        except KeyError:
            raise ValidationError(f"symbol {name!r} not in profile") from None

    def has_symbol(self, name: str) -> bool:
        return name in self._by_name

    def validate_against(self, image: KernelImage) -> None:
        """Cross-check the profile against a loaded kernel image, including
        that every code prefix occurs exactly once in the image span."""
        if image.build_id != self.build_id:
            raise ValidationError(
                f"profile is for build {self.build_id!r}, image is {image.build_id!r}"
            )
        span = bytearray(image.span())
        for fn in image.functions:
            span[fn.rel_offset:fn.rel_offset + fn.size] = image.body_bytes(fn.name)
        for record in self.symbols:
            if not image.has_function(record.name):
                raise ValidationError(f"profile symbol {record.name!r} missing from image")
            fn = image.function(record.name)
            if fn.size != record.size:
                raise ValidationError(f"size mismatch for {record.name!r}")
            if fn.rel_offset % self.page_size != record.page_offset:
                raise ValidationError(f"page offset mismatch for {record.name!r}")
            if not fn.signature.startswith(record.prefix[: len(fn.signature)]):
                raise ValidationError(f"code prefix mismatch for {record.name!r}")
            if tuple(fn.callees) != record.callees:
                raise ValidationError(f"callee list mismatch for {record.name!r}")
            hits = _count_occurrences(span, record.prefix)
            if hits != 1:
                raise ValidationError(
                    f"code prefix of {record.name!r} occurs {hits} times in the image"
                )

    def to_dict(self) -> dict:
        return {
            "schema_version": PROFILE_SCHEMA_VERSION,
            "build_id": self.build_id,
            "page_size": self.page_size,
            "symbols": [
                {
                    "name": s.name,
                    "page_offset": s.page_offset,
                    "size": s.size,
                    "prefix": s.prefix.hex(),
                    "callees": list(s.callees),
                }
                for s in self.symbols
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SymbolProfile":
        version = data.get("schema_version")
        if version != PROFILE_SCHEMA_VERSION:
            raise ValidationError(f"unsupported profile schema_version {version!r}")
        symbols = [
            SymbolRecord(
                name=item["name"],
                page_offset=int(item["page_offset"]),
                size=int(item["size"]),
                prefix=bytes.fromhex(item["prefix"]),
                callees=tuple(item.get("callees", ())),
            )
            for item in data["symbols"]
        ]
        return cls(data["build_id"], int(data["page_size"]), symbols)

    @classmethod
    def from_file(cls, path: str | Path) -> "SymbolProfile":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def generate_profile(image: KernelImage, page_size: int) -> SymbolProfile:
    """Derive a symbol profile from a kernel image, as a build pipeline would
    from debug data."""
    symbols = [
        SymbolRecord(
            name=fn.name,
            page_offset=fn.rel_offset % page_size,
            size=fn.size,
            prefix=fn.signature[:SIGNATURE_LEN],
            callees=tuple(fn.callees),
        )
        for fn in image.functions
    ]
    return SymbolProfile(image.build_id, page_size, symbols)


def load_profile(build_id: str, search_dir: str | Path | None = None) -> SymbolProfile:
    """Load `<build_id>.json`, looking in `search_dir` first, then the
    bundled profiles."""
    filename = f"{build_id}.json"
    if search_dir is not None:
        candidate = Path(search_dir) / filename
        if candidate.exists():
            return SymbolProfile.from_file(candidate)
    bundle = importlib_resources.files("laccolith_range") / "fixtures" / "vmi" / filename
    if bundle.is_file():
        return SymbolProfile.from_dict(json.loads(bundle.read_text(encoding="utf-8")))
    raise ProfileMissingError(f"no symbol profile found for build {build_id!r}")


def candidate_pages(guest, record: SymbolRecord) -> list[int]:
    """Guest-physical addresses where the symbol could live: its page offset
    in every frame. One candidate per frame, independent of the randomized
    kernel base."""
    return [
        frame * guest.page_size + record.page_offset
        for frame in range(guest.frame_count)
    ]


def scan_for_symbol(guest, record: SymbolRecord) -> list[int]:
    """Narrow the candidates down by code prefix: addresses whose bytes
    start with the symbol's prefix."""
    prefix = record.prefix
    return [
        paddr
        for paddr in candidate_pages(guest, record)
        if guest.phys_mem[paddr:paddr + len(prefix)] == prefix
    ]


def _count_occurrences(haystack, needle: bytes) -> int:
    count = 0
    start = 0
    while (idx := haystack.find(needle, start)) >= 0:
        count += 1
        start = idx + 1
    return count
