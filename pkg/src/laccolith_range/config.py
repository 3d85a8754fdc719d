"""Guest configuration: JSON schema, parsing, and validation.

The on-disk document is versioned via ``schema_version``; see
docs/guest-config.md for the field-by-field reference.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from importlib import resources as importlib_resources
from pathlib import Path

from .errors import ConfigurationError, ValidationError
from .kernel import KernelImage

SCHEMA_VERSION = 1

DEFAULT_PAGE_SIZE = 4096
DEFAULT_KASLR_BASE = 0xFFFF_F800_0000_0000
DEFAULT_KASLR_PAGES = 1 << 24


def _to_int(value) -> int:
    if isinstance(value, str):
        return int(value, 0)
    return int(value)


@dataclass(frozen=True)
class RateSegment:
    until: float | None  # clock bound, None = open-ended
    per_sec: float


@dataclass
class ProcessSpec:
    pid: int
    name: str
    is_system_process: bool
    rate_segments: tuple[RateSegment, ...]
    targets: dict[str, float]  # syscall name -> normalized weight

    def rate_at(self, t: float) -> float:
        for seg in self.rate_segments:
            if seg.until is None or t < seg.until:
                return seg.per_sec
        return 0.0

    def segments_between(self, t0: float, t1: float):
        """Yield (start, end, rate) pieces covering the half-open (t0, t1]."""
        cursor = t0
        for seg in self.rate_segments:
            seg_end = seg.until if seg.until is not None else math.inf
            if seg_end <= cursor:
                continue
            end = min(seg_end, t1)
            if end > cursor:
                yield cursor, end, seg.per_sec
                cursor = end
            if cursor >= t1:
                return

    @classmethod
    def from_dict(cls, data: dict) -> "ProcessSpec":
        segments = tuple(
            RateSegment(
                until=None if seg.get("until") is None else float(seg["until"]),
                per_sec=float(seg["per_sec"]),
            )
            for seg in data["rate"]
        )
        for seg in segments:
            if seg.per_sec < 0:
                raise ValidationError("syscall rate must be >= 0")
        raw_targets = data.get("targets", {})
        total = sum(raw_targets.values())
        if raw_targets and total <= 0:
            raise ValidationError("target weights must sum to a positive value")
        targets = {k: v / total for k, v in raw_targets.items() if v > 0}
        return cls(
            pid=int(data["pid"]),
            name=data.get("name", f"pid{data['pid']}"),
            is_system_process=bool(data.get("is_system_process", False)),
            rate_segments=segments,
            targets=targets,
        )

    def to_dict(self) -> dict:
        return {
            "pid": self.pid,
            "name": self.name,
            "is_system_process": self.is_system_process,
            "rate": [
                {"until": seg.until, "per_sec": seg.per_sec}
                for seg in self.rate_segments
            ],
            "targets": dict(self.targets),
        }


@dataclass(frozen=True)
class HostSpec:
    name: str
    ip: str
    mac: str
    shares: tuple[str, ...] = ()


@dataclass
class NetworkConfig:
    hostname: str  # name of this guest among hosts
    hosts: tuple[HostSpec, ...]
    arp_cache: tuple[str, ...]  # neighbor IPs
    smb_enabled: tuple[str, ...]  # host names with NetBIOS/SMB sharing on

    def host_by_name(self, name: str) -> HostSpec | None:
        for h in self.hosts:
            if h.name.lower() == name.lower():
                return h
        return None

    def host_by_ip(self, ip: str) -> HostSpec | None:
        for h in self.hosts:
            if h.ip == ip:
                return h
        return None

    def self_host(self) -> HostSpec:
        host = self.host_by_name(self.hostname)
        if host is None:
            raise ConfigurationError(f"network.hostname {self.hostname!r} not in hosts")
        return host

    @classmethod
    def from_dict(cls, data: dict) -> "NetworkConfig":
        hosts = tuple(
            HostSpec(
                name=h["name"],
                ip=h["ip"],
                mac=h.get("mac", "00-00-00-00-00-00"),
                shares=tuple(h.get("shares", [])),
            )
            for h in data.get("hosts", [])
        )
        return cls(
            hostname=data.get("hostname", hosts[0].name if hosts else "HOST"),
            hosts=hosts,
            arp_cache=tuple(data.get("arp_cache", [])),
            smb_enabled=tuple(data.get("smb_enabled", [])),
        )

    def to_dict(self) -> dict:
        return {
            "hostname": self.hostname,
            "hosts": [
                {"name": h.name, "ip": h.ip, "mac": h.mac, "shares": list(h.shares)}
                for h in self.hosts
            ],
            "arp_cache": list(self.arp_cache),
            "smb_enabled": list(self.smb_enabled),
        }


@dataclass(frozen=True)
class ProcessImage:
    """A user-space process visible to the agent (dump targets)."""

    pid: int
    name: str
    memory: bytes


@dataclass
class GuestConfig:
    page_size: int
    frame_count: int
    kaslr_base: int
    kaslr_pages: int
    kernel_image: KernelImage
    processes: tuple[ProcessSpec, ...]
    network: NetworkConfig
    filesystem: dict[str, str] = field(default_factory=dict)
    registry: dict[str, dict[str, str]] = field(default_factory=dict)
    process_list: tuple[ProcessImage, ...] = ()
    login_prompt_at: float = 90.0  # virtual seconds from boot to login prompt

    def validate(self) -> None:
        if self.page_size <= 0 or self.frame_count <= 0:
            raise ConfigurationError("page_size and frame_count must be positive")
        self.kernel_image.validate()
        image_pages = -(-self.kernel_image.span() // self.page_size)
        # frame 0 is reserved for the synchronization cell
        if image_pages + 1 > self.frame_count:
            raise ConfigurationError(
                f"kernel image needs {image_pages} frames but only "
                f"{self.frame_count - 1} are available"
            )
        for proc in self.processes:
            for target in proc.targets:
                if not self.kernel_image.has_function(target):
                    raise ConfigurationError(
                        f"process {proc.pid} targets unknown syscall {target}"
                    )
        pids = [p.pid for p in self.process_list]
        if len(pids) != len(set(pids)):
            raise ConfigurationError("duplicate pids in process_list")

    @classmethod
    def from_dict(cls, data: dict) -> "GuestConfig":
        version = data.get("schema_version", SCHEMA_VERSION)
        if version != SCHEMA_VERSION:
            raise ConfigurationError(f"unsupported schema_version {version}")
        kaslr = data.get("kaslr_window", {})
        config = cls(
            page_size=int(data.get("page_size", DEFAULT_PAGE_SIZE)),
            frame_count=int(data["frame_count"]),
            kaslr_base=_to_int(kaslr.get("base", DEFAULT_KASLR_BASE)),
            kaslr_pages=int(kaslr.get("pages", DEFAULT_KASLR_PAGES)),
            kernel_image=KernelImage.from_dict(data["kernel_image"]),
            processes=tuple(
                ProcessSpec.from_dict(p) for p in data.get("processes", [])
            ),
            network=NetworkConfig.from_dict(data.get("network", {})),
            filesystem=dict(data.get("filesystem", {})),
            registry={
                hive: dict(keys) for hive, keys in data.get("registry", {}).items()
            },
            process_list=tuple(
                ProcessImage(
                    pid=int(p["pid"]),
                    name=p["name"],
                    memory=p.get("memory", "").encode(),
                )
                for p in data.get("process_list", [])
            ),
            login_prompt_at=float(data.get("login_prompt_at", 90.0)),
        )
        config.validate()
        return config

    @classmethod
    def from_file(cls, path: str | Path) -> "GuestConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    @classmethod
    def from_fixture(cls, name: str = "default") -> "GuestConfig":
        entry = (
            importlib_resources.files("laccolith_range")
            / "fixtures"
            / "guests"
            / f"{name}.json"
        )
        if not entry.is_file():
            raise ConfigurationError(f"no bundled guest config named {name!r}")
        return cls.from_dict(json.loads(entry.read_text(encoding="utf-8")))

    def to_dict(self) -> dict:
        return {
            "schema_version": SCHEMA_VERSION,
            "page_size": self.page_size,
            "frame_count": self.frame_count,
            "kaslr_window": {"base": hex(self.kaslr_base), "pages": self.kaslr_pages},
            "kernel_image": self.kernel_image.to_dict(),
            "processes": [p.to_dict() for p in self.processes],
            "network": self.network.to_dict(),
            "filesystem": dict(self.filesystem),
            "registry": {h: dict(k) for h, k in self.registry.items()},
            "process_list": [
                {"pid": p.pid, "name": p.name, "memory": p.memory.decode()}
                for p in self.process_list
            ],
            "login_prompt_at": self.login_prompt_at,
        }


def list_guest_fixtures() -> list[str]:
    fixture_dir = importlib_resources.files("laccolith_range") / "fixtures" / "guests"
    names = [
        entry.name.removesuffix(".json")
        for entry in fixture_dir.iterdir()
        if entry.name.endswith(".json")
    ]
    return sorted(names)
