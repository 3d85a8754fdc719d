"""Security product models: behavioral hooks, static scans, execution gates.

Each modeled product has a rule set keyed on action categories. The hooks
live in user space, so they are only ever shown user-path action traces;
kernel-path actions bypass them by construction, not by rule content.

Two user-space delivery scenarios are modeled for comparison runs: dropping
a stock user-mode implant (its byte signature is in every product's static
database) and dropping a repacked build that passes the static scan but
still faces a behavioral launch gate.
"""

from __future__ import annotations

import json
import random
import re
from dataclasses import dataclass
from importlib import resources as importlib_resources
from pathlib import Path

from .errors import UnknownEntityError, ValidationError
from .kernel import derive_bytes

AV_SCHEMA_VERSION = 1

# Stock user-mode implant, byte-for-byte known to every modeled product.
USERMODE_AGENT_MAGIC = b"USERMODE-AGENT\x00"
USERMODE_AGENT_SIGNATURE = b"\x55\x48\x89\xe5USERMODE-STAGER-v1\x90\x90"
USERMODE_AGENT_SIZE = 4096

# Probability that a repacked implant which already passed the static scan
# survives the behavioral launch gate.
EVASION_SUCCESS_PROBABILITY = 0.25


@dataclass(frozen=True, slots=True)
class DetectionRule:
    id: str
    category: str
    target_pattern: str | None = None

    def matches(self, category: str, target: str) -> bool:
        if category != self.category:
            return False
        if self.target_pattern is None:
            return True
        return re.search(self.target_pattern, target) is not None


@dataclass(slots=True)
class DetectionEvent:
    time: float
    av: str
    rule: str
    kind: str  # "hook" | "static" | "gate"
    category: str
    target: str

    def to_dict(self) -> dict:
        return {
            "time": self.time,
            "av": self.av,
            "rule": self.rule,
            "kind": self.kind,
            "category": self.category,
            "target": self.target,
        }


class AvModel:
    """One modeled endpoint-security product."""

    def __init__(
        self,
        name: str,
        display_name: str | None = None,
        rules: list[DetectionRule] | None = None,
        static_signatures: list[bytes] | None = None,
        gate_requires_approval: bool = True,
    ):
        self.name = name
        self.display_name = display_name or name
        self.rules = list(rules or [])
        self.static_signatures = list(static_signatures or [])
        self.gate_requires_approval = gate_requires_approval
        self.log: list[DetectionEvent] = []

    def inspect(self, trace) -> DetectionEvent | None:
        """Run the user-space hooks over one action trace. Kernel-path
        traces never reach the hook point, so they are ignored outright."""
        if trace.path != "user":
            return None
        for rule in self.rules:
            if rule.matches(trace.category, trace.target):
                event = DetectionEvent(
                    time=trace.time,
                    av=self.name,
                    rule=rule.id,
                    kind="hook",
                    category=trace.category,
                    target=trace.target,
                )
                self.log.append(event)
                return event
        return None

    def scan_binary(self, data: bytes, label: str = "dropped-binary", time: float = 0.0):
        """Static signature scan over a file image."""
        for signature in self.static_signatures:
            if signature and signature in data:
                event = DetectionEvent(
                    time=time,
                    av=self.name,
                    rule="static-signature",
                    kind="static",
                    category="file.scan",
                    target=label,
                )
                self.log.append(event)
                return event
        return None

    def gate_event(self, label: str, time: float = 0.0) -> DetectionEvent:
        event = DetectionEvent(
            time=time,
            av=self.name,
            rule="behavior-gate",
            kind="gate",
            category="process.launch",
            target=label,
        )
        self.log.append(event)
        return event

    def describe(self) -> dict:
        return {
            "name": self.name,
            "display_name": self.display_name,
            "gate_requires_approval": self.gate_requires_approval,
            "rules": [
                {"id": r.id, "category": r.category, "target_pattern": r.target_pattern}
                for r in self.rules
            ],
            "static_signatures": [s.hex() for s in self.static_signatures],
            "detections": len(self.log),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "AvModel":
        version = data.get("schema_version", AV_SCHEMA_VERSION)
        if version != AV_SCHEMA_VERSION:
            raise ValidationError(f"unsupported av schema_version {version}")
        rules = [
            DetectionRule(
                id=r["id"],
                category=r["category"],
                target_pattern=r.get("target_pattern"),
            )
            for r in data.get("rules", [])
        ]
        signatures = [bytes.fromhex(s) for s in data.get("static_signatures", [])]
        return cls(
            name=data["name"],
            display_name=data.get("display_name"),
            rules=rules,
            static_signatures=signatures,
            gate_requires_approval=bool(data.get("gate_requires_approval", True)),
        )

    @classmethod
    def from_file(cls, path: str | Path) -> "AvModel":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def _av_dir():
    return importlib_resources.files("laccolith_range") / "fixtures" / "avs"


def list_avs() -> list[str]:
    names = [
        entry.name.removesuffix(".json")
        for entry in _av_dir().iterdir()
        if entry.name.endswith(".json")
    ]
    return sorted(names)


def load_av(name: str) -> AvModel:
    """Fresh model instance (empty log) for a bundled product fixture."""
    entry = _av_dir() / f"{name}.json"
    if not entry.is_file():
        raise UnknownEntityError(f"no security product fixture named {name!r}")
    return AvModel.from_dict(json.loads(entry.read_text(encoding="utf-8")))


# -- user-space delivery scenarios -------------------------------------------


def usermode_agent_image() -> bytes:
    """Stock user-mode implant binary, signature in the clear."""
    body = USERMODE_AGENT_MAGIC + USERMODE_AGENT_SIGNATURE
    return body + derive_bytes("usermode-agent", "body", USERMODE_AGENT_SIZE - len(body))


def packed_agent_image() -> bytes:
    """Repacked implant: same payload under a byte-level transform, so the
    static signature no longer appears."""
    image = usermode_agent_image()
    return bytes(b ^ 0x5A for b in image)


@dataclass(slots=True)
class DeploymentOutcome:
    mode: str       # "baseline" | "evaded"
    av: str
    success: bool
    stage: str      # "static_scan" | "behavior_gate" | "running"
    detection: DetectionEvent | None = None

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "av": self.av,
            "success": self.success,
            "stage": self.stage,
            "detection": self.detection.to_dict() if self.detection else None,
        }


def deploy_usermode_agent(
    av: AvModel, rng: random.Random, evaded: bool, time: float = 0.0
) -> DeploymentOutcome:
    """One attempt to land a user-space implant under the given product."""
    mode = "evaded" if evaded else "baseline"
    image = packed_agent_image() if evaded else usermode_agent_image()
    label = "implant-packed.exe" if evaded else "implant.exe"
    event = av.scan_binary(image, label=label, time=time)
    if event is not None:
        return DeploymentOutcome(mode, av.name, False, "static_scan", event)
    if av.gate_requires_approval and rng.random() >= EVASION_SUCCESS_PROBABILITY:
        return DeploymentOutcome(
            mode, av.name, False, "behavior_gate", av.gate_event(label, time)
        )
    return DeploymentOutcome(mode, av.name, True, "running")


def run_deployment_trials(
    av: AvModel, trials: int, seed: int, evaded: bool
) -> list[DeploymentOutcome]:
    rng = random.Random(seed)
    return [
        deploy_usermode_agent(av, rng, evaded, time=float(i)) for i in range(trials)
    ]
