"""Adversary profiles and the dynamic action planner.

A profile is an ordered list of step templates. A template either stands
for exactly one action, or carries a `for_each` fact pattern and is
instantiated once per matching fact discovered so far, with `{each}` in its
arguments replaced by the fact's value. Facts come from regex extractors
run over earlier command output, so the concrete plan can only be known as
the operation unfolds.

The plan keeps one lane per template, executed in template order; a lane
picks up new instances if matching facts appear before it has finished.
Blocked and failed actions stay in the plan but do not count as executed.
"""

from __future__ import annotations

import fnmatch
import json
import re
from dataclasses import dataclass
from importlib import resources as importlib_resources
from pathlib import Path

from .errors import PlanningError, UnknownEntityError, ValidationError

PROFILE_SCHEMA_VERSION = 1

EACH_PLACEHOLDER = "{each}"

STATUS_PENDING = "pending"
STATUS_EXECUTED = "executed"
STATUS_BLOCKED = "blocked"
STATUS_FAILED = "failed"


@dataclass(frozen=True, slots=True)
class Extraction:
    fact: str            # base name; stored facts get numeric suffixes
    pattern: str         # regex with exactly one capture group
    require: str | None = None  # only extract when this regex also matches


@dataclass(frozen=True, slots=True)
class StepTemplate:
    id: str
    command: str
    args: dict
    exec_path: str = "kernel"
    extract: tuple[Extraction, ...] = ()
    for_each: str | None = None  # fact-name glob, e.g. "smb.host.*"


@dataclass
class Profile:
    name: str
    display_name: str
    description: str
    steps: tuple[StepTemplate, ...]

    def validate(self) -> None:
        if not self.steps:
            raise ValidationError(f"profile {self.name!r} has no steps")
        ids = [s.id for s in self.steps]
        if len(ids) != len(set(ids)):
            raise ValidationError(f"profile {self.name!r} has duplicate step ids")
        for step in self.steps:
            for ex in step.extract:
                if re.compile(ex.pattern).groups != 1:
                    raise ValidationError(
                        f"step {step.id!r}: pattern must have exactly one group"
                    )
            if step.for_each is None and _args_use_placeholder(step.args):
                raise ValidationError(
                    f"step {step.id!r} uses {EACH_PLACEHOLDER} without for_each"
                )

    @property
    def commands_used(self) -> list[str]:
        seen: list[str] = []
        for step in self.steps:
            if step.command not in seen:
                seen.append(step.command)
        return seen

    @classmethod
    def from_dict(cls, data: dict) -> "Profile":
        version = data.get("schema_version", PROFILE_SCHEMA_VERSION)
        if version != PROFILE_SCHEMA_VERSION:
            raise ValidationError(f"unsupported profile schema_version {version}")
        steps = tuple(
            StepTemplate(
                id=s["id"],
                command=s["command"],
                args=dict(s.get("args", {})),
                exec_path=s.get("exec_path", "kernel"),
                extract=tuple(
                    Extraction(
                        fact=e["fact"],
                        pattern=e["pattern"],
                        require=e.get("require"),
                    )
                    for e in s.get("extract", [])
                ),
                for_each=s.get("for_each"),
            )
            for s in data["steps"]
        )
        profile = cls(
            name=data["name"],
            display_name=data.get("display_name", data["name"]),
            description=data.get("description", ""),
            steps=steps,
        )
        profile.validate()
        return profile

    @classmethod
    def from_file(cls, path: str | Path) -> "Profile":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        return {
            "schema_version": PROFILE_SCHEMA_VERSION,
            "name": self.name,
            "display_name": self.display_name,
            "description": self.description,
            "steps": [
                {
                    "id": s.id,
                    "command": s.command,
                    "args": dict(s.args),
                    "exec_path": s.exec_path,
                    "extract": [
                        {"fact": e.fact, "pattern": e.pattern, "require": e.require}
                        for e in s.extract
                    ],
                    "for_each": s.for_each,
                }
                for s in self.steps
            ],
        }


def _args_use_placeholder(args: dict) -> bool:
    return any(
        isinstance(v, str) and EACH_PLACEHOLDER in v for v in args.values()
    )


def _profile_dir():
    return importlib_resources.files("laccolith_range") / "fixtures" / "profiles"


def list_profiles() -> list[str]:
    names = [
        entry.name.removesuffix(".json")
        for entry in _profile_dir().iterdir()
        if entry.name.endswith(".json")
    ]
    return sorted(names)


def load_profile(name: str) -> Profile:
    entry = _profile_dir() / f"{name}.json"
    if not entry.is_file():
        raise UnknownEntityError(f"no adversary profile named {name!r}")
    return Profile.from_dict(json.loads(entry.read_text(encoding="utf-8")))


# -- fact store ---------------------------------------------------------------


@dataclass(frozen=True, slots=True)
class FactRecord:
    name: str       # indexed, e.g. "smb.host.1"
    base: str       # e.g. "smb.host"
    value: str
    step_id: str
    seq: int


class FactStore:
    """Facts discovered during one operation. Names are `base.k` with k
    counting up per base; a (base, value) pair is only stored once."""

    def __init__(self):
        self._facts: list[FactRecord] = []
        self._by_name: dict[str, FactRecord] = {}
        self._values: set[tuple[str, str]] = set()

    def add(self, base: str, value: str, step_id: str) -> tuple[FactRecord, bool]:
        """Returns (record, created). Re-adding an existing (base, value)
        returns the original record."""
        if (base, value) in self._values:
            for fact in self._facts:
                if fact.base == base and fact.value == value:
                    return fact, False
        index = sum(1 for f in self._facts if f.base == base)
        record = FactRecord(
            name=f"{base}.{index}",
            base=base,
            value=value,
            step_id=step_id,
            seq=len(self._facts),
        )
        self._facts.append(record)
        self._by_name[record.name] = record
        self._values.add((base, value))
        return record, True

    def get(self, name: str) -> FactRecord:
        try:
            return self._by_name[name]
        except KeyError:
            raise PlanningError(f"unknown fact {name!r}") from None

    def match(self, pattern: str) -> list[FactRecord]:
        """Facts whose indexed name matches the glob, in discovery order."""
        return [f for f in self._facts if fnmatch.fnmatch(f.name, pattern)]

    def all(self) -> list[FactRecord]:
        return list(self._facts)

    def __len__(self) -> int:
        return len(self._facts)


def run_extractors(
    step: StepTemplate, output: str, facts: FactStore
) -> list[FactRecord]:
    """Apply a step's extractors to its output, returning newly created
    facts in match order."""
    created: list[FactRecord] = []
    for ex in step.extract:
        if ex.require is not None and not re.search(ex.require, output, re.MULTILINE):
            continue
        for match in re.finditer(ex.pattern, output, re.MULTILINE):
            record, is_new = facts.add(ex.fact, match.group(1), step.id)
            if is_new:
                created.append(record)
    return created


# -- plan ---------------------------------------------------------------------


@dataclass
class PlannedAction:
    step: StepTemplate
    args: dict
    lane: int
    instance: int
    fact: FactRecord | None = None  # the fact that spawned this instance
    status: str = STATUS_PENDING
    output: str = ""
    executed_at: float | None = None
    detection: dict | None = None

    @property
    def action_id(self) -> str:
        return f"{self.step.id}[{self.instance}]" if self.step.for_each else self.step.id

    def to_dict(self) -> dict:
        return {
            "id": self.action_id,
            "step": self.step.id,
            "command": self.step.command,
            "args": dict(self.args),
            "exec_path": self.step.exec_path,
            "lane": self.lane,
            "instance": self.instance,
            "fact": self.fact.name if self.fact else None,
            "status": self.status,
            "output": self.output,
            "executed_at": self.executed_at,
            "detection": self.detection,
        }


def _instantiate_args(args: dict, value: str) -> dict:
    out = {}
    for key, item in args.items():
        if isinstance(item, str):
            out[key] = item.replace(EACH_PLACEHOLDER, value)
        else:
            out[key] = item
    return out


class _Lane:
    def __init__(self, index: int, step: StepTemplate):
        self.index = index
        self.step = step
        self.instances: list[PlannedAction] = []
        self._seen_facts: set[str] = set()
        if step.for_each is None:
            self.instances.append(
                PlannedAction(step=step, args=dict(step.args), lane=index, instance=0)
            )

    def expand(self, facts: FactStore) -> list[PlannedAction]:
        if self.step.for_each is None:
            return []
        added: list[PlannedAction] = []
        for fact in facts.match(self.step.for_each):
            if fact.name in self._seen_facts:
                continue
            self._seen_facts.add(fact.name)
            action = PlannedAction(
                step=self.step,
                args=_instantiate_args(self.step.args, fact.value),
                lane=self.index,
                instance=len(self.instances),
                fact=fact,
            )
            self.instances.append(action)
            added.append(action)
        return added


class Plan:
    """Lane-per-template execution plan, expanded as facts arrive."""

    def __init__(self, profile: Profile):
        self.profile = profile
        self.lanes = [_Lane(i, step) for i, step in enumerate(profile.steps)]
        self._lane_idx = 0
        self._inst_idx = 0
        self.halted = False

    def next_action(self, facts: FactStore) -> PlannedAction | None:
        """The next pending action in lane order, or None when the plan is
        exhausted. Lanes expand against current facts before being read, so
        instances added by earlier steps are picked up."""
        if self.halted:
            return None
        while self._lane_idx < len(self.lanes):
            lane = self.lanes[self._lane_idx]
            lane.expand(facts)
            if self._inst_idx < len(lane.instances):
                action = lane.instances[self._inst_idx]
                self._inst_idx += 1
                return action
            self._lane_idx += 1
            self._inst_idx = 0
        return None

    def halt(self, facts: FactStore) -> None:
        """Stop executing, but finish expanding every lane so the planned
        total reflects everything the planner had already committed to."""
        self.halted = True
        for lane in self.lanes:
            lane.expand(facts)

    @property
    def actions(self) -> list[PlannedAction]:
        return [action for lane in self.lanes for action in lane.instances]

    @property
    def planned_count(self) -> int:
        return sum(len(lane.instances) for lane in self.lanes)

    @property
    def executed_count(self) -> int:
        return sum(
            1 for a in self.actions if a.status == STATUS_EXECUTED
        )
