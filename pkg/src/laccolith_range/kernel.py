"""Synthetic kernel image: function records, call graph, byte bodies."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

from .errors import ValidationError

SIGNATURE_LEN = 32


def derive_bytes(build_id: str, name: str, length: int) -> bytes:
    """Deterministic pseudo-random byte stream for a function body.

    Keyed on (build_id, name) so that rebuilding the same image always
    yields identical bodies, and distinct functions essentially never
    share a 16+ byte substring.
    """
    out = bytearray()
    counter = 0
    while len(out) < length:
        block = hashlib.sha256(f"{build_id}/{name}/{counter}".encode()).digest()
        out.extend(block)
        counter += 1
    return bytes(out[:length])


@dataclass(frozen=True)
class FunctionRecord:
    name: str
    rel_offset: int  # bytes from kernel_base
    size: int
    callees: tuple[str, ...]
    signature: bytes  # first bytes of the body, SIGNATURE_LEN unless smaller


class KernelImage:
    """Immutable set of kernel functions forming a call graph."""

    def __init__(self, build_id: str, functions: list[FunctionRecord]):
        self.build_id = build_id
        self.functions = sorted(functions, key=lambda f: f.rel_offset)
        self._by_name = {f.name: f for f in self.functions}
        self._closure_cache: dict[str, tuple[str, ...]] = {}
        self.validate()

    def validate(self) -> None:
        if not self.functions:
            raise ValidationError("kernel image has no functions")
        if len(self._by_name) != len(self.functions):
            raise ValidationError("duplicate function names in kernel image")
        prev = None
        for fn in self.functions:
            if fn.size <= 0:
                raise ValidationError(f"{fn.name}: non-positive size")
            if fn.rel_offset < 0:
                raise ValidationError(f"{fn.name}: negative offset")
            if len(fn.signature) != min(SIGNATURE_LEN, fn.size):
                raise ValidationError(
                    f"{fn.name}: signature must cover the first "
                    f"{min(SIGNATURE_LEN, fn.size)} bytes"
                )
            if prev is not None:
                if fn.rel_offset <= prev.rel_offset:
                    raise ValidationError("function offsets must strictly increase")
                if fn.rel_offset < prev.rel_offset + prev.size:
                    raise ValidationError(
                        f"functions {prev.name} and {fn.name} overlap"
                    )
            prev = fn
        for fn in self.functions:
            for callee in fn.callees:
                if callee not in self._by_name:
                    raise ValidationError(f"{fn.name}: unknown callee {callee}")

    def function(self, name: str) -> FunctionRecord:
        try:
            return self._by_name[name]
        except KeyError:
            raise ValidationError(f"unknown kernel function {name}") from None

    def has_function(self, name: str) -> bool:
        return name in self._by_name

    def span(self) -> int:
        last = self.functions[-1]
        return last.rel_offset + last.size

    def call_closure(self, name: str) -> tuple[str, ...]:
        """Pre-order transitive closure of calls starting at name."""
        cached = self._closure_cache.get(name)
        if cached is not None:
            return cached
        order: list[str] = []
        seen: set[str] = set()
        stack = [name]
        while stack:
            current = stack.pop()
            if current in seen:
                continue
            seen.add(current)
            order.append(current)
            # push in reverse so callees are visited in declaration order
            for callee in reversed(self.function(current).callees):
                if callee not in seen:
                    stack.append(callee)
        result = tuple(order)
        self._closure_cache[name] = result
        return result

    def body_bytes(self, name: str) -> bytes:
        """Full body of a function: pinned signature, then derived filler."""
        fn = self.function(name)
        filler = derive_bytes(self.build_id, fn.name, fn.size)
        return fn.signature + filler[len(fn.signature):]

    @classmethod
    def from_dict(cls, data: dict) -> "KernelImage":
        build_id = data["build_id"]
        functions = []
        for entry in data["functions"]:
            size = int(entry["size"])
            sig_len = min(SIGNATURE_LEN, size)
            if "signature" in entry and entry["signature"] is not None:
                signature = bytes.fromhex(entry["signature"])
            else:
                signature = derive_bytes(build_id, entry["name"], sig_len)
            functions.append(
                FunctionRecord(
                    name=entry["name"],
                    rel_offset=int(entry["rel_offset"]),
                    size=size,
                    callees=tuple(entry.get("callees", [])),
                    signature=signature,
                )
            )
        return cls(build_id, functions)

    def to_dict(self) -> dict:
        return {
            "build_id": self.build_id,
            "functions": [
                {
                    "name": f.name,
                    "rel_offset": f.rel_offset,
                    "size": f.size,
                    "callees": list(f.callees),
                    "signature": f.signature.hex(),
                }
                for f in self.functions
            ],
        }
