"""Wire protocol between the command server and in-guest agents.

Both directions use length-prefixed frames: a 4-byte big-endian body length
followed by the body. A request body is one opcode byte plus UTF-8 JSON
arguments; a response body is one status byte plus raw output bytes.
"""

from __future__ import annotations

import json
from enum import IntEnum

from .errors import ValidationError

MAX_FRAME = 16 * 1024 * 1024
LENGTH_BYTES = 4

STATUS_OK = 0x00
STATUS_ERROR = 0x01
STATUS_BLOCKED = 0x02


class Opcode(IntEnum):
    ECHO = 0x01
    CLOSE = 0x02
    VERSION = 0x03
    DIR = 0x10
    READ = 0x11
    WRITE = 0x12
    SETKEY = 0x20
    DUMP = 0x30
    USERMODE = 0x40


OPCODE_NAMES = {op: op.name.lower() for op in Opcode}
OPCODES_BY_NAME = {name: op for op, name in OPCODE_NAMES.items()}


def opcode_for(name: str) -> Opcode:
    try:
        return OPCODES_BY_NAME[name.lower()]
    except KeyError:
        raise ValidationError(f"unknown command {name!r}") from None


def encode_request(opcode: Opcode, args: dict | None = None) -> bytes:
    payload = json.dumps(args or {}, sort_keys=True).encode("utf-8")
    body = bytes([opcode]) + payload
    return len(body).to_bytes(LENGTH_BYTES, "big") + body


def decode_request(body: bytes) -> tuple[Opcode, dict]:
    if not body:
        raise ValidationError("empty request body")
    try:
        opcode = Opcode(body[0])
    except ValueError:
        raise ValidationError(f"unknown opcode {body[0]:#x}") from None
    payload = body[1:] or b"{}"
    try:
        args = json.loads(payload.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ValidationError(f"bad request payload: {exc}") from None
    if not isinstance(args, dict):
        raise ValidationError("request arguments must be a JSON object")
    return opcode, args


def encode_response(status: int, output: bytes) -> bytes:
    body = bytes([status]) + output
    return len(body).to_bytes(LENGTH_BYTES, "big") + body


def decode_response(body: bytes) -> tuple[int, bytes]:
    if not body:
        raise ValidationError("empty response body")
    return body[0], body[1:]


class FrameBuffer:
    """Reassembles length-prefixed frames from an incoming byte stream."""

    def __init__(self):
        self._buf = bytearray()

    def feed(self, data: bytes) -> list[bytes]:
        self._buf.extend(data)
        frames: list[bytes] = []
        while True:
            if len(self._buf) < LENGTH_BYTES:
                return frames
            length = int.from_bytes(self._buf[:LENGTH_BYTES], "big")
            if length > MAX_FRAME:
                raise ValidationError(f"frame length {length} exceeds limit")
            if len(self._buf) < LENGTH_BYTES + length:
                return frames
            frames.append(bytes(self._buf[LENGTH_BYTES:LENGTH_BYTES + length]))
            del self._buf[:LENGTH_BYTES + length]

    @property
    def pending(self) -> int:
        return len(self._buf)
