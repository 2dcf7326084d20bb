"""TUIO 1.1 output as OSC bundles over UDP.

Every frame becomes one bundle: the 2Dcur alive set, a set message per
cursor whose state changed, the custom hand profile (alive plus one set per
hand), and the frame sequence number. Cursor coordinates are normalized to
[0, 1]; velocities are backward finite differences in normalized units per
second and maccel is the absolute change of speed per second. Positions
and extents travel as float32, session ids as int32, finger codes as
one-character strings (t/i/m/r/l/u).
"""

from __future__ import annotations

import json
import logging
import socket
import struct
from dataclasses import dataclass

log = logging.getLogger(__name__)

IMMEDIATE = b"\x00\x00\x00\x00\x00\x00\x00\x01"
CURSOR_PROFILE = "/tuio/2Dcur"
HAND_PROFILE = "/custom/_hand"

DEFAULT_HOST = "127.0.0.1"
DEFAULT_PORT = 3333


class OscError(ValueError):
    pass


def f32(value: float) -> float:
    """Round a float through the float32 wire representation."""
    return struct.unpack(">f", struct.pack(">f", value))[0]


def _pad_string(s: str) -> bytes:
    raw = s.encode("ascii") + b"\x00"
    return raw + b"\x00" * (-len(raw) % 4)


@dataclass(frozen=True)
class OscMessage:
    """Address plus typed arguments (int -> int32, float -> float32, str)."""

    address: str
    args: tuple

    def type_tags(self) -> str:
        tags = ","
        for a in self.args:
            if isinstance(a, bool):
                raise OscError("boolean arguments are not supported")
            if isinstance(a, int):
                tags += "i"
            elif isinstance(a, float):
                tags += "f"
            elif isinstance(a, str):
                tags += "s"
            else:
                raise OscError(f"unencodable argument {a!r}")
        return tags


def encode_message(msg: OscMessage) -> bytes:
    """Serialize one message; every piece is padded to a 4-byte boundary."""
    out = _pad_string(msg.address) + _pad_string(msg.type_tags())
    for a in msg.args:
        if isinstance(a, int):
            if not -(2**31) <= a < 2**31:
                raise OscError(f"int32 overflow: {a}")
            out += struct.pack(">i", a)
        elif isinstance(a, float):
            out += struct.pack(">f", a)
        else:
            out += _pad_string(a)
    return out


def encode_bundle(messages, timetag: bytes = IMMEDIATE) -> bytes:
    """Wrap messages into a length-prefixed #bundle with the given time tag."""
    out = _pad_string("#bundle") + timetag
    for msg in messages:
        payload = encode_message(msg)
        out += struct.pack(">i", len(payload)) + payload
    return out


@dataclass
class CursorState:
    sid: int
    x: float
    y: float
    xvel: float = 0.0
    yvel: float = 0.0
    maccel: float = 0.0

    def args(self) -> tuple:
        return ("set", self.sid, f32(self.x), f32(self.y), f32(self.xvel), f32(self.yvel), f32(self.maccel))


@dataclass
class HandState:
    sid: int
    hand_type: str  # "left" | "right" | "unknown"
    posx: float  # bbox center, normalized
    posy: float
    width: float  # bbox extents, normalized
    height: float
    member_sids: tuple
    finger_types: tuple  # chars from {t,i,m,r,l,u}, aligned with member_sids

    def args(self) -> tuple:
        return (
            ("set", self.sid, self.hand_type, f32(self.posx), f32(self.posy), f32(self.width), f32(self.height))
            + tuple(int(s) for s in self.member_sids)
            + tuple(self.finger_types)
        )


@dataclass
class TuioFrameState:
    """Everything one frame publishes."""

    fseq: int
    cursors: list  # CursorState, every alive cursor
    updated_sids: set  # cursors that get a set message this frame
    hands: list  # HandState

    def validate(self) -> None:
        cursor_sids = {c.sid for c in self.cursors}
        for hand in self.hands:
            missing = set(hand.member_sids) - cursor_sids
            if missing:
                raise OscError(f"hand {hand.sid} references unknown cursors {sorted(missing)}")
            if len(hand.member_sids) != len(hand.finger_types):
                raise OscError(f"hand {hand.sid}: finger types misaligned with members")
            bad = set(hand.finger_types) - set("timrlu")
            if bad:
                raise OscError(f"hand {hand.sid}: invalid finger codes {sorted(bad)}")
            if hand.hand_type not in ("left", "right", "unknown"):
                raise OscError(f"hand {hand.sid}: invalid type {hand.hand_type!r}")


def frame_messages(state: TuioFrameState) -> list[OscMessage]:
    """Messages of one frame bundle, in protocol order."""
    state.validate()
    msgs = [
        OscMessage(
            CURSOR_PROFILE, ("alive",) + tuple(sorted(c.sid for c in state.cursors))
        )
    ]
    for cur in sorted(state.cursors, key=lambda c: c.sid):
        if cur.sid in state.updated_sids:
            msgs.append(OscMessage(CURSOR_PROFILE, cur.args()))
    msgs.append(
        OscMessage(HAND_PROFILE, ("alive",) + tuple(sorted(h.sid for h in state.hands)))
    )
    for hand in sorted(state.hands, key=lambda h: h.sid):
        msgs.append(OscMessage(HAND_PROFILE, hand.args()))
    msgs.append(OscMessage(CURSOR_PROFILE, ("fseq", state.fseq)))
    return msgs


def encode_frame(state: TuioFrameState) -> bytes:
    """One OSC bundle per frame."""
    return encode_bundle(frame_messages(state))


class TuioSink:
    """Fire-and-forget UDP sender; socket errors never stop the pipeline."""

    def __init__(self, host: str = DEFAULT_HOST, port: int = DEFAULT_PORT):
        self.destination = (host, port)
        self.socket = socket.socket(socket.AF_INET, socket.SOCK_DGRAM)

    def send(self, bundle: bytes) -> bool:
        try:
            self.socket.sendto(bundle, self.destination)
            return True
        except OSError as exc:
            log.warning("TUIO send to %s failed: %s", self.destination, exc)
            return False

    def close(self) -> None:
        self.socket.close()


class EventLog:
    """Newline-delimited JSON mirror of every emitted bundle.

    Records are built with a fixed key order and float32-rounded values, so
    logs of identical runs are byte-identical.
    """

    def __init__(self, path):
        self._fh = open(path, "w", encoding="ascii")

    def write_frame(self, frame_index: int, messages: list) -> None:
        record = {
            "frame": frame_index,
            "messages": [{"addr": m.address, "args": list(m.args)} for m in messages],
        }
        self._fh.write(json.dumps(record, separators=(",", ":")) + "\n")

    def close(self) -> None:
        self._fh.flush()
        self._fh.close()


def read_event_log(path) -> list[dict]:
    with open(path, "r", encoding="ascii") as fh:
        return [json.loads(line) for line in fh if line.strip()]
