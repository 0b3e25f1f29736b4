"""Protocol messages, their binary framing, and transcripts.

Frame layout (all big-endian)::

    u32 payload length | u8 kind | payload
    payload = u32 round | u8 sender | body

Body encodings per value type:

* integer: u32 magnitude length | magnitude | u8 sign (0 non-negative, 1 negative)
* integer vector: u32 count | integers
* real vector: u32 count | IEEE-754 binary64 values
* ciphertext vector: u32 count | (u32 length | magnitude) per element
* index vector: u32 count | u32 per index
* bit vector: u32 count | u8 per bit

A transcript file is ``b"VFLT" | u8 version | frames``.
"""
from __future__ import annotations

import struct
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path
from typing import Any, Iterator

import numpy as np

from ..errors import ParseError

TRANSCRIPT_MAGIC = b"VFLT"
TRANSCRIPT_VERSION = 1


class Party(IntEnum):
    ALICE = 0
    BOB = 1


class Kind(IntEnum):
    PUBLIC_KEY = 1
    BATCH_ANNOUNCE = 2
    PARTIAL_LIN_PRED = 3
    ENC_RESIDUES = 4
    MASKED_ENC_GRADIENT = 5
    DEC_MASKED_GRADIENT = 6
    PLAIN_NOISED_RESIDUES = 7
    # Alice's own mask, recorded locally and never transmitted.
    ALICE_MASK = 8


@dataclass
class ProtocolMessage:
    """One datum crossing (or, for ``ALICE_MASK``, recorded at) the party boundary.

    ``value`` depends on ``kind``:

    ========================  ==========================================
    PUBLIC_KEY                ``(n, fp_scale)``
    BATCH_ANNOUNCE            ``(subset_indices, rr_bits)``
    PARTIAL_LIN_PRED          float vector
    PLAIN_NOISED_RESIDUES     float vector
    ENC_RESIDUES              list of ciphertext integers
    MASKED_ENC_GRADIENT       list of ciphertext integers
    DEC_MASKED_GRADIENT       list of signed fixed-point integers
    ALICE_MASK                list of signed fixed-point integers
    ========================  ==========================================
    """

    kind: Kind
    round: int
    sender: Party
    value: Any

    def to_frame(self) -> bytes:
        payload = struct.pack(">IB", self.round, int(self.sender)) + _ENCODERS[self.kind](self.value)
        return struct.pack(">IB", len(payload), int(self.kind)) + payload

    @classmethod
    def from_frame(cls, frame: bytes) -> "ProtocolMessage":
        if len(frame) < 10:
            raise ParseError("frame too short")
        length, kind_byte = struct.unpack_from(">IB", frame, 0)
        if length != len(frame) - 5:
            raise ParseError(f"frame length field {length} does not match {len(frame) - 5}")
        try:
            kind = Kind(kind_byte)
        except ValueError:
            raise ParseError(f"unknown message kind {kind_byte}") from None
        rnd, sender = struct.unpack_from(">IB", frame, 5)
        if sender not in (0, 1):
            raise ParseError(f"unknown sender {sender}")
        reader = _Reader(frame, 10)
        value = _DECODERS[kind](reader)
        if reader.pos != len(frame):
            raise ParseError(f"{len(frame) - reader.pos} trailing bytes in {kind.name} frame")
        return cls(kind, rnd, Party(sender), value)


class _Reader:
    def __init__(self, buf: bytes, pos: int = 0):
        self.buf = buf
        self.pos = pos

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise ParseError("truncated frame")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return struct.unpack(">I", self.take(4))[0]


def _enc_int(x: int) -> bytes:
    mag = abs(int(x))
    raw = mag.to_bytes(max(1, (mag.bit_length() + 7) // 8), "big")
    return struct.pack(">I", len(raw)) + raw + bytes([1 if x < 0 else 0])


def _dec_int(r: _Reader) -> int:
    mag = int.from_bytes(r.take(r.u32()), "big")
    sign = r.take(1)[0]
    if sign not in (0, 1):
        raise ParseError("bad integer sign byte")
    return -mag if sign else mag


def _enc_ints(xs) -> bytes:
    return struct.pack(">I", len(xs)) + b"".join(_enc_int(x) for x in xs)


def _dec_ints(r: _Reader) -> list[int]:
    return [_dec_int(r) for _ in range(r.u32())]


def _enc_reals(v) -> bytes:
    v = np.asarray(v, dtype=">f8")
    return struct.pack(">I", v.size) + v.tobytes()


def _dec_reals(r: _Reader) -> np.ndarray:
    count = r.u32()
    return np.frombuffer(r.take(8 * count), dtype=">f8").astype(np.float64)


def _enc_ciphers(cs) -> bytes:
    parts = [struct.pack(">I", len(cs))]
    for c in cs:
        raw = int(c).to_bytes(max(1, (int(c).bit_length() + 7) // 8), "big")
        parts.append(struct.pack(">I", len(raw)) + raw)
    return b"".join(parts)


def _dec_ciphers(r: _Reader) -> list[int]:
    return [int.from_bytes(r.take(r.u32()), "big") for _ in range(r.u32())]


def _enc_announce(value) -> bytes:
    idx, bits = value
    idx = np.asarray(idx, dtype=">u4")
    bits = np.asarray(bits, dtype=np.uint8)
    return (struct.pack(">I", idx.size) + idx.tobytes()
            + struct.pack(">I", bits.size) + bits.tobytes())


def _dec_announce(r: _Reader):
    n = r.u32()
    idx = np.frombuffer(r.take(4 * n), dtype=">u4").astype(np.int64)
    m = r.u32()
    bits = np.frombuffer(r.take(m), dtype=np.uint8).astype(np.int8)
    if np.any(bits > 1):
        raise ParseError("bit vector entries must be 0 or 1")
    return idx, bits


def _enc_pubkey(value) -> bytes:
    n, scale = value
    return _enc_int(n) + _enc_int(scale)


def _dec_pubkey(r: _Reader):
    return _dec_int(r), _dec_int(r)


_ENCODERS = {
    Kind.PUBLIC_KEY: _enc_pubkey,
    Kind.BATCH_ANNOUNCE: _enc_announce,
    Kind.PARTIAL_LIN_PRED: _enc_reals,
    Kind.ENC_RESIDUES: _enc_ciphers,
    Kind.MASKED_ENC_GRADIENT: _enc_ciphers,
    Kind.DEC_MASKED_GRADIENT: _enc_ints,
    Kind.PLAIN_NOISED_RESIDUES: _enc_reals,
    Kind.ALICE_MASK: _enc_ints,
}

_DECODERS = {
    Kind.PUBLIC_KEY: _dec_pubkey,
    Kind.BATCH_ANNOUNCE: _dec_announce,
    Kind.PARTIAL_LIN_PRED: _dec_reals,
    Kind.ENC_RESIDUES: _dec_ciphers,
    Kind.MASKED_ENC_GRADIENT: _dec_ciphers,
    Kind.DEC_MASKED_GRADIENT: _dec_ints,
    Kind.PLAIN_NOISED_RESIDUES: _dec_reals,
    Kind.ALICE_MASK: _dec_ints,
}


def iter_frames(buf: bytes, pos: int = 0) -> Iterator[bytes]:
    while pos < len(buf):
        if pos + 5 > len(buf):
            raise ParseError("truncated frame header")
        (length,) = struct.unpack_from(">I", buf, pos)
        end = pos + 5 + length
        if end > len(buf):
            raise ParseError("truncated frame")
        yield buf[pos:end]
        pos = end


@dataclass
class Transcript:
    """Ordered frames exchanged during a run, plus per-round wall-clock times."""

    frames: list[bytes] = field(default_factory=list)
    round_seconds: list[float] = field(default_factory=list)

    def append(self, frame: bytes) -> None:
        self.frames.append(frame)

    @property
    def messages(self) -> list[ProtocolMessage]:
        return [ProtocolMessage.from_frame(f) for f in self.frames]

    def to_bytes(self) -> bytes:
        return TRANSCRIPT_MAGIC + bytes([TRANSCRIPT_VERSION]) + b"".join(self.frames)

    @classmethod
    def from_bytes(cls, buf: bytes) -> "Transcript":
        if buf[:4] != TRANSCRIPT_MAGIC:
            raise ParseError("not a transcript (bad magic)")
        if len(buf) < 5 or buf[4] != TRANSCRIPT_VERSION:
            raise ParseError(f"unsupported transcript version {buf[4] if len(buf) > 4 else None}")
        t = cls(list(iter_frames(buf, 5)))
        for f in t.frames:
            ProtocolMessage.from_frame(f)
        return t

    def save(self, path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def load(cls, path) -> "Transcript":
        return cls.from_bytes(Path(path).read_bytes())
