"""Fixed-length bit packing of code indices.

Layout of a ``.egvq`` stream (header fields little-endian)::

    8 bytes  magic  b"EGVQBS1\\0"
    u32      T      frames
    u16      G      groups
    u16      D      stages per group
    u32      N      codebook size (power of two)
    u32      frame rate in millihertz
    payload  T*G*D indices of log2(N) bits each, frame-major, then group,
             then stage; MSB-first within each byte; zero-padded to a
             byte boundary at the end of the stream only.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from egvq.core import FormatError, QuantizerSpec, is_power_of_two
from egvq.quantizers import CodeFrame

STREAM_MAGIC = b"EGVQBS1\x00"
_HEADER = struct.Struct("<8sIHHII")
HEADER_SIZE = _HEADER.size


class TruncatedStreamError(FormatError):
    """The payload is shorter than the header promises."""


@dataclass(frozen=True)
class PackedStream:
    num_frames: int
    num_groups: int
    depth: int
    codebook_size: int
    frame_rate_millihertz: int
    payload: bytes

    @property
    def bits_per_index(self) -> int:
        return self.codebook_size.bit_length() - 1

    @property
    def payload_bits(self) -> int:
        return self.num_frames * self.num_groups * self.depth * self.bits_per_index

    @property
    def frame_rate(self) -> float:
        return self.frame_rate_millihertz / 1000.0

    @property
    def duration(self) -> float:
        return self.num_frames / self.frame_rate

    def header_bytes(self) -> bytes:
        return _HEADER.pack(STREAM_MAGIC, self.num_frames, self.num_groups, self.depth,
                            self.codebook_size, self.frame_rate_millihertz)

    def to_bytes(self) -> bytes:
        return self.header_bytes() + self.payload

    @classmethod
    def from_bytes(cls, data: bytes) -> "PackedStream":
        if len(data) < HEADER_SIZE:
            raise TruncatedStreamError(f"truncated: {len(data)} bytes is shorter than the header")
        magic, t, g, d, n, fr = _HEADER.unpack_from(data)
        if magic != STREAM_MAGIC:
            raise FormatError(f"bad magic {magic!r}")
        if not is_power_of_two(n) or g < 1 or d < 1:
            raise FormatError(f"invalid header: G={g} D={d} N={n}")
        stream = cls(t, g, d, n, fr, bytes(data[HEADER_SIZE:]))
        expected = (stream.payload_bits + 7) // 8
        if len(stream.payload) < expected:
            raise TruncatedStreamError(f"truncated: payload has {len(stream.payload)} bytes, expected {expected}")
        if len(stream.payload) > expected:
            raise FormatError(f"trailing garbage: {len(stream.payload) - expected} bytes beyond padding")
        return stream

    def write(self, path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def read(cls, path) -> "PackedStream":
        return cls.from_bytes(Path(path).read_bytes())


def pack(codes: CodeFrame, spec: QuantizerSpec, frame_rate: float) -> PackedStream:
    """Pack indices at exactly ``log2(N)`` bits each."""
    if codes.num_groups != spec.num_groups or codes.depth != spec.depth:
        raise ValueError(f"code layout {codes.num_groups}x{codes.depth} does not match spec {spec.label}")
    n = spec.codebook_size
    if np.any(codes.indices >= n):
        raise ValueError(f"index out of range for codebook size {n}")
    if not frame_rate > 0:
        raise ValueError("frame_rate must be positive")
    millihertz = int(round(frame_rate * 1000))
    if abs(millihertz - frame_rate * 1000) > 1e-6:
        raise ValueError(f"frame_rate {frame_rate} is not representable in whole millihertz")
    width = spec.bits_per_index
    flat = codes.indices.reshape(-1).astype(np.uint64)
    if width == 0:
        payload = b""
    else:
        shifts = np.arange(width - 1, -1, -1, dtype=np.uint64)
        bits = ((flat[:, None] >> shifts[None, :]) & np.uint64(1)).astype(np.uint8)
        payload = np.packbits(bits.reshape(-1), bitorder="big").tobytes()
    return PackedStream(codes.num_frames, spec.num_groups, spec.depth, n, millihertz, payload)


def unpack(stream: PackedStream) -> CodeFrame:
    """Exact inverse of :func:`pack`. Nonzero padding bits are rejected."""
    expected = (stream.payload_bits + 7) // 8
    if len(stream.payload) < expected:
        raise TruncatedStreamError(f"truncated: payload has {len(stream.payload)} bytes, expected {expected}")
    if len(stream.payload) > expected:
        raise FormatError(f"trailing garbage: {len(stream.payload) - expected} bytes beyond padding")
    width = stream.bits_per_index
    count = stream.num_frames * stream.num_groups * stream.depth
    if width == 0:
        values = np.zeros(count, dtype=np.int64)
    else:
        bits = np.unpackbits(np.frombuffer(stream.payload, dtype=np.uint8), bitorder="big")
        if np.any(bits[stream.payload_bits :]):
            raise FormatError("nonzero padding bits")
        bits = bits[: stream.payload_bits].reshape(count, width).astype(np.int64)
        weights = np.left_shift(1, np.arange(width - 1, -1, -1, dtype=np.int64))
        values = bits @ weights
    indices = values.reshape(stream.num_frames, stream.num_groups * stream.depth)
    return CodeFrame(indices, stream.num_groups, stream.depth)
