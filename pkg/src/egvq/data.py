"""Synthetic latent corpora and feature file I/O.

Synthetic frames are Gaussian. Randomness comes from the Philox4x64-10
counter-based generator with key ``(seed, 0)``. Frame ``t`` consumes
``W`` 64-bit words (``W`` = ``C + 1`` rounded up to a multiple of 4), i.e.
the four-word output blocks for counter values ``t * W / 4 + 1`` through
``(t + 1) * W / 4``, so any frame range can be regenerated independently. Words are mapped to uniforms in ``(0, 1)`` as
``((w >> 11) + 0.5) * 2**-53`` and paired into standard normals with the
Box-Muller transform (cosine branch first)::

    z0 = sqrt(-2 ln u0) * cos(2 pi u1)
    z1 = sqrt(-2 ln u0) * sin(2 pi u1)

The first ``C`` normals of a frame are the per-channel noise ``e_k`` and
normal ``C`` is the shared factor ``f``; a frame is
``x_k = mean_k + sigma_k * (sqrt(1 - rho) * e_k + sqrt(rho) * f)``.

Power-law profiles use ``v_k = v0 / (k + 1) ** alpha`` with zero-based ``k``.
These profiles are surrogates: the channel statistics of a trained codec
encoder are not available here.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Union

import numpy as np

from egvq.core import FeatureMatrix, FormatError

FEATURE_MAGIC = b"EGVQFT1\x00"
PROFILE_KINDS = ("uniform", "power_law", "explicit")


@dataclass(frozen=True)
class SyntheticConfig:
    """Recipe for a synthetic Gaussian corpus.

    ``profile`` selects the variance shape: ``uniform`` uses ``v0``,
    ``power_law`` uses ``v0`` and ``alpha``, ``explicit`` uses ``variances``.
    """

    num_channels: int
    num_frames: int
    profile: str = "uniform"
    v0: float = 1.0
    alpha: float = 1.0
    variances: Optional[tuple[float, ...]] = None
    correlation: float = 0.0
    seed: int = 0
    mean_offset: Union[float, tuple[float, ...]] = 0.0

    def __post_init__(self):
        if self.profile not in PROFILE_KINDS:
            raise ValueError(f"profile must be one of {PROFILE_KINDS}, got {self.profile!r}")
        if self.num_frames < 1:
            raise ValueError("num_frames must be >= 1")
        if self.profile == "explicit":
            if self.variances is None:
                raise ValueError("explicit profile needs variances")
            object.__setattr__(self, "variances", tuple(float(v) for v in self.variances))
            if len(self.variances) != self.num_channels:
                raise ValueError(f"{len(self.variances)} variances given for {self.num_channels} channels")
        if self.num_channels < 1:
            raise ValueError("num_channels must be >= 1")
        if not 0.0 <= self.correlation < 1.0:
            raise ValueError(f"correlation must be in [0, 1), got {self.correlation}")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")
        if not isinstance(self.mean_offset, (int, float)):
            object.__setattr__(self, "mean_offset", tuple(float(m) for m in self.mean_offset))
            if len(self.mean_offset) != self.num_channels:
                raise ValueError("mean_offset vector length must equal num_channels")
        targets = self.target_variances()
        if not np.all(np.isfinite(targets)) or np.any(targets <= 0):
            raise ValueError("all variances must be finite and positive")

    def target_variances(self) -> np.ndarray:
        k = np.arange(self.num_channels, dtype=np.float64)
        if self.profile == "uniform":
            return np.full(self.num_channels, float(self.v0))
        if self.profile == "power_law":
            return float(self.v0) / (k + 1.0) ** float(self.alpha)
        return np.asarray(self.variances, dtype=np.float64)

    def means(self) -> np.ndarray:
        return np.broadcast_to(np.asarray(self.mean_offset, dtype=np.float64), (self.num_channels,)).copy()

    def to_dict(self) -> dict:
        doc = {
            "num_channels": self.num_channels,
            "num_frames": self.num_frames,
            "profile": self.profile,
            "v0": self.v0,
            "alpha": self.alpha,
            "variances": None if self.variances is None else list(self.variances),
            "correlation": self.correlation,
            "seed": self.seed,
            "mean_offset": self.mean_offset if isinstance(self.mean_offset, (int, float)) else list(self.mean_offset),
        }
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "SyntheticConfig":
        known = {k: v for k, v in doc.items() if k in cls.__dataclass_fields__}
        unknown = set(doc) - set(known)
        if unknown:
            raise ValueError(f"unknown synthetic config fields: {sorted(unknown)}")
        if known.get("variances") is not None:
            known["variances"] = tuple(known["variances"])
        if isinstance(known.get("mean_offset"), list):
            known["mean_offset"] = tuple(known["mean_offset"])
        return cls(**known)

    @classmethod
    def from_json(cls, text: str) -> "SyntheticConfig":
        return cls.from_dict(json.loads(text))


def words_per_frame(num_channels: int) -> int:
    return -(-(num_channels + 1) // 4) * 4


def raw_words(seed: int, first_frame: int, num_frames: int, num_channels: int) -> np.ndarray:
    """Philox4x64-10 output words for frames ``[first_frame, first_frame + num_frames)``."""
    width = words_per_frame(num_channels)
    gen = np.random.Philox(key=seed, counter=first_frame * (width // 4))
    return gen.random_raw(num_frames * width).reshape(num_frames, width)


def box_muller(words: np.ndarray) -> np.ndarray:
    """Map pairs of 64-bit words to pairs of standard normals, along the last axis."""
    u = ((words >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53
    u0, u1 = u[..., 0::2], u[..., 1::2]
    radius = np.sqrt(-2.0 * np.log(u0))
    angle = 2.0 * np.pi * u1
    out = np.empty(u.shape)
    out[..., 0::2] = radius * np.cos(angle)
    out[..., 1::2] = radius * np.sin(angle)
    return out


def generate_frames(config: SyntheticConfig, first_frame: int, num_frames: int) -> np.ndarray:
    """Frames ``[first_frame, first_frame + num_frames)`` of the synthetic corpus."""
    c = config.num_channels
    normals = box_muller(raw_words(config.seed, first_frame, num_frames, c))
    noise, factor = normals[:, :c], normals[:, c : c + 1]
    rho = config.correlation
    sigma = np.sqrt(config.target_variances())
    if rho > 0:
        mixed = np.sqrt(1.0 - rho) * noise + np.sqrt(rho) * factor
    else:
        mixed = noise
    return config.means() + mixed * sigma


def generate(config: SyntheticConfig, chunk_frames: int = 16384) -> FeatureMatrix:
    """Draw the full synthetic corpus described by ``config``."""
    parts = [
        generate_frames(config, start, min(chunk_frames, config.num_frames - start))
        for start in range(0, config.num_frames, chunk_frames)
    ]
    return FeatureMatrix(np.concatenate(parts, axis=0))


def write_features(features: FeatureMatrix, path) -> None:
    """Binary feature file: magic, u32 T, u32 C, then T*C little-endian float32, frame-major.

    Values are stored as float32; the roundtrip is bit-exact for data that
    is already float32-representable.
    """
    header = FEATURE_MAGIC + np.array([features.num_frames, features.num_channels], dtype="<u4").tobytes()
    values32 = features.values.astype("<f4")
    if not np.all(np.isfinite(values32)):
        raise ValueError("features overflow float32")
    Path(path).write_bytes(header + values32.tobytes())


def _read_csv(path: Path) -> FeatureMatrix:
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise FormatError(f"{path}: empty CSV")
    header, body = rows[0], [r for r in rows[1:] if r]
    if not body:
        raise FormatError(f"{path}: CSV has no frames")
    if any(len(r) != len(header) for r in body):
        raise FormatError(f"{path}: ragged CSV rows")
    try:
        values = np.array([[float(v) for v in r] for r in body])
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from exc
    return FeatureMatrix(values)


def read_features(path) -> FeatureMatrix:
    """Read a binary ``.egft`` file, or a CSV with a ``c0,c1,...`` header row."""
    path = Path(path)
    data = path.read_bytes()
    if not data:
        raise FormatError(f"{path}: empty feature file")
    if data[:8] != FEATURE_MAGIC:
        if path.suffix.lower() == ".csv" or data[:1] in (b"c", b"C"):
            return _read_csv(path)
        raise FormatError(f"{path}: bad magic")
    if len(data) < 16:
        raise FormatError(f"{path}: truncated header")
    t, c = (int(v) for v in np.frombuffer(data[8:16], dtype="<u4"))
    body = data[16:]
    if len(body) != t * c * 4:
        raise FormatError(f"{path}: header says {t}x{c} but payload has {len(body)} bytes")
    if t == 0 or c == 0:
        raise FormatError(f"{path}: empty feature matrix {t}x{c}")
    values = np.frombuffer(body, dtype="<f4").reshape(t, c).astype(np.float64)
    return FeatureMatrix(values)
