"""Distortion, codebook utilization and bitrate measurements."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from egvq.core import FeatureMatrix, QuantizerSpec
from egvq.quantizers import TrainedQuantizer, encode_with_trace, partial_decode


def nmse(reference: FeatureMatrix, reconstruction: FeatureMatrix) -> float:
    """Squared Frobenius error over squared Frobenius norm of the reference."""
    ref = reference.values if isinstance(reference, FeatureMatrix) else np.asarray(reference, dtype=np.float64)
    rec = reconstruction.values if isinstance(reconstruction, FeatureMatrix) else np.asarray(reconstruction, dtype=np.float64)
    if ref.shape != rec.shape:
        raise ValueError(f"shape mismatch: {ref.shape} vs {rec.shape}")
    energy = float(np.sum(ref**2))
    if energy == 0:
        raise ValueError("undefined NMSE: reference has zero energy")
    return float(np.sum((ref - rec) ** 2)) / energy


@dataclass(frozen=True)
class NmseReport:
    """NMSE after each stage depth.

    ``cumulative[s]`` is the NMSE of the reconstruction using stages
    ``0..s`` of every group. ``incremental[s]`` is the drop contributed by
    stage ``s``, measured from ``baseline`` for the first stage.
    ``baseline`` is the NMSE of the depth-0 reconstruction: 1.0 for an
    uncentered quantizer, ``|x - mean|^2 / |x|^2`` for a centered one.
    ``per_channel_cumulative`` normalizes each channel by its own energy
    and averages over channels; it is auxiliary and not the headline figure.
    """

    cumulative: tuple[float, ...]
    incremental: tuple[float, ...]
    baseline: float
    per_channel_cumulative: tuple[float, ...] = ()

    @property
    def total(self) -> float:
        return self.cumulative[-1]

    def rows(self) -> list[dict]:
        return [
            {"stage": s + 1, "cumulative_nmse": c, "incremental_nmse": i}
            for s, (c, i) in enumerate(zip(self.cumulative, self.incremental))
        ]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=["stage", "cumulative_nmse", "incremental_nmse"], lineterminator="\n")
        writer.writeheader()
        writer.writerows(self.rows())
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "cumulative": list(self.cumulative),
            "incremental": list(self.incremental),
            "total": self.total,
            "baseline": self.baseline,
            "per_channel_cumulative": list(self.per_channel_cumulative),
        }


def _per_channel_nmse(ref: np.ndarray, rec: np.ndarray) -> float:
    energy = np.sum(ref**2, axis=0)
    live = energy > 0
    return float(np.mean(np.sum((ref - rec) ** 2, axis=0)[live] / energy[live]))


def nmse_report(q: TrainedQuantizer, features: FeatureMatrix) -> NmseReport:
    """Stage-truncated NMSE curve for a trained quantizer on ``features``."""
    codes, _ = encode_with_trace(q, features)
    cumulative, per_channel = [], []
    for depth in range(1, q.spec.depth + 1):
        recon = partial_decode(q, codes, depth)
        cumulative.append(nmse(features, recon))
        per_channel.append(_per_channel_nmse(features.values, recon.values))
    baseline = nmse(features, np.broadcast_to(q._offset(), features.values.shape))
    previous = [baseline] + cumulative[:-1]
    incremental = [p - c for p, c in zip(previous, cumulative)]
    return NmseReport(tuple(cumulative), tuple(incremental), baseline, tuple(per_channel))


@dataclass(frozen=True)
class UtilizationReport:
    """Fraction of each codebook's entries used at least once, in code-index order."""

    per_codebook: tuple[float, ...]
    frames_counted: int
    labels: tuple[str, ...] = ()
    data_split: str = "eval"

    @property
    def minimum(self) -> float:
        return min(self.per_codebook)

    def rows(self) -> list[dict]:
        labels = self.labels or tuple(str(i) for i in range(len(self.per_codebook)))
        return [{"codebook": lab, "utilization": u} for lab, u in zip(labels, self.per_codebook)]

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=["codebook", "utilization"], lineterminator="\n")
        writer.writeheader()
        writer.writerows(self.rows())
        return buf.getvalue()

    def to_dict(self) -> dict:
        return {
            "per_codebook": list(self.per_codebook),
            "labels": list(self.labels),
            "frames_counted": self.frames_counted,
            "data_split": self.data_split,
        }


def codebook_labels(spec: QuantizerSpec) -> tuple[str, ...]:
    return tuple(f"g{g}_s{s}" for g in range(spec.num_groups) for s in range(spec.depth))


def utilization_report(q: TrainedQuantizer, features: FeatureMatrix, data_split: str = "eval") -> UtilizationReport:
    """Encode the corpus once and count distinct indices hit per codebook."""
    q.reset_usage()
    encode_with_trace(q, features)
    per = tuple(cb.used_fraction() for cb in q.all_codebooks())
    return UtilizationReport(per, features.num_frames, codebook_labels(q.spec), data_split)


def bitrate(spec: QuantizerSpec, frame_rate: float, extra_codebooks: int = 0) -> float:
    """Bits per second for fixed-length indices: ``(G*D + extra) * log2(N) * frame_rate``."""
    if not frame_rate > 0:
        raise ValueError(f"frame_rate must be positive, got {frame_rate}")
    if extra_codebooks < 0:
        raise ValueError("extra_codebooks must be nonnegative")
    return (spec.num_codebooks + extra_codebooks) * spec.bits_per_index * frame_rate
