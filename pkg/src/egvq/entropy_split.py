"""Channel statistics and the variance-balanced channel split.

Each channel is treated as approximately Gaussian once its mean is removed,
so its differential entropy grows monotonically with its variance. The
split places group boundaries where cumulative variance first reaches an
equal share of the total, scanning channels in their native order.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from egvq.core import DegenerateProfileError, FeatureMatrix, GroupPartition, VarianceProfile


class ChannelStatsAccumulator:
    """Mergeable streaming accumulator for per-channel mean and variance.

    The first frame seen becomes a fixed per-channel shift; the mean is
    tracked relative to it, so channel offsets never enter the running
    sums. Each batch is reduced with a two-pass mean/M2 and folded in with
    the pairwise (Chan et al.) update. Accumulators built on disjoint
    shards can be combined with :meth:`merge`.
    """

    def __init__(self, num_channels: int):
        self.num_channels = num_channels
        self.count = 0
        self.shift = np.zeros(num_channels)
        self.offset = np.zeros(num_channels)
        self.m2 = np.zeros(num_channels)

    @property
    def mean(self) -> np.ndarray:
        return self.shift + self.offset

    def update(self, batch) -> "ChannelStatsAccumulator":
        batch = np.asarray(batch, dtype=np.float64)
        if batch.ndim == 1:
            batch = batch[None, :]
        if batch.shape[1] != self.num_channels:
            raise ValueError(f"batch has {batch.shape[1]} channels, expected {self.num_channels}")
        n = batch.shape[0]
        if n == 0:
            return self
        if self.count == 0:
            self.shift = batch[0].copy()
        centered = batch - self.shift
        offset = centered.mean(axis=0)
        self._combine(n, offset, np.sum((centered - offset) ** 2, axis=0))
        return self

    def merge(self, other: "ChannelStatsAccumulator") -> "ChannelStatsAccumulator":
        if other.num_channels != self.num_channels:
            raise ValueError("cannot merge accumulators with different channel counts")
        if other.count == 0:
            return self
        if self.count == 0:
            self.shift = other.shift.copy()
        self._combine(other.count, (other.shift - self.shift) + other.offset, other.m2)
        return self

    def _combine(self, n, offset, m2):
        total = self.count + n
        delta = offset - self.offset
        self.offset = self.offset + delta * (n / total)
        self.m2 = self.m2 + m2 + delta**2 * (self.count * n / total)
        self.count = total

    def profile(self) -> VarianceProfile:
        if self.count == 0:
            raise ValueError("no frames accumulated")
        return VarianceProfile(self.mean, self.m2 / self.count, self.count)


def compute_channel_stats(features: FeatureMatrix, chunk_frames: int = 65536) -> VarianceProfile:
    """Per-channel mean and population variance (divisor T)."""
    acc = ChannelStatsAccumulator(features.num_channels)
    values = features.values
    for start in range(0, features.num_frames, chunk_frames):
        acc.update(values[start : start + chunk_frames])
    return acc.profile()


def differential_entropy(variance: float) -> float:
    """Differential entropy in nats of a Gaussian with the given variance."""
    if not variance > 0:
        raise ValueError(f"differential entropy undefined for variance {variance!r}")
    return 0.5 * math.log(2.0 * math.pi * math.e * variance)


@dataclass(frozen=True)
class SplitReport:
    """A partition together with the share of total variance each group holds."""

    partition: GroupPartition
    per_group_variance_share: tuple[float, ...]
    total_variance: float
    extension: bool = False

    def to_dict(self) -> dict:
        return {
            "num_channels": self.partition.num_channels,
            "boundaries": list(self.partition.boundaries),
            "group_sizes": self.partition.sizes,
            "shares": list(self.per_group_variance_share),
            "total_variance": self.total_variance,
            "extension": self.extension,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_dict(cls, doc: dict) -> "SplitReport":
        partition = GroupPartition(int(doc["num_channels"]), tuple(doc["boundaries"]))
        if list(doc.get("group_sizes", partition.sizes)) != partition.sizes:
            raise ValueError("group_sizes disagree with boundaries")
        return cls(partition, tuple(float(s) for s in doc["shares"]), float(doc["total_variance"]),
                   bool(doc.get("extension", False)))

    @classmethod
    def from_json(cls, text: str) -> "SplitReport":
        return cls.from_dict(json.loads(text))


def group_shares(profile: VarianceProfile, partition: GroupPartition) -> SplitReport:
    """Variance shares for an arbitrary partition (e.g. an even split)."""
    variances = profile.variances
    total = float(np.sum(variances))
    if total <= 0:
        raise DegenerateProfileError("degenerate profile: total variance is zero")
    sums = [float(np.sum(variances[a:b])) for a, b in partition.groups]
    return SplitReport(partition, tuple(s / total for s in sums), total)


def entropy_split(profile: VarianceProfile, num_groups: int = 2) -> SplitReport:
    """Split channels so each contiguous group holds an equal variance share.

    Boundary ``g`` is the smallest channel count ``k`` whose leading
    cumulative variance reaches ``g / G`` of the total. With ``G = 2`` this
    is the smallest ``k`` with ``sum(var[:k]) >= total / 2``.

    Raises:
        DegenerateProfileError: zero total variance, or a single channel so
            heavy that two boundaries coincide.
        ValueError: ``num_groups`` outside ``[1, C]``.
    """
    variances = profile.variances
    num_channels = variances.size
    if num_groups < 1 or num_groups > num_channels:
        raise ValueError(f"num_groups must be in [1, {num_channels}], got {num_groups}")
    cumulative = np.cumsum(variances)
    total = float(cumulative[-1])
    if total <= 0:
        raise DegenerateProfileError("degenerate profile: total variance is zero")

    boundaries = []
    for g in range(1, num_groups):
        target = total * g / num_groups
        # first position where cumulative[k-1] >= target
        k = int(np.searchsorted(cumulative, target, side="left")) + 1
        if (boundaries and k <= boundaries[-1]) or k >= num_channels:
            raise DegenerateProfileError(
                f"cannot form nonempty groups: boundary {g} lands at {k} (existing {boundaries})"
            )
        boundaries.append(k)

    partition = GroupPartition(num_channels, tuple(boundaries))
    edges = [0] + boundaries + [num_channels]
    sums = [float(cumulative[b - 1] - (cumulative[a - 1] if a else 0.0)) for a, b in zip(edges, edges[1:])]
    shares = [s / total for s in sums]
    shares[-1] = 1.0 - sum(shares[:-1])
    return SplitReport(partition, tuple(shares), total, extension=num_groups > 2)


def variance_share(profile: VarianceProfile, boundary: int) -> tuple[float, float]:
    """Fraction of total variance left and right of ``boundary``."""
    num_channels = profile.num_channels
    if not 0 < boundary < num_channels:
        raise ValueError(f"boundary must be in (0, {num_channels}), got {boundary}")
    total = float(np.sum(profile.variances))
    if total <= 0:
        raise DegenerateProfileError("degenerate profile: total variance is zero")
    left = float(np.sum(profile.variances[:boundary])) / total
    return left, 1.0 - left
