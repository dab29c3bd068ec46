"""Domain types shared across the toolkit.

Channel indices are zero-based throughout. A split written as ``k`` in the
usual one-based convention ("the first k channels") therefore maps to the
half-open range ``[0, k)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np


class EgvqError(Exception):
    """Base class for all toolkit errors."""


class SpecError(EgvqError, ValueError):
    """A quantizer specification or partition is inconsistent."""


class DegenerateProfileError(EgvqError, ValueError):
    """A variance profile cannot be split as requested."""


class FormatError(EgvqError, ValueError):
    """A serialized file or stream is malformed."""


def _readonly(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class FeatureMatrix:
    """T frames by C channels of latent activations (row = frame).

    Values are stored as a read-only float64 array. Construction rejects
    NaN and infinite entries.
    """

    values: np.ndarray

    def __post_init__(self):
        values = np.array(self.values, dtype=np.float64, copy=True)
        if values.ndim != 2:
            raise ValueError(f"features must be 2-D (frames, channels), got shape {values.shape}")
        if values.shape[0] < 1 or values.shape[1] < 1:
            raise ValueError(f"features need at least one frame and one channel, got {values.shape}")
        if not np.all(np.isfinite(values)):
            raise ValueError("features contain non-finite values")
        object.__setattr__(self, "values", _readonly(values))

    @property
    def num_frames(self) -> int:
        return self.values.shape[0]

    @property
    def num_channels(self) -> int:
        return self.values.shape[1]

    def take_frames(self, index) -> "FeatureMatrix":
        return FeatureMatrix(self.values[index])


@dataclass(frozen=True)
class VarianceProfile:
    """Per-channel means and population variances over ``frame_count`` frames."""

    means: np.ndarray
    variances: np.ndarray
    frame_count: int

    def __post_init__(self):
        means = _readonly(np.array(self.means, dtype=np.float64, copy=True).reshape(-1))
        variances = _readonly(np.array(self.variances, dtype=np.float64, copy=True).reshape(-1))
        if means.shape != variances.shape:
            raise ValueError(f"means and variances differ in length: {means.size} vs {variances.size}")
        if means.size < 1:
            raise ValueError("profile needs at least one channel")
        if np.any(variances < 0) or not np.all(np.isfinite(variances)):
            raise ValueError("variances must be finite and nonnegative")
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "variances", variances)

    @classmethod
    def from_variances(cls, variances: Sequence[float], frame_count: int = 0) -> "VarianceProfile":
        variances = np.asarray(variances, dtype=np.float64)
        return cls(np.zeros_like(variances), variances, frame_count)

    @property
    def num_channels(self) -> int:
        return self.variances.size


@dataclass(frozen=True)
class GroupPartition:
    """Contiguous channel groups given by interior split indices.

    ``GroupPartition(512, (237,))`` describes ``[0, 237)`` and ``[237, 512)``.
    """

    num_channels: int
    boundaries: tuple[int, ...] = ()

    def __post_init__(self):
        boundaries = tuple(int(b) for b in self.boundaries)
        if self.num_channels < 1:
            raise SpecError(f"num_channels must be positive, got {self.num_channels}")
        edges = (0,) + boundaries + (self.num_channels,)
        for lo, hi in zip(edges, edges[1:]):
            if hi <= lo:
                raise SpecError(f"empty or out-of-order group [{lo}, {hi}) in partition {edges}")
        object.__setattr__(self, "boundaries", boundaries)

    @classmethod
    def from_ranges(cls, ranges: Sequence[tuple[int, int]]) -> "GroupPartition":
        """Build a partition from explicit ``[start, end)`` ranges."""
        if not ranges:
            raise SpecError("partition needs at least one range")
        if ranges[0][0] != 0:
            raise SpecError(f"first range must start at 0, got {ranges[0]}")
        for (_, end), (start, _) in zip(ranges, ranges[1:]):
            if start != end:
                raise SpecError(f"ranges must be contiguous, got gap/overlap at {end}->{start}")
        return cls(ranges[-1][1], tuple(start for start, _ in ranges[1:]))

    @classmethod
    def even(cls, num_channels: int, num_groups: int) -> "GroupPartition":
        """Equal-width groups; the last ``C mod G`` groups take one extra channel each."""
        if num_groups < 1 or num_groups > num_channels:
            raise SpecError(f"cannot split {num_channels} channels into {num_groups} groups")
        base, extra = divmod(num_channels, num_groups)
        sizes = [base + (1 if g >= num_groups - extra else 0) for g in range(num_groups)]
        return cls(num_channels, tuple(np.cumsum(sizes)[:-1].tolist()))

    @property
    def num_groups(self) -> int:
        return len(self.boundaries) + 1

    @property
    def groups(self) -> list[tuple[int, int]]:
        edges = (0,) + self.boundaries + (self.num_channels,)
        return list(zip(edges, edges[1:]))

    @property
    def sizes(self) -> list[int]:
        return [end - start for start, end in self.groups]


@dataclass(eq=False)
class Codebook:
    """N codewords of dimension d plus per-pass usage counters.

    ``inertia_history`` holds the Lloyd objective per iteration when the
    codebook came out of :func:`egvq.vq.train_codebook`.
    """

    codewords: np.ndarray
    usage_counts: np.ndarray = None
    inertia_history: tuple[float, ...] = ()

    def __post_init__(self):
        codewords = np.array(self.codewords, dtype=np.float64, copy=True)
        if codewords.ndim != 2 or codewords.shape[0] < 1 or codewords.shape[1] < 1:
            raise ValueError(f"codewords must be a nonempty N x d matrix, got shape {codewords.shape}")
        if not np.all(np.isfinite(codewords)):
            raise ValueError("codewords contain non-finite values")
        self.codewords = _readonly(codewords)
        if self.usage_counts is None:
            self.usage_counts = np.zeros(codewords.shape[0], dtype=np.int64)
        else:
            counts = np.array(self.usage_counts, dtype=np.int64)
            if counts.shape != (codewords.shape[0],) or np.any(counts < 0):
                raise ValueError("usage_counts must be a nonnegative vector of length N")
            self.usage_counts = counts

    @property
    def size(self) -> int:
        return self.codewords.shape[0]

    @property
    def dim(self) -> int:
        return self.codewords.shape[1]

    def reset_usage(self) -> None:
        self.usage_counts[:] = 0

    def used_fraction(self) -> float:
        return float(np.count_nonzero(self.usage_counts)) / self.size


PartitionSource = Union[GroupPartition, str]
PARTITION_MARKERS = ("even", "entropy-guided")


def is_power_of_two(n: int) -> bool:
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class QuantizerSpec:
    """Topology of a grouped residual quantizer: G groups of depth D, N codewords each.

    ``partition`` is either an explicit :class:`GroupPartition` or one of the
    markers ``"even"`` / ``"entropy-guided"``, resolved at training time.
    ``center`` subtracts the training-set channel means before encoding.
    """

    num_groups: int
    depth: int
    codebook_size: int
    partition: PartitionSource = "even"
    commitment_weight: float = 1.0
    center: bool = False

    def __post_init__(self):
        if self.num_groups < 1:
            raise SpecError(f"num_groups must be >= 1, got {self.num_groups}")
        if self.depth < 1:
            raise SpecError(f"depth must be >= 1, got {self.depth}")
        if not is_power_of_two(self.codebook_size):
            raise SpecError(f"codebook_size must be a power of two, got {self.codebook_size}")
        if self.commitment_weight < 0:
            raise SpecError("commitment_weight must be nonnegative")
        if isinstance(self.partition, str):
            if self.partition not in PARTITION_MARKERS:
                raise SpecError(f"unknown partition marker {self.partition!r}")
        elif not isinstance(self.partition, GroupPartition):
            raise SpecError(f"partition must be a GroupPartition or marker, got {type(self.partition).__name__}")

    @property
    def num_codebooks(self) -> int:
        return self.num_groups * self.depth

    @property
    def bits_per_index(self) -> int:
        return self.codebook_size.bit_length() - 1

    @property
    def bits_per_frame(self) -> int:
        return self.num_codebooks * self.bits_per_index

    @property
    def label(self) -> str:
        return f"{self.num_groups}x{self.depth}"


def validate_spec(spec: QuantizerSpec, num_channels: int) -> QuantizerSpec:
    """Check ``spec`` against a channel count and return it unchanged.

    Raises:
        SpecError: if the partition's arity or coverage disagrees with the
            spec, or groups cannot be nonempty.
    """
    if num_channels < 1:
        raise SpecError(f"num_channels must be positive, got {num_channels}")
    if spec.num_groups > num_channels:
        raise SpecError(f"{spec.num_groups} groups cannot be nonempty over {num_channels} channels")
    partition = spec.partition
    if isinstance(partition, GroupPartition):
        if partition.num_groups != spec.num_groups:
            raise SpecError(
                f"partition has {partition.num_groups} groups but spec declares {spec.num_groups}"
            )
        if partition.num_channels != num_channels:
            raise SpecError(
                f"partition covers {partition.num_channels} channels, features have {num_channels}"
            )
    return spec
