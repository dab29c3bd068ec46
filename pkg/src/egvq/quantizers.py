"""Residual and grouped residual quantizers built from single-codebook VQ.

Topologies:

* RVQ: one group over all channels, ``D`` residual stages.
* GRVQ: ``G`` contiguous channel groups of equal width, each with its own
  ``D``-stage residual chain.
* EG-GRVQ: as GRVQ, but group boundaries equalize cumulative channel
  variance (see :mod:`egvq.entropy_split`).

Code indices are laid out group-major then stage: ``g0s0, g0s1, ..., g1s0``.

Residuals are always formed as ``slice - partial_reconstruction`` where the
partial reconstruction accumulates codewords in stage order. Decoding sums
codewords in the same order, so the encoder's final residual is exactly the
decoded error.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional

import numpy as np

from egvq.core import (
    Codebook,
    FeatureMatrix,
    FormatError,
    GroupPartition,
    QuantizerSpec,
    SpecError,
    validate_spec,
)
from egvq.entropy_split import SplitReport, compute_channel_stats, entropy_split, group_shares
from egvq.vq import TrainConfig, nearest_codewords, quantize, train_codebook

CODEBOOK_MAGIC = b"EGVQCB1\x00"


@dataclass(frozen=True)
class CodeFrame:
    """T x (G*D) integer code indices, group-major then stage."""

    indices: np.ndarray
    num_groups: int
    depth: int

    def __post_init__(self):
        indices = np.array(self.indices, dtype=np.int64, copy=True)
        if indices.ndim != 2 or indices.shape[1] != self.num_groups * self.depth:
            raise ValueError(
                f"indices of shape {indices.shape} do not match {self.num_groups}x{self.depth} layout"
            )
        if np.any(indices < 0):
            raise ValueError("code indices must be nonnegative")
        indices.setflags(write=False)
        object.__setattr__(self, "indices", indices)

    @property
    def num_frames(self) -> int:
        return self.indices.shape[0]

    def column(self, group: int, stage: int) -> np.ndarray:
        return self.indices[:, group * self.depth + stage]


@dataclass
class TrainedQuantizer:
    """A resolved spec, its partition, and ``codebooks[g][s]``."""

    spec: QuantizerSpec
    partition: GroupPartition
    codebooks: list[list[Codebook]]
    means: Optional[np.ndarray] = None
    split_report: Optional[SplitReport] = None

    def __post_init__(self):
        spec = self.spec
        if self.partition.num_groups != spec.num_groups:
            raise SpecError("partition group count disagrees with spec")
        if len(self.codebooks) != spec.num_groups or any(len(row) != spec.depth for row in self.codebooks):
            raise SpecError(f"expected {spec.num_groups}x{spec.depth} codebooks")
        for g, (start, end) in enumerate(self.partition.groups):
            for s, cb in enumerate(self.codebooks[g]):
                if cb.dim != end - start:
                    raise SpecError(f"codebook g{g}_s{s} has dim {cb.dim}, group width is {end - start}")
                if cb.size != spec.codebook_size:
                    raise SpecError(f"codebook g{g}_s{s} has {cb.size} entries, spec says {spec.codebook_size}")
        if spec.center and self.means is None:
            raise SpecError("centered spec requires channel means")
        if self.means is not None:
            self.means = np.asarray(self.means, dtype=np.float64).reshape(-1)
            if self.means.size != self.num_channels:
                raise SpecError("means length disagrees with channel count")

    @property
    def num_channels(self) -> int:
        return self.partition.num_channels

    def all_codebooks(self) -> list[Codebook]:
        """Codebooks in code-index order (group-major then stage)."""
        return [cb for row in self.codebooks for cb in row]

    def reset_usage(self) -> None:
        for cb in self.all_codebooks():
            cb.reset_usage()

    def _offset(self) -> np.ndarray:
        if self.spec.center:
            return self.means
        return np.zeros(self.num_channels)

    def save(self, directory) -> Path:
        """Write ``spec.json``, ``partition.json`` and one ``g{g}_s{s}.cb`` per codebook."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        spec_doc = spec_to_dict(replace(self.spec, partition=self.partition))
        spec_doc["means"] = None if self.means is None else self.means.tolist()
        (directory / "spec.json").write_text(json.dumps(spec_doc, indent=2))
        report = self.split_report or SplitReport(self.partition, (), 0.0)
        (directory / "partition.json").write_text(report.to_json())
        for g, row in enumerate(self.codebooks):
            for s, cb in enumerate(row):
                write_codebook(cb, directory / f"g{g}_s{s}.cb")
        return directory

    @classmethod
    def load(cls, directory) -> "TrainedQuantizer":
        directory = Path(directory)
        spec_doc = json.loads((directory / "spec.json").read_text())
        report = SplitReport.from_json((directory / "partition.json").read_text())
        spec = spec_from_dict(spec_doc)
        if spec.partition != report.partition:
            raise FormatError("spec.json and partition.json disagree on the partition")
        codebooks = [
            [read_codebook(directory / f"g{g}_s{s}.cb") for s in range(spec.depth)]
            for g in range(spec.num_groups)
        ]
        means = spec_doc.get("means")
        return cls(spec, report.partition, codebooks,
                   None if means is None else np.asarray(means, dtype=np.float64),
                   report if report.per_group_variance_share else None)


def spec_to_dict(spec: QuantizerSpec) -> dict:
    partition = spec.partition
    if isinstance(partition, GroupPartition):
        partition = {"num_channels": partition.num_channels, "boundaries": list(partition.boundaries)}
    return {
        "num_groups": spec.num_groups,
        "depth": spec.depth,
        "codebook_size": spec.codebook_size,
        "partition": partition,
        "commitment_weight": spec.commitment_weight,
        "center": spec.center,
    }


def spec_from_dict(doc: dict) -> QuantizerSpec:
    partition = doc.get("partition", "even")
    if isinstance(partition, dict):
        partition = GroupPartition(int(partition["num_channels"]), tuple(partition["boundaries"]))
    elif isinstance(partition, list):
        raise SpecError("explicit partition needs num_channels; use {'num_channels': C, 'boundaries': [...]}")
    return QuantizerSpec(
        num_groups=int(doc["num_groups"]),
        depth=int(doc["depth"]),
        codebook_size=int(doc["codebook_size"]),
        partition=partition,
        commitment_weight=float(doc.get("commitment_weight", 1.0)),
        center=bool(doc.get("center", False)),
    )


def write_codebook(codebook: Codebook, path) -> None:
    """Binary codebook: magic, u32 N, u32 d, N*d little-endian float32 row-major."""
    header = CODEBOOK_MAGIC + np.array([codebook.size, codebook.dim], dtype="<u4").tobytes()
    Path(path).write_bytes(header + codebook.codewords.astype("<f4").tobytes())


def read_codebook(path) -> Codebook:
    data = Path(path).read_bytes()
    if len(data) < 16 or data[:8] != CODEBOOK_MAGIC:
        raise FormatError(f"{path}: not a codebook file (bad magic)")
    n, d = (int(v) for v in np.frombuffer(data[8:16], dtype="<u4"))
    body = data[16:]
    if len(body) != n * d * 4:
        raise FormatError(f"{path}: expected {n * d * 4} payload bytes, found {len(body)}")
    return Codebook(np.frombuffer(body, dtype="<f4").astype(np.float64).reshape(n, d))


def resolve_partition(features: FeatureMatrix, spec: QuantizerSpec) -> SplitReport:
    """Turn the spec's partition source into a concrete partition with variance shares."""
    validate_spec(spec, features.num_channels)
    profile = compute_channel_stats(features)
    if spec.partition == "entropy-guided":
        return entropy_split(profile, spec.num_groups)
    if spec.partition == "even":
        partition = GroupPartition.even(features.num_channels, spec.num_groups)
    else:
        partition = spec.partition
    if float(np.sum(profile.variances)) > 0:
        return group_shares(profile, partition)
    return SplitReport(partition, (), 0.0)


def train_quantizer(features: FeatureMatrix, spec: QuantizerSpec, config: TrainConfig = TrainConfig()) -> TrainedQuantizer:
    """Train one residual chain per group on that group's channel slice.

    Stage ``s`` of group ``g`` is fitted to the residual left by stages
    ``0..s-1`` of the same group. Codebook seeds are derived from
    ``config.seed`` so that every (group, stage) gets its own stream.
    """
    report = resolve_partition(features, spec)
    partition = report.partition
    means = compute_channel_stats(features).means.copy() if spec.center else None
    target = features.values - means if spec.center else features.values
    seeds = np.random.SeedSequence(config.seed).spawn(spec.num_codebooks)
    codebooks = []
    for g, (start, end) in enumerate(partition.groups):
        slice_ = target[:, start:end]
        recon = np.zeros_like(slice_)
        row = []
        for s in range(spec.depth):
            seed = int(seeds[g * spec.depth + s].generate_state(1, np.uint64)[0])
            cb = train_codebook(slice_ - recon, spec.codebook_size, config.with_seed(seed))
            idx, _ = nearest_codewords(cb.codewords, slice_ - recon)
            recon = recon + cb.codewords[idx]
            row.append(cb)
        codebooks.append(row)
    resolved = replace(spec, partition=partition)
    return TrainedQuantizer(resolved, partition, codebooks, means, report if report.per_group_variance_share else None)


@dataclass
class EncodeTrace:
    """Per-stage residual energies summed over frames and groups.

    ``residual_energy[s]`` is the squared Frobenius norm of the residual
    after stages ``0..s`` in every group; ``reference_energy`` is the norm
    of the raw (uncentered) features.
    """

    residual_energy: np.ndarray
    reference_energy: float
    group_residual_energy: np.ndarray


def _check_channels(q: TrainedQuantizer, features: FeatureMatrix):
    if features.num_channels != q.num_channels:
        raise ValueError(f"features have {features.num_channels} channels, quantizer expects {q.num_channels}")


def encode_with_trace(q: TrainedQuantizer, features: FeatureMatrix,
                      group_order=None) -> tuple[CodeFrame, EncodeTrace]:
    """Greedy residual encoding that also reports per-stage residual energies."""
    _check_channels(q, features)
    spec = q.spec
    target = features.values - q._offset()
    indices = np.empty((features.num_frames, spec.num_codebooks), dtype=np.int64)
    energy = np.zeros((spec.num_groups, spec.depth))
    order = range(spec.num_groups) if group_order is None else group_order
    groups = q.partition.groups
    for g in order:
        start, end = groups[g]
        slice_ = target[:, start:end]
        recon = np.zeros_like(slice_)
        for s, cb in enumerate(q.codebooks[g]):
            idx, _ = quantize(cb, slice_ - recon)
            recon = recon + cb.codewords[idx]
            indices[:, g * spec.depth + s] = idx
            energy[g, s] = float(np.sum((slice_ - recon) ** 2))
    ref = float(np.sum(features.values**2))
    trace = EncodeTrace(energy.sum(axis=0), ref, energy)
    return CodeFrame(indices, spec.num_groups, spec.depth), trace


def encode(q: TrainedQuantizer, features: FeatureMatrix) -> CodeFrame:
    """Greedy per-group residual encoding; updates codebook usage counters."""
    return encode_with_trace(q, features)[0]


def partial_decode(q: TrainedQuantizer, codes: CodeFrame, depth_limit: int) -> FeatureMatrix:
    """Reconstruct from stages ``0..depth_limit-1`` of every group."""
    spec = q.spec
    if not 1 <= depth_limit <= spec.depth:
        raise ValueError(f"depth_limit must be in [1, {spec.depth}], got {depth_limit}")
    if codes.num_groups != spec.num_groups or codes.depth != spec.depth:
        raise ValueError(f"code layout {codes.num_groups}x{codes.depth} does not match quantizer {spec.label}")
    if np.any(codes.indices >= spec.codebook_size):
        raise ValueError(f"code index out of range for codebook size {spec.codebook_size}")
    out = np.empty((codes.num_frames, q.num_channels))
    for g, (start, end) in enumerate(q.partition.groups):
        recon = np.zeros((codes.num_frames, end - start))
        for s in range(depth_limit):
            recon = recon + q.codebooks[g][s].codewords[codes.column(g, s)]
        out[:, start:end] = recon
    return FeatureMatrix(out + q._offset())


def decode(q: TrainedQuantizer, codes: CodeFrame) -> FeatureMatrix:
    """Sum each group's stage codewords and concatenate groups in channel order."""
    return partial_decode(q, codes, q.spec.depth)
