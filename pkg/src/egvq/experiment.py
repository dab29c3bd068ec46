"""Quantizer comparison harness: train each spec per seed, evaluate on held-out frames."""

from __future__ import annotations

import csv
import hashlib
import itertools
import json
import platform
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from egvq.core import FeatureMatrix, QuantizerSpec
from egvq.data import SyntheticConfig, generate, read_features
from egvq.metrics import bitrate, nmse_report, utilization_report
from egvq.quantizers import spec_from_dict, spec_to_dict, train_quantizer
from egvq.vq import TrainConfig

FORMAT_MAGICS = {
    "codebook": "EGVQCB1",
    "features": "EGVQFT1",
    "stream": "EGVQBS1",
}


@dataclass(frozen=True)
class NamedSpec:
    name: str
    spec: QuantizerSpec


@dataclass
class ExperimentConfig:
    """What to compare and on which corpus.

    Exactly one of ``synthetic`` / ``features_path`` is set. Frames are split
    once with a shuffle seeded by ``split_seed``. With
    ``resample_corpus_per_seed`` a synthetic corpus is regenerated for every
    seed (corpus seed ``synthetic.seed + seed``); otherwise only training
    randomness varies between seeds.
    """

    specs: list[NamedSpec]
    synthetic: Optional[SyntheticConfig] = None
    features_path: Optional[str] = None
    split_fraction: float = 0.9
    split_seed: int = 0
    seeds: list[int] = field(default_factory=lambda: [0])
    train: TrainConfig = TrainConfig()
    frame_rate: float = 12.5
    extra_codebooks: int = 0
    resample_corpus_per_seed: bool = False
    output_dir: Optional[str] = None

    def __post_init__(self):
        if not self.specs:
            raise ValueError("experiment needs at least one spec")
        if not 0.0 < self.split_fraction < 1.0:
            raise ValueError(f"split_fraction must be in (0, 1), got {self.split_fraction}")
        if (self.synthetic is None) == (self.features_path is None):
            raise ValueError("set exactly one of synthetic / features_path")
        if not self.seeds:
            raise ValueError("experiment needs at least one seed")
        names = [s.name for s in self.specs]
        if len(set(names)) != len(names):
            raise ValueError(f"spec names must be unique, got {names}")

    def to_dict(self) -> dict:
        return {
            "specs": [{"name": s.name, **spec_to_dict(s.spec)} for s in self.specs],
            "corpus": ({"synthetic": self.synthetic.to_dict()} if self.synthetic is not None
                       else {"features": self.features_path}),
            "split_fraction": self.split_fraction,
            "split_seed": self.split_seed,
            "seeds": list(self.seeds),
            "train": {
                "max_iterations": self.train.max_iterations,
                "convergence_tolerance": self.train.convergence_tolerance,
                "init_method": self.train.init_method,
            },
            "frame_rate": self.frame_rate,
            "extra_codebooks": self.extra_codebooks,
            "resample_corpus_per_seed": self.resample_corpus_per_seed,
            "output_dir": self.output_dir,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentConfig":
        specs = []
        for i, entry in enumerate(doc["specs"]):
            entry = dict(entry)
            name = entry.pop("name", None)
            spec = spec_from_dict(entry)
            specs.append(NamedSpec(name or f"{spec.label}-{spec.partition}-{i}", spec))
        corpus = doc.get("corpus", {})
        train = doc.get("train", {})
        return cls(
            specs=specs,
            synthetic=SyntheticConfig.from_dict(corpus["synthetic"]) if "synthetic" in corpus else None,
            features_path=corpus.get("features"),
            split_fraction=float(doc.get("split_fraction", 0.9)),
            split_seed=int(doc.get("split_seed", 0)),
            seeds=[int(s) for s in doc.get("seeds", [0])],
            train=TrainConfig(
                max_iterations=int(train.get("max_iterations", 50)),
                convergence_tolerance=float(train.get("convergence_tolerance", 1e-4)),
                init_method=train.get("init_method", "kmeans_plus_plus"),
            ),
            frame_rate=float(doc.get("frame_rate", 12.5)),
            extra_codebooks=int(doc.get("extra_codebooks", 0)),
            resample_corpus_per_seed=bool(doc.get("resample_corpus_per_seed", False)),
            output_dir=doc.get("output_dir"),
        )


def split_frames(features: FeatureMatrix, fraction: float, seed: int) -> tuple[FeatureMatrix, FeatureMatrix]:
    """Shuffle frames with ``seed`` and cut into train / eval parts."""
    order = np.random.default_rng(seed).permutation(features.num_frames)
    cut = int(round(fraction * features.num_frames))
    if cut < 1 or cut >= features.num_frames:
        raise ValueError(f"split of {features.num_frames} frames at {fraction} leaves an empty side")
    return features.take_frames(order[:cut]), features.take_frames(order[cut:])


@dataclass
class CellResult:
    spec_name: str
    seed: int
    spec: QuantizerSpec
    boundaries: tuple[int, ...]
    cumulative: tuple[float, ...]
    incremental: tuple[float, ...]
    utilization: tuple[float, ...]
    utilization_labels: tuple[str, ...]
    bitrate: float
    eval_frames: int

    @property
    def total_nmse(self) -> float:
        return self.cumulative[-1]

    @property
    def min_utilization(self) -> float:
        return min(self.utilization)

    def summary_row(self) -> dict:
        row = {
            "spec": self.spec_name,
            "seed": self.seed,
            "structure": self.spec.label,
            "boundaries": " ".join(str(b) for b in self.boundaries),
            "bits_per_frame": self.spec.bits_per_frame,
            "bitrate": self.bitrate,
            "total_nmse": self.total_nmse,
            "min_utilization": self.min_utilization,
            "mean_utilization": float(np.mean(self.utilization)),
        }
        for s, c in enumerate(self.cumulative):
            row[f"nmse_stage{s + 1}"] = c
        return row


@dataclass
class ComparisonReport:
    config: ExperimentConfig
    cells: list[CellResult]

    def by_spec(self, name: str) -> list[CellResult]:
        return sorted((c for c in self.cells if c.spec_name == name), key=lambda c: c.seed)

    def means(self) -> dict:
        out = {}
        for named in self.config.specs:
            cells = self.by_spec(named.name)
            out[named.name] = {
                "total_nmse": float(np.mean([c.total_nmse for c in cells])),
                "min_utilization": float(np.mean([c.min_utilization for c in cells])),
                "cumulative": np.mean([c.cumulative for c in cells], axis=0).tolist(),
                "utilization": np.mean([c.utilization for c in cells], axis=0).tolist(),
                "bitrate": cells[0].bitrate,
            }
        return out

    def orderings(self) -> dict:
        """Per ordered pair (a, b): seeds where a's NMSE <= b's and a's min utilization >= b's."""
        out = {}
        for a, b in itertools.permutations([s.name for s in self.config.specs], 2):
            ca, cb = self.by_spec(a), self.by_spec(b)
            out[f"{a}<={b}"] = {
                "nmse_le": int(sum(x.total_nmse <= y.total_nmse for x, y in zip(ca, cb))),
                "min_utilization_ge": int(sum(x.min_utilization >= y.min_utilization for x, y in zip(ca, cb))),
                "seeds": len(ca),
            }
        return out

    def summary(self) -> dict:
        return {"means": self.means(), "orderings": self.orderings(),
                "utilization_measured_on": "eval"}


def _load_corpus(config: ExperimentConfig, seed: int) -> FeatureMatrix:
    if config.synthetic is not None:
        synth = config.synthetic
        if config.resample_corpus_per_seed:
            synth = replace(synth, seed=(synth.seed + seed) % 2**64)
        return generate(synth)
    return read_features(config.features_path)


def run_cell(named: NamedSpec, seed: int, train_set: FeatureMatrix, eval_set: FeatureMatrix,
             config: ExperimentConfig) -> CellResult:
    q = train_quantizer(train_set, named.spec, config.train.with_seed(seed))
    report = nmse_report(q, eval_set)
    util = utilization_report(q, eval_set)
    return CellResult(
        spec_name=named.name,
        seed=seed,
        spec=q.spec,
        boundaries=q.partition.boundaries,
        cumulative=report.cumulative,
        incremental=report.incremental,
        utilization=util.per_codebook,
        utilization_labels=util.labels,
        bitrate=bitrate(q.spec, config.frame_rate, config.extra_codebooks),
        eval_frames=eval_set.num_frames,
    )


def run_comparison(config: ExperimentConfig, progress=None) -> ComparisonReport:
    """Run every (spec, seed) cell; writes outputs when ``config.output_dir`` is set."""
    cells = []
    shared = None
    for seed in config.seeds:
        if config.resample_corpus_per_seed or shared is None:
            corpus = _load_corpus(config, seed)
            shared = split_frames(corpus, config.split_fraction, config.split_seed)
        train_set, eval_set = shared
        for named in config.specs:
            cell = run_cell(named, seed, train_set, eval_set, config)
            cells.append(cell)
            if progress is not None:
                progress(cell)
    report = ComparisonReport(config, cells)
    if config.output_dir:
        write_report(report, config.output_dir)
    return report


def _write_csv(path: Path, rows: list[dict]) -> None:
    with path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)


def file_sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def versions() -> dict:
    from egvq import __version__

    return {"egvq": __version__, "numpy": np.__version__, "python": platform.python_version()}


def write_manifest(directory, command: str, config: dict, outputs: list) -> Path:
    """Record enough to rerun: config, seeds, package versions and output hashes."""
    directory = Path(directory)
    manifest = {
        "command": command,
        "config": config,
        "versions": versions(),
        "formats": FORMAT_MAGICS,
        "outputs": {Path(p).name: file_sha256(p) for p in outputs if Path(p).is_file()},
    }
    path = directory / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2))
    return path


def write_report(report: ComparisonReport, output_dir) -> list[Path]:
    """Per-cell files under ``cells/``, then merged CSV/JSON tables and a manifest."""
    out = Path(output_dir)
    cell_dir = out / "cells"
    cell_dir.mkdir(parents=True, exist_ok=True)
    nmse_rows, util_rows = [], []
    for cell in report.cells:
        stem = f"{cell.spec_name}_seed{cell.seed}"
        stage_rows = [
            {"stage": s + 1, "cumulative_nmse": c, "incremental_nmse": i}
            for s, (c, i) in enumerate(zip(cell.cumulative, cell.incremental))
        ]
        cb_rows = [{"codebook": lab, "utilization": u} for lab, u in zip(cell.utilization_labels, cell.utilization)]
        _write_csv(cell_dir / f"{stem}_nmse.csv", stage_rows)
        _write_csv(cell_dir / f"{stem}_utilization.csv", cb_rows)
        nmse_rows += [{"spec": cell.spec_name, "seed": cell.seed, **r} for r in stage_rows]
        util_rows += [{"spec": cell.spec_name, "seed": cell.seed, **r} for r in cb_rows]
    paths = [out / "results.csv", out / "nmse.csv", out / "utilization.csv", out / "summary.json"]
    _write_csv(paths[0], [c.summary_row() for c in report.cells])
    _write_csv(paths[1], nmse_rows)
    _write_csv(paths[2], util_rows)
    paths[3].write_text(json.dumps(report.summary(), indent=2))
    paths.append(write_manifest(out, "compare", report.config.to_dict(), paths))
    return paths


def stage_major_number(spec: QuantizerSpec, group: int, stage: int) -> int:
    """Codebook number in stage-major order (group 1 holds codebooks 1 and 3 for 2x2)."""
    return stage * spec.num_groups + group + 1


def render_tables(report: ComparisonReport) -> str:
    """Plain-text NMSE and utilization tables derived from the means."""
    means = report.means()
    depth = max(s.spec.depth for s in report.config.specs)
    lines = ["NMSE (cumulative after each stage, eval frames, mean over seeds)"]
    header = f"{'spec':<24}{'struct':>8}" + "".join(f"{'stage' + str(s + 1):>10}" for s in range(depth)) + f"{'total':>10}{'bps':>10}"
    lines.append(header)
    for named in report.config.specs:
        m = means[named.name]
        stages = "".join(f"{v:>10.4f}" for v in m["cumulative"]) + " " * 10 * (depth - len(m["cumulative"]))
        lines.append(f"{named.name:<24}{named.spec.label:>8}{stages}{m['total_nmse']:>10.4f}{m['bitrate']:>10.1f}")
    lines.append("")
    lines.append("Codebook utilization (eval frames, mean over seeds; Codebook k numbered stage-major)")
    for named in report.config.specs:
        spec = named.spec
        util = means[named.name]["utilization"]
        ordered = sorted(
            (stage_major_number(spec, g, s), util[g * spec.depth + s])
            for g in range(spec.num_groups) for s in range(spec.depth)
        )
        cells = "  ".join(f"CB{k}={u:.3f}" for k, u in ordered)
        lines.append(f"{named.name:<24}{cells}")
    return "\n".join(lines)
