"""Command-line entry point: ``egvq {generate,stats,train,encode,decode,compare}``.

Every command writes a manifest next to its outputs. Failures exit nonzero
and print one JSON object ``{"error": ..., "message": ...}`` on stderr.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path


from egvq.bitstream import PackedStream, pack, unpack
from egvq.core import EgvqError, FormatError, GroupPartition, QuantizerSpec
from egvq.data import SyntheticConfig, generate, read_features, write_features
from egvq.entropy_split import compute_channel_stats, differential_entropy, entropy_split, variance_share
from egvq.experiment import ExperimentConfig, render_tables, run_comparison, write_manifest
from egvq.metrics import bitrate, nmse, nmse_report
from egvq.quantizers import TrainedQuantizer, decode, encode, spec_to_dict, train_quantizer
from egvq.vq import INIT_METHODS, TrainConfig


def _file_manifest(output: Path, command: str, config: dict, outputs: list) -> None:
    sidecar = output.with_name(output.name + ".manifest")
    sidecar.mkdir(parents=True, exist_ok=True)
    write_manifest(sidecar, command, config, outputs)


def cmd_generate(args) -> int:
    if args.config:
        config = SyntheticConfig.from_json(Path(args.config).read_text())
    else:
        config = SyntheticConfig(
            num_channels=args.channels,
            num_frames=args.frames,
            profile=args.profile,
            v0=args.v0,
            alpha=args.alpha,
            variances=None if args.variances is None else tuple(float(v) for v in args.variances.split(",")),
            correlation=args.correlation,
            seed=args.seed,
            mean_offset=args.mean_offset,
        )
    features = generate(config)
    out = Path(args.out)
    write_features(features, out)
    _file_manifest(out, "generate", config.to_dict(), [out])
    print(json.dumps({"frames": features.num_frames, "channels": features.num_channels, "path": str(out)}))
    return 0


def cmd_stats(args) -> int:
    features = read_features(args.features)
    profile = compute_channel_stats(features)
    report = entropy_split(profile, args.groups)
    out = Path(args.out_dir or Path(args.features).with_suffix("").as_posix() + "_stats")
    out.mkdir(parents=True, exist_ok=True)
    split_path = out / "split.json"
    split_path.write_text(report.to_json())
    stats_path = out / "channel_stats.csv"
    with stats_path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["channel", "mean", "variance", "entropy_nats"])
        for k, (m, v) in enumerate(zip(profile.means, profile.variances)):
            writer.writerow([k, repr(float(m)), repr(float(v)), repr(differential_entropy(v)) if v > 0 else ""])
    doc = report.to_dict()
    if profile.num_channels >= 2:
        half = profile.num_channels // 2
        doc["even_split"] = {"boundary": half, "shares": list(variance_share(profile, half))}
    write_manifest(out, "stats", {"features": str(args.features), "groups": args.groups}, [split_path, stats_path])
    print(json.dumps(doc, indent=2))
    sizes = " + ".join(str(s) for s in report.partition.sizes)
    shares = " / ".join(f"{100 * s:.2f}%" for s in report.per_group_variance_share)
    print(f"entropy-guided split: groups {sizes} channels, variance shares {shares}", file=sys.stderr)
    if "even_split" in doc:
        left, right = doc["even_split"]["shares"]
        print(f"even split at {doc['even_split']['boundary']}: {100 * left:.2f}% / {100 * right:.2f}%", file=sys.stderr)
    return 0


def _parse_partition(text: str, num_channels: int):
    if text in ("even", "entropy-guided"):
        return text
    return GroupPartition(num_channels, tuple(int(b) for b in text.split(",") if b))


def cmd_train(args) -> int:
    features = read_features(args.features)
    spec = QuantizerSpec(
        num_groups=args.groups,
        depth=args.depth,
        codebook_size=args.codebook_size,
        partition=_parse_partition(args.partition, features.num_channels),
        commitment_weight=args.commitment_weight,
        center=args.center,
    )
    config = TrainConfig(args.max_iterations, args.tolerance, args.seed, args.init)
    q = train_quantizer(features, spec, config)
    out = q.save(args.out)
    report = nmse_report(q, features)
    outputs = sorted(p for p in out.iterdir() if p.is_file() and p.name != "manifest.json")
    write_manifest(out, "train", {
        "features": str(args.features),
        "spec": spec_to_dict(spec),
        "train": {"max_iterations": config.max_iterations, "convergence_tolerance": config.convergence_tolerance,
                  "seed": config.seed, "init_method": config.init_method},
    }, outputs)
    print(json.dumps({
        "quantizer": str(out),
        "boundaries": list(q.partition.boundaries),
        "group_sizes": q.partition.sizes,
        "train_nmse": report.to_dict(),
    }, indent=2))
    return 0


def cmd_encode(args) -> int:
    q = TrainedQuantizer.load(args.quantizer)
    features = read_features(args.features)
    codes = encode(q, features)
    stream = pack(codes, q.spec, args.frame_rate)
    out = Path(args.out)
    stream.write(out)
    _file_manifest(out, "encode", {"quantizer": str(args.quantizer), "features": str(args.features),
                                   "frame_rate": args.frame_rate}, [out])
    measured = 8 * len(stream.payload) / stream.duration
    print(json.dumps({
        "frames": stream.num_frames,
        "payload_bytes": len(stream.payload),
        "nominal_bitrate": bitrate(q.spec, args.frame_rate),
        "measured_bitrate": measured,
    }))
    return 0


def cmd_decode(args) -> int:
    q = TrainedQuantizer.load(args.quantizer)
    stream = PackedStream.read(args.stream)
    spec = q.spec
    if (stream.num_groups, stream.depth, stream.codebook_size) != (spec.num_groups, spec.depth, spec.codebook_size):
        raise FormatError(
            f"stream header {stream.num_groups}x{stream.depth} N={stream.codebook_size} does not match "
            f"quantizer {spec.label} N={spec.codebook_size}"
        )
    recon = decode(q, unpack(stream))
    out = Path(args.out)
    write_features(recon, out)
    _file_manifest(out, "decode", {"quantizer": str(args.quantizer), "stream": str(args.stream)}, [out])
    result = {"frames": recon.num_frames, "channels": recon.num_channels, "path": str(out)}
    if args.reference:
        result["nmse"] = nmse(read_features(args.reference), recon)
    print(json.dumps(result))
    return 0


def cmd_compare(args) -> int:
    doc = json.loads(Path(args.config).read_text())
    if args.out:
        doc["output_dir"] = args.out
    if args.seeds:
        doc["seeds"] = [int(s) for s in args.seeds.split(",")]
    config = ExperimentConfig.from_dict(doc)
    if not config.output_dir:
        config.output_dir = "compare_out"

    def progress(cell):
        print(f"{cell.spec_name} seed={cell.seed} total_nmse={cell.total_nmse:.4f} "
              f"min_util={cell.min_utilization:.3f}", file=sys.stderr)

    report = run_comparison(config, progress=progress)
    print(render_tables(report))
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="egvq", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="write a synthetic feature corpus")
    p.add_argument("--config", help="SyntheticConfig JSON document")
    p.add_argument("--channels", type=int, default=64)
    p.add_argument("--frames", type=int, default=20000)
    p.add_argument("--profile", choices=["uniform", "power_law", "explicit"], default="power_law")
    p.add_argument("--v0", type=float, default=1.0)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--variances", help="comma-separated variances for --profile explicit")
    p.add_argument("--correlation", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mean-offset", type=float, default=0.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("stats", help="channel statistics and entropy-guided split")
    p.add_argument("features")
    p.add_argument("--groups", type=int, default=2)
    p.add_argument("--out-dir")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("train", help="train a grouped residual quantizer")
    p.add_argument("features")
    p.add_argument("--groups", type=int, default=2)
    p.add_argument("--depth", type=int, default=2)
    p.add_argument("--codebook-size", type=int, default=256)
    p.add_argument("--partition", default="entropy-guided",
                   help="'even', 'entropy-guided', or comma-separated boundaries")
    p.add_argument("--center", action="store_true", help="subtract training-set channel means")
    p.add_argument("--commitment-weight", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-iterations", type=int, default=50)
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.add_argument("--init", choices=INIT_METHODS, default="kmeans_plus_plus")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("encode", help="encode features to a packed .egvq stream")
    p.add_argument("quantizer")
    p.add_argument("features")
    p.add_argument("out")
    p.add_argument("--frame-rate", type=float, default=12.5)
    p.set_defaults(func=cmd_encode)

    p = sub.add_parser("decode", help="decode a .egvq stream to features")
    p.add_argument("quantizer")
    p.add_argument("stream")
    p.add_argument("out")
    p.add_argument("--reference", help="original features; prints NMSE")
    p.set_defaults(func=cmd_decode)

    p = sub.add_parser("compare", help="run a quantizer comparison experiment")
    p.add_argument("config", help="ExperimentConfig JSON document")
    p.add_argument("--out")
    p.add_argument("--seeds", help="comma-separated seeds overriding the config")
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (EgvqError, ValueError, OSError, KeyError, json.JSONDecodeError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
