"""Entropy-guided grouped residual vector quantization toolkit."""

from egvq.core import (
    Codebook,
    DegenerateProfileError,
    EgvqError,
    FeatureMatrix,
    FormatError,
    GroupPartition,
    QuantizerSpec,
    SpecError,
    VarianceProfile,
    validate_spec,
)
from egvq.entropy_split import (
    ChannelStatsAccumulator,
    SplitReport,
    compute_channel_stats,
    differential_entropy,
    entropy_split,
    variance_share,
)
from egvq.vq import TrainConfig, commitment_loss, quantize, train_codebook
from egvq.quantizers import (
    CodeFrame,
    TrainedQuantizer,
    decode,
    encode,
    partial_decode,
    train_quantizer,
)
from egvq.metrics import (
    NmseReport,
    UtilizationReport,
    bitrate,
    nmse,
    nmse_report,
    utilization_report,
)
from egvq.bitstream import PackedStream, pack, unpack
from egvq.data import SyntheticConfig, generate, read_features, write_features

__version__ = "0.1.0"

__all__ = [
    "ChannelStatsAccumulator",
    "CodeFrame",
    "Codebook",
    "DegenerateProfileError",
    "EgvqError",
    "FeatureMatrix",
    "FormatError",
    "GroupPartition",
    "NmseReport",
    "PackedStream",
    "QuantizerSpec",
    "SpecError",
    "SplitReport",
    "SyntheticConfig",
    "TrainConfig",
    "TrainedQuantizer",
    "UtilizationReport",
    "VarianceProfile",
    "bitrate",
    "commitment_loss",
    "compute_channel_stats",
    "decode",
    "differential_entropy",
    "encode",
    "entropy_split",
    "generate",
    "nmse",
    "nmse_report",
    "pack",
    "partial_decode",
    "quantize",
    "read_features",
    "train_codebook",
    "train_quantizer",
    "unpack",
    "utilization_report",
    "validate_spec",
    "variance_share",
    "write_features",
]
