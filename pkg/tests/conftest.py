import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from egvq import FeatureMatrix, QuantizerSpec, SyntheticConfig, TrainConfig, generate, train_quantizer  # noqa: E402

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def exact_profile_features(variances, num_frames=64, seed=0):
    """Zero-mean frames whose population variances equal ``variances`` exactly.

    Each channel is a shuffled +/- sqrt(v) pattern with equal counts.
    """
    r = np.random.default_rng(seed)
    signs = np.array([1.0, -1.0] * (num_frames // 2))
    cols = [r.permutation(signs) * np.sqrt(v) for v in variances]
    return FeatureMatrix(np.stack(cols, axis=1))


@pytest.fixture(scope="session")
def small_corpus():
    return generate(SyntheticConfig(12, 3000, "power_law", alpha=1.0, seed=3))


@pytest.fixture(scope="session")
def trained_2x2(small_corpus):
    spec = QuantizerSpec(2, 2, 16, "entropy-guided")
    return train_quantizer(small_corpus, spec, TrainConfig(max_iterations=15, seed=5))


@pytest.fixture(scope="session")
def trained_centered(small_corpus):
    shifted = FeatureMatrix(small_corpus.values + np.linspace(-3, 3, small_corpus.num_channels))
    spec = QuantizerSpec(2, 3, 8, "even", center=True)
    return shifted, train_quantizer(shifted, spec, TrainConfig(max_iterations=10, seed=2))
