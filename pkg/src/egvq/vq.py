"""Single-codebook vector quantization: nearest-neighbour search and k-means training."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from egvq.core import Codebook

_CHUNK_ROWS = 4096
INIT_METHODS = ("kmeans_plus_plus", "random_sample")


@dataclass(frozen=True)
class TrainConfig:
    """Codebook training settings.

    ``convergence_tolerance`` is the relative decrease in inertia below which
    Lloyd iterations stop.
    """

    max_iterations: int = 50
    convergence_tolerance: float = 1e-4
    seed: int = 0
    init_method: str = "kmeans_plus_plus"

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.convergence_tolerance < 0:
            raise ValueError("convergence_tolerance must be nonnegative")
        if self.init_method not in INIT_METHODS:
            raise ValueError(f"init_method must be one of {INIT_METHODS}, got {self.init_method!r}")

    def with_seed(self, seed: int) -> "TrainConfig":
        return TrainConfig(self.max_iterations, self.convergence_tolerance, seed, self.init_method)


def nearest_codewords(codewords: np.ndarray, vectors: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Exact nearest codeword per row, ties to the lowest index.

    Returns ``(indices, squared_distances)``. Candidates are screened with
    the expanded ``|x|^2 - 2 x.c + |c|^2`` form; any row whose screen leaves
    more than one plausible winner is re-scored with direct differences so
    the result matches an exhaustive scan.
    """
    codewords = np.asarray(codewords, dtype=np.float64)
    vectors = np.asarray(vectors, dtype=np.float64)
    num_rows = vectors.shape[0]
    indices = np.empty(num_rows, dtype=np.int64)
    best = np.empty(num_rows, dtype=np.float64)
    code_sq = np.einsum("ij,ij->i", codewords, codewords)
    max_code_sq = float(code_sq.max()) if code_sq.size else 0.0
    for start in range(0, num_rows, _CHUNK_ROWS):
        block = vectors[start : start + _CHUNK_ROWS]
        rows = np.arange(block.shape[0])
        vec_sq = np.einsum("ij,ij->i", block, block)
        # vec_sq is constant per row, so it is left out of the ranking
        approx = block @ codewords.T
        approx *= -2.0
        approx += code_sq
        chosen = np.argmin(approx, axis=1)
        threshold = approx[rows, chosen] + 1e-10 * (vec_sq + max_code_sq) + 1e-300
        ambiguous = np.count_nonzero(approx <= threshold[:, None], axis=1) > 1
        exact = np.sum((block - codewords[chosen]) ** 2, axis=1)
        for row in np.flatnonzero(ambiguous):
            cand = np.flatnonzero(approx[row] <= threshold[row])
            dists = np.sum((block[row] - codewords[cand]) ** 2, axis=1)
            pick = int(np.argmin(dists))
            chosen[row] = cand[pick]
            exact[row] = dists[pick]
        indices[start : start + block.shape[0]] = chosen
        best[start : start + block.shape[0]] = exact
    return indices, best


def quantize(codebook: Codebook, vectors) -> tuple[np.ndarray, np.ndarray]:
    """Map each row of ``vectors`` to its nearest codeword.

    Increments ``codebook.usage_counts`` once per assigned row.

    Returns:
        ``(indices, quantized)`` with ``quantized[m] == codewords[indices[m]]``.
    """
    vectors = np.asarray(vectors, dtype=np.float64)
    if vectors.ndim != 2 or vectors.shape[1] != codebook.dim:
        raise ValueError(f"vectors of shape {vectors.shape} do not match codebook dimension {codebook.dim}")
    indices, _ = nearest_codewords(codebook.codewords, vectors)
    codebook.usage_counts += np.bincount(indices, minlength=codebook.size)
    return indices, codebook.codewords[indices]


def commitment_loss(vectors, quantized, weight: float = 1.0) -> float:
    """``weight`` times the mean squared distance between vectors and their codes."""
    vectors = np.asarray(vectors, dtype=np.float64)
    quantized = np.asarray(quantized, dtype=np.float64)
    if vectors.shape != quantized.shape:
        raise ValueError(f"shape mismatch: {vectors.shape} vs {quantized.shape}")
    if weight < 0:
        raise ValueError("weight must be nonnegative")
    if vectors.ndim == 1:
        vectors, quantized = vectors[:, None], quantized[:, None]
    if weight == 0:
        return 0.0
    return weight * float(np.mean(np.sum((vectors - quantized) ** 2, axis=1)))


def _kmeans_plus_plus(vectors, n, rng):
    num = vectors.shape[0]
    sq = np.einsum("ij,ij->i", vectors, vectors)

    def dist_to(idx):
        d = sq - 2.0 * (vectors @ vectors[idx]) + sq[idx]
        return np.maximum(d, 0.0, out=d)

    chosen = [int(rng.integers(num))]
    closest = dist_to(chosen[0])
    for _ in range(1, n):
        total = closest.sum()
        if total > 0:
            idx = int(np.searchsorted(np.cumsum(closest), rng.random() * total, side="right"))
            idx = min(idx, num - 1)
        else:
            idx = int(rng.integers(num))
        chosen.append(idx)
        np.minimum(closest, dist_to(idx), out=closest)
    return vectors[chosen].copy()


def _centroids(vectors, labels, n):
    counts = np.bincount(labels, minlength=n)
    sums = np.empty((n, vectors.shape[1]))
    for j in range(vectors.shape[1]):
        sums[:, j] = np.bincount(labels, weights=vectors[:, j], minlength=n)
    return sums, counts


def train_codebook(vectors, codebook_size: int, config: TrainConfig = TrainConfig()) -> Codebook:
    """Fit an ``N``-entry codebook with k-means++ (or random) seeding and Lloyd refinement.

    Empty clusters are re-seeded to the training point with the largest
    current quantization error. Inertia is checked to never increase between
    iterations. Final codewords are rounded to float32 so they survive the
    on-disk codebook format unchanged.

    Raises:
        ValueError: fewer training vectors than codewords.
    """
    vectors = np.asarray(vectors, dtype=np.float64)
    if vectors.ndim != 2:
        raise ValueError("training vectors must be a 2-D array")
    num = vectors.shape[0]
    if num < codebook_size:
        raise ValueError(f"insufficient training vectors: {num} < codebook size {codebook_size}")
    rng = np.random.default_rng(config.seed)
    if config.init_method == "kmeans_plus_plus":
        codewords = _kmeans_plus_plus(vectors, codebook_size, rng)
    else:
        codewords = vectors[rng.choice(num, size=codebook_size, replace=False)].copy()

    history = []
    labels, errors = nearest_codewords(codewords, vectors)
    for _ in range(config.max_iterations):
        inertia = float(errors.sum())
        if history and inertia > history[-1] * (1 + 1e-12):
            raise RuntimeError(f"Lloyd inertia increased: {history[-1]!r} -> {inertia!r}")
        history.append(inertia)
        if len(history) > 1:
            prev = history[-2]
            if prev == 0 or (prev - inertia) / prev < config.convergence_tolerance:
                break
        if inertia == 0:
            break

        sums, counts = _centroids(vectors, labels, codebook_size)
        updated = codewords.copy()
        filled = counts > 0
        updated[filled] = sums[filled] / counts[filled, None]
        empty = np.flatnonzero(~filled)
        if empty.size:
            # distances to the updated centroids of nonempty clusters
            point_err = np.sum((vectors - updated[labels]) ** 2, axis=1)
            for e in empty:
                worst = int(np.argmax(point_err))
                updated[e] = vectors[worst]
                point_err[worst] = 0.0
        codewords = updated
        labels, errors = nearest_codewords(codewords, vectors)
    else:
        inertia = float(errors.sum())
        if inertia > history[-1] * (1 + 1e-12):
            raise RuntimeError(f"Lloyd inertia increased: {history[-1]!r} -> {inertia!r}")
        history.append(inertia)

    codewords = codewords.astype(np.float32).astype(np.float64)
    return Codebook(codewords, inertia_history=tuple(history))
