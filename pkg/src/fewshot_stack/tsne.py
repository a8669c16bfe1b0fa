"""Exact (O(N^2)) t-SNE for desk-scale separability plots.

High-dimensional affinities are symmetrized gaussian conditionals whose
per-point bandwidth is binary-searched to a target perplexity; the 2-D
embedding uses the student-t kernel and minimizes KL(P || Q) by gradient
descent with momentum (0.5, then 0.8 after iteration 250), learning rate
200, early exaggeration x12 for the first 250 iterations, and the
customary per-coordinate gain adaptation. Everything is deterministic
given the seed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import backends
from .errors import ConfigError, DataError, DegenerateInputError

EARLY_EXAGGERATION = 12.0
EXAGGERATION_ITERS = 250
LEARNING_RATE = 200.0
MOMENTUM_EARLY = 0.5
MOMENTUM_LATE = 0.8
MIN_GAIN = 0.01
ENTROPY_TOL = 1e-5


@dataclass(frozen=True)
class EmbeddingPoint:
    x: float
    y: float
    label: int
    key: tuple[int, int]  # (class_index, image_id)


def joint_affinities(vectors: np.ndarray, perplexity: float) -> np.ndarray:
    """Symmetrized affinity matrix P; raises on degenerate geometry."""
    x = np.asarray(vectors, dtype=np.float64)
    n = x.shape[0]
    d2 = backends.pairwise_sq_dists(x)
    cond, err = backends.conditional_probs(d2, np.log(perplexity), ENTROPY_TOL, 64)
    bad = np.flatnonzero(err > 1e-3)
    if bad.size:
        raise DegenerateInputError(
            f"perplexity search failed for {bad.size} point(s) (first: index "
            f"{int(bad[0])}); input has no usable affinity structure at "
            f"perplexity {perplexity:g}"
        )
    p = (cond + cond.T) / (2.0 * n)
    return np.maximum(p, 1e-12)


def tsne(
    vectors: np.ndarray,
    perplexity: float = 30.0,
    iterations: int = 1000,
    seed: int = 0,
    learning_rate: float = LEARNING_RATE,
):
    """Embed (N, D) vectors into 2-D.

    Returns (Y, kl_first, kl_final): the embedding plus the KL divergence
    against the true (unexaggerated) P after the first update of the
    plain-objective phase and after the last update. During early
    exaggeration the optimizer descends a different objective, so the
    descent guarantee (kl_final < kl_first) starts once exaggeration ends;
    if every iteration is exaggerated, kl_first falls back to the first
    update. The default learning rate follows the reference constants; for
    very small N (a few dozen points) a smaller rate fragments clusters
    less.
    """
    x = np.asarray(vectors, dtype=np.float64)
    if x.ndim != 2:
        raise DataError(f"expected (N, D) matrix, got shape {x.shape}")
    n = x.shape[0]
    if n < 4:
        raise DataError(f"t-SNE needs at least 4 points, got {n}")
    if iterations < 1:
        raise ConfigError("iterations must be >= 1")
    if perplexity <= 1.0:
        raise ConfigError(f"perplexity must exceed 1, got {perplexity}")
    perplexity = min(perplexity, (n - 1) / 3.0)
    if perplexity <= 1.0:
        raise ConfigError(f"too few points ({n}) for any feasible perplexity")

    p = joint_affinities(x, perplexity)

    rng = np.random.default_rng(seed)
    y = rng.standard_normal((n, 2)) * 1e-4
    vel = np.zeros_like(y)
    gains = np.ones_like(y)

    exaggerate_until = min(EXAGGERATION_ITERS, iterations)
    first_plain = exaggerate_until if exaggerate_until < iterations else 0
    kl_first = None
    for it in range(iterations):
        p_run = p * EARLY_EXAGGERATION if it < exaggerate_until else p
        grad = backends.tsne_grad(y, p_run)
        momentum = MOMENTUM_EARLY if it < EXAGGERATION_ITERS else MOMENTUM_LATE
        agree = np.sign(grad) == np.sign(vel)
        gains = np.where(agree, gains * 0.8, gains + 0.2)
        np.maximum(gains, MIN_GAIN, out=gains)
        vel = momentum * vel - learning_rate * (gains * grad)
        y = y + vel
        y = y - y.mean(axis=0)
        if it == first_plain:
            kl_first = backends.tsne_kl(y, p)
    kl_final = backends.tsne_kl(y, p)
    return y, float(kl_first), float(kl_final)


def tsne_embed(
    vectors: np.ndarray,
    labels,
    keys=None,
    perplexity: float = 30.0,
    iterations: int = 1000,
    seed: int = 0,
    learning_rate: float = LEARNING_RATE,
) -> list[EmbeddingPoint]:
    """t-SNE wrapped into labelled 2-D points (keys default to (label, row))."""
    labels = [int(v) for v in labels]
    if len(labels) != len(vectors):
        raise DataError("labels and vectors lengths differ")
    if keys is None:
        keys = [(lab, i) for i, lab in enumerate(labels)]
    y, _, _ = tsne(vectors, perplexity=perplexity, iterations=iterations, seed=seed,
                   learning_rate=learning_rate)
    return [
        EmbeddingPoint(float(y[i, 0]), float(y[i, 1]), labels[i], tuple(keys[i]))
        for i in range(len(labels))
    ]
