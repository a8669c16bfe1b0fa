"""Pure-numpy kernel backend (fallback when the extension is not built)."""

from __future__ import annotations

import numpy as np

NAME = "numpy"


def im2col3x3(x: np.ndarray) -> np.ndarray:
    """Patch matrix of a same-padded 3x3 / stride-1 convolution.

    ``x`` is (B, H, W, C); the result is (B*H*W, 9*C) where each row holds
    the 3x3 neighbourhood of one output position, ordered (ki, kj, c) with
    the channel index fastest. That ordering matches a (3, 3, C, F) weight
    tensor reshaped to (9*C, F), so the convolution itself is one GEMM.
    """
    b, h, w, c = x.shape
    padded = np.zeros((b, h + 2, w + 2, c), dtype=x.dtype)
    padded[:, 1 : h + 1, 1 : w + 1, :] = x
    cols = np.empty((b, h, w, 3, 3, c), dtype=x.dtype)
    for ki in range(3):
        for kj in range(3):
            cols[:, :, :, ki, kj, :] = padded[:, ki : ki + h, kj : kj + w, :]
    return cols.reshape(b * h * w, 9 * c)


def adam_update(p, g, m, v, t, lr, beta1, beta2, eps):
    """One bias-corrected Adam step, in place on flat arrays."""
    m *= beta1
    m += (1.0 - beta1) * g
    v *= beta2
    v += (1.0 - beta2) * (g * g)
    mhat = m / (1.0 - beta1**t)
    vhat = v / (1.0 - beta2**t)
    p -= lr * mhat / (np.sqrt(vhat) + eps)


def pairwise_sq_dists(x: np.ndarray) -> np.ndarray:
    """(N, D) -> (N, N) squared euclidean distances with an exact-zero diagonal."""
    sq = np.einsum("ij,ij->i", x, x)
    d2 = sq[:, None] + sq[None, :] - 2.0 * (x @ x.T)
    np.maximum(d2, 0.0, out=d2)
    np.fill_diagonal(d2, 0.0)
    return d2


def conditional_probs(d2, log_perp, tol=1e-5, max_iter=64):
    """Gaussian conditional affinities with per-row bandwidth search.

    For each row i a binary search over the precision beta finds the
    bandwidth whose conditional distribution over j != i has entropy
    log_perp (natural log). Returns (P, err): the row-stochastic
    conditional matrix (zero diagonal) and the per-row residual
    |H_i - log_perp| after the search.
    """
    n = d2.shape[0]
    p = np.zeros((n, n), dtype=np.float64)
    err = np.zeros(n, dtype=np.float64)
    for i in range(n):
        di = np.concatenate([d2[i, :i], d2[i, i + 1 :]])
        dmin = di.min()
        dsh = di - dmin
        beta, beta_lo, beta_hi = 1.0, 0.0, np.inf
        h = 0.0
        row = None
        for _ in range(max_iter):
            ex = np.exp(-dsh * beta)
            s = ex.sum()
            # shifted-entropy identity: H = log s + beta * E[d - dmin]
            h = np.log(s) + beta * float((dsh * ex).sum()) / s
            row = ex / s
            diff = h - log_perp
            if abs(diff) <= tol:
                break
            if diff > 0.0:  # entropy too high -> narrow the kernel
                beta_lo = beta
                beta = beta * 2.0 if np.isinf(beta_hi) else (beta + beta_hi) / 2.0
            else:
                beta_hi = beta
                beta = beta / 2.0 if beta_lo == 0.0 else (beta + beta_lo) / 2.0
        err[i] = abs(h - log_perp)
        p[i, :i] = row[:i]
        p[i, i + 1 :] = row[i:]
    return p, err


def _student_t_weights(y):
    d2 = pairwise_sq_dists(y)
    w = 1.0 / (1.0 + d2)
    np.fill_diagonal(w, 0.0)
    return w


def tsne_grad(y, p):
    """Gradient of KL(P || Q) for the student-t embedding y (N, 2)."""
    w = _student_t_weights(y)
    q = w / w.sum()
    np.maximum(q, 1e-12, out=q)
    pq = (p - q) * w
    return 4.0 * (pq.sum(axis=1)[:, None] * y - pq @ y)


def tsne_kl(y, p):
    """KL(P || Q) of the current embedding, clamping both sides at 1e-12."""
    w = _student_t_weights(y)
    q = np.maximum(w / w.sum(), 1e-12)
    pc = np.maximum(p, 1e-12)
    return float(np.sum(p * (np.log(pc) - np.log(q))))
