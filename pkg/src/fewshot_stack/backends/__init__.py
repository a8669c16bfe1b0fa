"""Kernel backend selection.

Two interchangeable implementations of the hot inner kernels exist:

* ``_ckernels`` — Cython extension compiled at install time,
* ``numpy_ops`` — pure-numpy fallback.

The compiled backend is preferred when importable; set the environment
variable ``FEWSHOT_STACK_BACKEND`` to ``numpy`` or ``cython`` to force one.
All heavy matrix products go through BLAS in both backends; the kernels
here cover the gather/scatter and elementwise loops around them.

Every kernel is re-exported as a module-level function that forwards to the
active backend, so callers never hold a direct reference and benchmarks
and tests can flip backends at runtime via :func:`set_backend`.
"""

from __future__ import annotations

import os

from . import numpy_ops

try:
    from . import _ckernels
except ImportError:
    _ckernels = None

_BACKENDS = {"numpy": numpy_ops}
if _ckernels is not None:
    _BACKENDS["cython"] = _ckernels


def _default_backend():
    forced = os.environ.get("FEWSHOT_STACK_BACKEND", "").strip().lower()
    if forced:
        if forced not in _BACKENDS:
            available = ", ".join(sorted(_BACKENDS))
            raise ImportError(
                f"FEWSHOT_STACK_BACKEND={forced!r} not available (have: {available})"
            )
        return _BACKENDS[forced]
    return _BACKENDS.get("cython", numpy_ops)


_active = _default_backend()


def set_backend(name: str) -> None:
    if name not in _BACKENDS:
        available = ", ".join(sorted(_BACKENDS))
        raise ValueError(f"unknown backend {name!r} (have: {available})")
    global _active
    _active = _BACKENDS[name]


def backend_name() -> str:
    return _active.NAME


def available_backends() -> list[str]:
    return sorted(_BACKENDS)


def im2col3x3(x):
    return _active.im2col3x3(x)


def adam_update(p, g, m, v, t, lr, beta1, beta2, eps):
    return _active.adam_update(p, g, m, v, t, lr, beta1, beta2, eps)


def pairwise_sq_dists(x):
    return _active.pairwise_sq_dists(x)


def conditional_probs(d2, log_perp, tol=1e-5, max_iter=64):
    return _active.conditional_probs(d2, log_perp, tol, max_iter)


def tsne_grad(y, p):
    return _active.tsne_grad(y, p)


def tsne_kl(y, p):
    return _active.tsne_kl(y, p)
