"""Bias-corrected Adam over the head's trainable parameters.

Update rule per step t (elementwise):

    m <- b1*m + (1-b1)*g          v <- b2*v + (1-b2)*g^2
    p <- p - lr * (m / (1-b1^t)) / (sqrt(v / (1-b2^t)) + eps)

Only trainables move; BN running statistics are never touched here.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import backends
from .errors import ValidationError
from .headnet import HeadParams


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0

    @classmethod
    def for_params(cls, params: HeadParams) -> "AdamState":
        tr = params.trainables()
        return cls(
            m={k: np.zeros_like(a) for k, a in tr.items()},
            v={k: np.zeros_like(a) for k, a in tr.items()},
        )


def adam_step(
    state: AdamState,
    params: HeadParams,
    grads: dict[str, np.ndarray],
    lr: float,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    """Advance params and state in place by one Adam step."""
    trainables = params.trainables()
    if set(grads) != set(trainables):
        raise ValidationError(
            f"gradient keys {sorted(grads)} do not match trainables {sorted(trainables)}"
        )
    state.t += 1
    for name, p in trainables.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ValidationError(f"gradient shape mismatch for {name}")
        backends.adam_update(
            p.reshape(-1),
            np.ascontiguousarray(g, dtype=p.dtype).reshape(-1),
            state.m[name].reshape(-1),
            state.v[name].reshape(-1),
            state.t,
            lr,
            beta1,
            beta2,
            eps,
        )
