"""The ensembling operator: restack a concatenated feature vector on an SxS grid.

The bijection is channel-contiguous: input index i maps to channel
``i // S**2``, row ``(i % S**2) // S``, column ``i % S``. Each channel is
therefore one contiguous S*S chunk of the input laid out row-major, which
keeps every backbone's features in whole channels when the per-backbone
dims are divisible by S*S.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DivisibilityError, ValidationError


@dataclass(frozen=True)
class StackedTensor:
    """An S x S x C spatial stack of a length-S*S*C feature vector."""

    spatial: int
    channels: int
    data: np.ndarray  # (S, S, C), channels last

    def __post_init__(self):
        s, c = self.spatial, self.channels
        if self.data.shape != (s, s, c):
            raise ValidationError(
                f"data shape {self.data.shape} != ({s}, {s}, {c})"
            )


def divisible(dim: int, spatial: int) -> bool:
    return spatial > 0 and dim % (spatial * spatial) == 0


def reshape_stack(vector: np.ndarray, spatial: int) -> StackedTensor:
    """Reshape a length-D vector into an S x S grid of D/S**2 channels."""
    vector = np.asarray(vector)
    if vector.ndim != 1:
        raise ValidationError(f"expected a 1-D vector, got shape {vector.shape}")
    dim = vector.shape[0]
    if not divisible(dim, spatial):
        raise DivisibilityError(
            f"vector length {dim} is not divisible by {spatial}x{spatial}={spatial * spatial}"
        )
    channels = dim // (spatial * spatial)
    data = vector.reshape(channels, spatial, spatial).transpose(1, 2, 0).copy()
    return StackedTensor(spatial=spatial, channels=channels, data=data)


def flatten(tensor: StackedTensor) -> np.ndarray:
    """Exact inverse of :func:`reshape_stack`."""
    return tensor.data.transpose(2, 0, 1).reshape(-1).copy()


def stack_batch(vectors: np.ndarray, spatial: int) -> np.ndarray:
    """Vectorized reshape_stack: (B, D) -> (B, S, S, C) with the same mapping."""
    vectors = np.asarray(vectors)
    if vectors.ndim != 2:
        raise ValidationError(f"expected (B, D) matrix, got shape {vectors.shape}")
    b, dim = vectors.shape
    if not divisible(dim, spatial):
        raise DivisibilityError(
            f"vector length {dim} is not divisible by {spatial}x{spatial}={spatial * spatial}"
        )
    channels = dim // (spatial * spatial)
    return np.ascontiguousarray(
        vectors.reshape(b, channels, spatial, spatial).transpose(0, 2, 3, 1)
    )
