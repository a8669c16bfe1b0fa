"""Synthetic Gaussian-cluster feature sets.

Real deployments feed the engine FSF files extracted from frozen backbones;
these generators produce statistically controlled stand-ins so the episodic
machinery can be exercised (and its accuracy claims checked against a
nearest-centroid oracle) without any image data.

Separable sets place class centers along mutually orthogonal unit
directions (dense across all coordinates, like real pooled embeddings,
where class identity is spread over many feature dims) at
``center_distance / sqrt(2)``, so every pair of centers is exactly
``center_distance`` apart. Noise is isotropic gaussian scaled so the
cluster radius (the L2 norm of a noise draw, sqrt(dim) * per-coordinate
std) equals ``cluster_radius``; with the defaults the centers sit at
pairwise distance 10x the cluster radius, which is what makes a
nearest-centroid classifier on few-shot centroids essentially perfect.
Per-coordinate noise of the same magnitude as the separation would not:
in thousands of dimensions the centroid-estimation error alone would
swamp the class signal.
"""

from __future__ import annotations

import numpy as np

from .fsf import FeatureRecord, FeatureStore, JoinedDataset, join

DEFAULT_BACKBONES = ("resnet50", "efficientnet-b5", "densenet201")
DEFAULT_DIMS = (2048, 2048, 1920)


def _to_stores(features, class_names, dims, backbone_names, per_class):
    stores = []
    offset = 0
    n_classes = len(class_names)
    for name, dim in zip(backbone_names, dims):
        records = []
        for ci in range(n_classes):
            for iid in range(per_class):
                row = features[ci * per_class + iid, offset : offset + dim]
                records.append(FeatureRecord(ci, iid, np.ascontiguousarray(row)))
        stores.append(FeatureStore(name, dim, tuple(class_names), tuple(records)))
        offset += dim
    return stores


def separable_stores(
    n_classes: int = 5,
    dims: tuple[int, ...] = DEFAULT_DIMS,
    per_class: int = 40,
    center_distance: float = 10.0,
    cluster_radius: float = 1.0,
    seed: int = 0,
    backbone_names: tuple[str, ...] = DEFAULT_BACKBONES,
) -> list[FeatureStore]:
    """Per-backbone stores whose joined vectors form n_classes tight clusters."""
    total = sum(dims)
    if n_classes > total:
        raise ValueError("more classes than feature dimensions")
    if len(dims) != len(backbone_names):
        raise ValueError("dims and backbone_names must align")
    rng = np.random.default_rng(seed)
    sigma_coord = cluster_radius / np.sqrt(total)
    feats = rng.normal(0.0, sigma_coord, size=(n_classes * per_class, total)).astype(np.float32)
    directions, _ = np.linalg.qr(rng.standard_normal((total, n_classes)))
    centers = (center_distance / np.sqrt(2.0)) * directions.T.astype(np.float32)
    for ci in range(n_classes):
        feats[ci * per_class : (ci + 1) * per_class] += centers[ci]
    class_names = [f"class_{i}" for i in range(n_classes)]
    return _to_stores(feats, class_names, dims, backbone_names, per_class)


def signal_free_stores(
    n_classes: int = 5,
    dims: tuple[int, ...] = DEFAULT_DIMS,
    per_class: int = 40,
    cluster_radius: float = 1.0,
    seed: int = 0,
    backbone_names: tuple[str, ...] = DEFAULT_BACKBONES,
) -> list[FeatureStore]:
    """Same layout, but labels carry no information (pure noise features)."""
    rng = np.random.default_rng(seed)
    total = sum(dims)
    sigma_coord = cluster_radius / np.sqrt(total)
    feats = rng.normal(0.0, sigma_coord, size=(n_classes * per_class, total)).astype(np.float32)
    class_names = [f"class_{i}" for i in range(n_classes)]
    return _to_stores(feats, class_names, dims, backbone_names, per_class)


def separable_dataset(**kwargs) -> JoinedDataset:
    return join(separable_stores(**kwargs))


def signal_free_dataset(**kwargs) -> JoinedDataset:
    return join(signal_free_stores(**kwargs))
