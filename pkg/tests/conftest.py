import numpy as np
import pytest

from fewshot_stack.fsf import FeatureRecord, FeatureStore
from fewshot_stack.synthetic import separable_dataset, separable_stores

SMALL_DIMS = (64, 64, 32)  # joined dim 160 = 4*4*10, cheap to train on


def make_store(
    backbone_name="bb",
    dim=8,
    n_classes=2,
    per_class=3,
    seed=0,
    class_names=None,
    image_ids=None,
):
    rng = np.random.default_rng(seed)
    if class_names is None:
        class_names = tuple(f"c{i}" for i in range(n_classes))
    records = []
    for ci in range(len(class_names)):
        ids = image_ids if image_ids is not None else range(per_class)
        for iid in ids:
            records.append(
                FeatureRecord(ci, iid, rng.standard_normal(dim).astype(np.float32))
            )
    return FeatureStore(backbone_name, dim, tuple(class_names), tuple(records))


@pytest.fixture(scope="session")
def small_dataset():
    """Separable 5-class dataset at joined dim 160 (4x4x10), 40 per class."""
    return separable_dataset(dims=SMALL_DIMS, per_class=40, seed=11)


@pytest.fixture(scope="session")
def small_stores():
    return separable_stores(dims=SMALL_DIMS, per_class=40, seed=11)
