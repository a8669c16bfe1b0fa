import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fewshot_stack.episodes import (
    EpisodeSpec,
    ablation_grid,
    cross_validate,
    k_sweep,
    run_episode,
    sample_episode,
)
from fewshot_stack.errors import ConfigError, DataError
from fewshot_stack.headnet import TrainConfig, with_dims
from fewshot_stack.synthetic import (
    separable_dataset,
    separable_stores,
    signal_free_dataset,
)

from conftest import SMALL_DIMS, make_store

# the paper-default lr 5e-5 is calibrated for the full-size head; the tiny
# test heads need a larger step to converge inside the same epoch budget
FAST_TRAIN = TrainConfig(learning_rate=3e-3, epochs=300, seed=0)


def small_head(dataset, s=4, l2=0.0, hidden=(16, 8), filters=16):
    return with_dims(dataset.dim, s, conv_filters=filters, hidden_sizes=hidden,
                     l2_lambda=l2)


def nearest_centroid_accuracy(episode):
    """Independent oracle: classify queries by closest support centroid."""
    n = episode.support_y.max() + 1
    centroids = np.stack(
        [episode.support_x[episode.support_y == c].mean(axis=0) for c in range(n)]
    )
    d2 = ((episode.query_x[:, None, :] - centroids[None, :, :]) ** 2).sum(axis=2)
    return float((d2.argmin(axis=1) == episode.query_y).mean())


# -- sampling ----------------------------------------------------------------

def test_sample_counts_default(small_dataset):
    ep = sample_episode(small_dataset, EpisodeSpec(seed=1))
    assert len(ep.support_keys) == 25 and ep.support_x.shape[0] == 25
    assert len(ep.query_keys) == 135 and ep.query_x.shape[0] == 135
    assert np.bincount(ep.support_y, minlength=5).tolist() == [5] * 5
    assert np.bincount(ep.query_y, minlength=5).tolist() == [27] * 5


def test_sample_counts_one_shot(small_dataset):
    ep = sample_episode(small_dataset, EpisodeSpec(k_shot=1, seed=1))
    assert len(ep.support_keys) == 5
    assert len(ep.query_keys) == 135


def test_sample_deterministic(small_dataset):
    a = sample_episode(small_dataset, EpisodeSpec(seed=42))
    b = sample_episode(small_dataset, EpisodeSpec(seed=42))
    assert a.support_keys == b.support_keys
    assert a.query_keys == b.query_keys
    assert np.array_equal(a.support_x, b.support_x)
    c = sample_episode(small_dataset, EpisodeSpec(seed=43))
    assert a.support_keys != c.support_keys


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 100_000))
def test_support_query_disjoint(small_dataset, seed):
    ep = sample_episode(small_dataset, EpisodeSpec(seed=seed))
    assert not set(ep.support_keys) & set(ep.query_keys)
    assert len(set(ep.support_keys)) == len(ep.support_keys)
    assert len(set(ep.query_keys)) == len(ep.query_keys)


def test_sample_class_too_small():
    ds = separable_dataset(dims=(16,), per_class=20, seed=0,
                           backbone_names=("bb",))
    with pytest.raises(DataError):
        sample_episode(ds, EpisodeSpec(k_shot=5, q_query=27, pool_per_class=32))


def test_sample_pool_shrinks_to_available():
    # 30 < pool 32 but >= k+q = 28: the whole class becomes the pool
    ds = separable_dataset(dims=(16,), per_class=30, seed=0, backbone_names=("bb",))
    ep = sample_episode(ds, EpisodeSpec(k_shot=3, q_query=25, seed=5))
    assert len(ep.support_keys) == 15
    assert len(ep.query_keys) == 125
    ids = {key for key in ep.support_keys if key[0] == 0}
    assert len(ids) == 3


def test_sample_subset_of_classes():
    ds = separable_dataset(n_classes=8, dims=(32,), per_class=34, seed=0,
                           backbone_names=("bb",))
    spec = EpisodeSpec(n_way=5, seed=3)
    ep = sample_episode(ds, spec)
    assert len(ep.class_indices) == 5
    assert list(ep.class_indices) == sorted(ep.class_indices)
    assert set(ep.support_y) == set(range(5))
    with pytest.raises(DataError):
        sample_episode(
            separable_dataset(n_classes=3, dims=(32,), per_class=34,
                              backbone_names=("bb",)),
            EpisodeSpec(n_way=5),
        )


def test_spec_validation():
    with pytest.raises(ConfigError):
        EpisodeSpec(k_shot=10, q_query=27, pool_per_class=32)
    with pytest.raises(ConfigError):
        EpisodeSpec(n_way=0)


# -- single episodes ----------------------------------------------------------

def test_run_episode_confusion_counts(small_dataset):
    tc = TrainConfig(epochs=10, seed=0)
    acc, confusion = run_episode(small_dataset, EpisodeSpec(seed=2),
                                 small_head(small_dataset), tc)
    assert confusion.shape == (5, 5)
    assert confusion.sum() == 135
    assert confusion.sum(axis=1).tolist() == [27] * 5
    assert acc == pytest.approx(np.trace(confusion) / confusion.sum())


def test_run_episode_separable_beats_95(small_dataset):
    ep = sample_episode(small_dataset, EpisodeSpec(seed=7))
    assert nearest_centroid_accuracy(ep) >= 0.99  # oracle first
    acc, _ = run_episode(small_dataset, EpisodeSpec(seed=7),
                         small_head(small_dataset), FAST_TRAIN)
    assert acc >= 0.95


def test_run_episode_chance_on_noise():
    ds = signal_free_dataset(dims=SMALL_DIMS, per_class=34, seed=21)
    tc = TrainConfig(epochs=60, seed=0)
    accs = []
    for i in range(8):
        acc, _ = run_episode(ds, EpisodeSpec(seed=100 + i),
                             small_head(ds), tc)
        accs.append(acc)
    assert 0.05 <= np.mean(accs) <= 0.4  # chance is 0.2


# -- cross-validation ----------------------------------------------------------

def test_cross_validate_aggregation(small_dataset):
    tc = TrainConfig(epochs=40, seed=0)
    report = cross_validate(small_dataset, EpisodeSpec(seed=5),
                            small_head(small_dataset), tc, n_episodes=4)
    assert len(report.per_episode_accuracy) == 4
    assert report.mean == pytest.approx(np.mean(report.per_episode_accuracy))
    assert report.std == pytest.approx(np.std(report.per_episode_accuracy))
    assert report.confusion.sum() == 4 * 135
    assert report.confusion.sum(axis=1).tolist() == [4 * 27] * 5
    assert min(report.per_episode_accuracy) <= report.mean <= max(report.per_episode_accuracy)


def test_cross_validate_zero_std_when_episodes_agree(small_dataset):
    report = cross_validate(small_dataset, EpisodeSpec(seed=1),
                            small_head(small_dataset), FAST_TRAIN, n_episodes=2)
    # separable data: both episodes score 1.0, so the spread is exactly zero
    assert report.per_episode_accuracy == [1.0, 1.0]
    assert report.std == 0.0


def test_cross_validate_needs_two_episodes(small_dataset):
    with pytest.raises(ConfigError):
        cross_validate(small_dataset, EpisodeSpec(), small_head(small_dataset),
                       FAST_TRAIN, n_episodes=1)


def test_cross_validate_jobs_match_serial(small_dataset):
    tc = TrainConfig(epochs=15, seed=3)
    spec = EpisodeSpec(seed=9)
    head = small_head(small_dataset)
    serial = cross_validate(small_dataset, spec, head, tc, n_episodes=4, jobs=1)
    parallel = cross_validate(small_dataset, spec, head, tc, n_episodes=4, jobs=2)
    assert serial.per_episode_accuracy == parallel.per_episode_accuracy
    assert np.array_equal(serial.confusion, parallel.confusion)


def test_episode_reproducible_from_seed(small_dataset):
    tc = TrainConfig(epochs=15, seed=3)
    a = run_episode(small_dataset, EpisodeSpec(seed=4), small_head(small_dataset), tc)
    b = run_episode(small_dataset, EpisodeSpec(seed=4), small_head(small_dataset), tc)
    assert a[0] == b[0]
    assert np.array_equal(a[1], b[1])


# -- k sweep -------------------------------------------------------------------

def test_k_sweep_monotone_on_separable(small_dataset):
    tc = TrainConfig(learning_rate=3e-3, epochs=200, seed=0)
    results = k_sweep(small_dataset, [1, 3, 5], EpisodeSpec(seed=11),
                      small_head(small_dataset), tc, n_episodes=4)
    ks = [k for k, _ in results]
    assert ks == [1, 3, 5]
    means = [r.mean for _, r in results]
    diag = [np.trace(r.confusion) / r.confusion.sum() for _, r in results]
    assert all(b >= a - 1e-12 for a, b in zip(means, means[1:]))
    assert all(b >= a - 1e-12 for a, b in zip(diag, diag[1:]))


# -- ablation grid ---------------------------------------------------------------

def test_ablation_incompatible_cells_without_training():
    stores = [
        make_store("resnet50", 2048, n_classes=5, per_class=1),
        make_store("densenet201", 1920, n_classes=5, per_class=1),
    ]
    cells = ablation_grid(
        stores,
        subsets=[("densenet201",)],
        s_values=[32, 16],
        mlp_structures=[(8,)],
        spec=EpisodeSpec(seed=0),
        train_config=TrainConfig(epochs=1),
        n_episodes=2,
    )
    assert [c.status for c in cells] == ["incompatible", "incompatible"]
    assert all(c.accuracy_mean is None and c.accuracy_std is None for c in cells)


def test_ablation_four_ok_cells_for_resnet_grid(small_stores):
    # one backbone store, four grid sides that all divide its dim
    store = small_stores[0]  # dim 64
    cells = ablation_grid(
        [store],
        subsets=[(store.backbone_name,)],
        s_values=[8, 4, 2, 1],
        mlp_structures=[(8,)],
        spec=EpisodeSpec(seed=0),
        train_config=TrainConfig(epochs=5, seed=0),
        n_episodes=2,
        conv_filters=8,
        l2_lambda=0.0,
    )
    assert len(cells) == 4
    assert all(c.status == "ok" for c in cells)
    assert all(0.0 <= c.accuracy_mean <= 1.0 for c in cells)


def test_ablation_seven_subset_rows(small_stores):
    names = [st.backbone_name for st in small_stores]
    import itertools

    subsets = [c for size in (1, 2, 3) for c in itertools.combinations(names, size)]
    cells = ablation_grid(
        small_stores,
        subsets=subsets,
        s_values=[4],
        mlp_structures=[(8,)],
        spec=EpisodeSpec(seed=0),
        train_config=TrainConfig(epochs=3, seed=0),
        n_episodes=2,
        conv_filters=8,
        l2_lambda=0.0,
    )
    assert len(cells) == 7
    assert [c.backbone_subset for c in cells] == subsets


def test_ablation_rejects_bad_input(small_stores):
    with pytest.raises(ConfigError):
        ablation_grid(small_stores, subsets=[], s_values=[4], mlp_structures=[(8,)],
                      spec=EpisodeSpec(), train_config=TrainConfig())
    with pytest.raises(ConfigError):
        ablation_grid(small_stores, subsets=[("nope",)], s_values=[4],
                      mlp_structures=[(8,)], spec=EpisodeSpec(),
                      train_config=TrainConfig())
    with pytest.raises(ConfigError):
        ablation_grid(small_stores, subsets=[()], s_values=[4],
                      mlp_structures=[(8,)], spec=EpisodeSpec(),
                      train_config=TrainConfig())
