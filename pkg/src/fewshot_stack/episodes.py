"""The n-way k-shot protocol: sampling, per-episode train/eval, repeats, sweeps.

Every episode trains the head from scratch (no parameter carry-over) and is
reproducible from (dataset, spec, train seed) alone. Repeated evaluation
derives episode i's seeds as ``seed + i`` for both the sampler and the
trainer, so reports are independent of execution order and parallelism.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError, DataError, DivisibilityError
from .fsf import FeatureStore, JoinedDataset, join
from .headnet import HeadConfig, TrainConfig, predict, train_head, with_dims
from .stacking import divisible, stack_batch


@dataclass(frozen=True)
class EpisodeSpec:
    n_way: int = 5
    k_shot: int = 5
    q_query: int = 27
    pool_per_class: int = 32
    seed: int = 0

    def __post_init__(self):
        if min(self.n_way, self.k_shot, self.q_query, self.pool_per_class) <= 0:
            raise ConfigError(f"episode sizes must be positive: {self}")
        if self.k_shot + self.q_query > self.pool_per_class:
            raise ConfigError(
                f"k + q = {self.k_shot + self.q_query} exceeds the "
                f"per-class pool of {self.pool_per_class}"
            )


@dataclass(frozen=True)
class Episode:
    """Disjoint support/query draws; labels are episode-local 0..n_way-1."""

    class_indices: tuple[int, ...]  # episode-local label -> dataset class index
    support_keys: list[tuple[int, int]]
    support_x: np.ndarray  # (n*k, D) joined vectors
    support_y: np.ndarray  # (n*k,)
    query_keys: list[tuple[int, int]]
    query_x: np.ndarray  # (n*q, D)
    query_y: np.ndarray  # (n*q,)


@dataclass(frozen=True)
class EvalReport:
    per_episode_accuracy: list[float]
    mean: float
    std: float  # population
    confusion: np.ndarray  # (N, N) int64, rows true / cols predicted, all episodes


@dataclass(frozen=True)
class AblationCell:
    backbone_subset: tuple[str, ...]
    reshape_s: int
    mlp_structure: tuple[int, ...]
    accuracy_mean: float | None
    accuracy_std: float | None
    status: str  # "ok" | "incompatible"


def sample_episode(dataset: JoinedDataset, spec: EpisodeSpec, rng=None) -> Episode:
    """Draw one episode: per class, a uniform no-replacement pool whose first
    k items become support and next q become query."""
    if rng is None:
        rng = np.random.default_rng(spec.seed)
    n_classes = len(dataset.class_names)
    if spec.n_way > n_classes:
        raise DataError(f"n_way={spec.n_way} but dataset has {n_classes} classes")
    if spec.n_way < n_classes:
        chosen = np.sort(rng.choice(n_classes, size=spec.n_way, replace=False))
    else:
        chosen = np.arange(n_classes)

    sup_rows, qry_rows = [], []
    sup_y, qry_y = [], []
    k, q = spec.k_shot, spec.q_query
    for local, ci in enumerate(chosen):
        rows = dataset.rows_of_class(int(ci))
        if len(rows) < k + q:
            raise DataError(
                f"class {dataset.class_names[int(ci)]!r} has {len(rows)} items, "
                f"needs at least k+q={k + q}"
            )
        pool_size = min(spec.pool_per_class, len(rows))
        pool = rng.choice(rows, size=pool_size, replace=False)
        sup_rows.append(pool[:k])
        qry_rows.append(pool[k : k + q])
        sup_y += [local] * k
        qry_y += [local] * q

    sup_rows = np.concatenate(sup_rows)
    qry_rows = np.concatenate(qry_rows)

    def keys(rows):
        return [(int(dataset.class_index[r]), int(dataset.image_id[r])) for r in rows]

    return Episode(
        class_indices=tuple(int(c) for c in chosen),
        support_keys=keys(sup_rows),
        support_x=dataset.features[sup_rows],
        support_y=np.array(sup_y, dtype=np.int64),
        query_keys=keys(qry_rows),
        query_x=dataset.features[qry_rows],
        query_y=np.array(qry_y, dtype=np.int64),
    )


def _check_dims(dataset: JoinedDataset, head_config: HeadConfig, spec: EpisodeSpec):
    s, c = head_config.input_spatial, head_config.input_channels
    if s * s * c != dataset.dim:
        if not divisible(dataset.dim, s):
            raise DivisibilityError(
                f"joined dim {dataset.dim} is not divisible by {s}x{s}"
            )
        raise ConfigError(
            f"head expects {s * s * c} features, dataset provides {dataset.dim}"
        )
    if head_config.n_classes != spec.n_way:
        raise ConfigError(
            f"head has {head_config.n_classes} outputs but the episode is "
            f"{spec.n_way}-way"
        )


def run_episode(
    dataset: JoinedDataset,
    spec: EpisodeSpec,
    head_config: HeadConfig,
    train_config: TrainConfig,
):
    """Sample, stack, train on support, score the query set.

    Returns (accuracy, confusion) with confusion rows true / columns predicted.
    """
    _check_dims(dataset, head_config, spec)
    episode = sample_episode(dataset, spec)
    s = head_config.input_spatial
    xs = stack_batch(episode.support_x, s)
    xq = stack_batch(episode.query_x, s)
    params, _ = train_head(list(zip(xs, episode.support_y)), head_config, train_config)
    _, pred = predict(head_config, params, xq)
    n = spec.n_way
    confusion = np.zeros((n, n), dtype=np.int64)
    np.add.at(confusion, (episode.query_y, pred), 1)
    accuracy = float(np.trace(confusion) / confusion.sum())
    return accuracy, confusion


def cross_validate(
    dataset: JoinedDataset,
    spec: EpisodeSpec,
    head_config: HeadConfig,
    train_config: TrainConfig,
    n_episodes: int = 10,
    jobs: int = 1,
) -> EvalReport:
    """Repeat independent episodes (seeds seed+i) and aggregate mean/std/confusion."""
    if n_episodes < 2:
        raise ConfigError("cross_validate needs n_episodes >= 2")
    _check_dims(dataset, head_config, spec)

    def one(i: int):
        return run_episode(
            dataset,
            replace(spec, seed=spec.seed + i),
            head_config,
            replace(train_config, seed=train_config.seed + i),
        )

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(one, range(n_episodes)))
    else:
        results = [one(i) for i in range(n_episodes)]

    accuracies = [acc for acc, _ in results]
    confusion = np.zeros((spec.n_way, spec.n_way), dtype=np.int64)
    for _, c in results:
        confusion += c
    return EvalReport(
        per_episode_accuracy=accuracies,
        mean=float(np.mean(accuracies)),
        std=float(np.std(accuracies)),
        confusion=confusion,
    )


def k_sweep(
    dataset: JoinedDataset,
    ks,
    spec: EpisodeSpec,
    head_config: HeadConfig,
    train_config: TrainConfig,
    n_episodes: int = 10,
    jobs: int = 1,
):
    """One cross-validation per k, sharing the base seed. Returns [(k, report)]."""
    out = []
    for k in ks:
        out.append(
            (
                int(k),
                cross_validate(
                    dataset,
                    replace(spec, k_shot=int(k)),
                    head_config,
                    train_config,
                    n_episodes=n_episodes,
                    jobs=jobs,
                ),
            )
        )
    return out


def ablation_grid(
    stores: list[FeatureStore],
    subsets,
    s_values,
    mlp_structures,
    spec: EpisodeSpec,
    train_config: TrainConfig,
    n_episodes: int = 10,
    conv_filters: int = 512,
    l2_lambda: float = 0.5,
    jobs: int = 1,
) -> list[AblationCell]:
    """Evaluate every (backbone subset, grid side, MLP structure) cell.

    Grid sides that do not divide a subset's joined dimension yield
    ``status="incompatible"`` cells instead of failing: those are exactly
    the impossible combinations the sweep is meant to expose.
    """
    if not subsets:
        raise ConfigError("ablation needs at least one backbone subset")
    by_name = {st.backbone_name: st for st in stores}
    cells: list[AblationCell] = []
    for subset in subsets:
        subset = tuple(subset)
        if not subset:
            raise ConfigError("empty backbone subset")
        missing = [n for n in subset if n not in by_name]
        if missing:
            raise ConfigError(f"unknown backbone(s) {missing}; have {sorted(by_name)}")
        joined = join([by_name[n] for n in subset])
        for s in s_values:
            s = int(s)
            compatible = divisible(joined.dim, s)
            for structure in mlp_structures:
                structure = tuple(int(h) for h in structure)
                if not compatible:
                    cells.append(AblationCell(subset, s, structure, None, None, "incompatible"))
                    continue
                head_config = with_dims(
                    joined.dim,
                    s,
                    conv_filters=conv_filters,
                    hidden_sizes=structure,
                    n_classes=spec.n_way,
                    l2_lambda=l2_lambda,
                )
                report = cross_validate(
                    joined, spec, head_config, train_config, n_episodes=n_episodes, jobs=jobs
                )
                cells.append(
                    AblationCell(subset, s, structure, report.mean, report.std, "ok")
                )
    return cells
