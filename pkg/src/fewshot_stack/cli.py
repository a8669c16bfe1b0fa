"""Command-line interface.

Subcommands: ``validate`` (inspect FSF files), ``eval`` (repeated-episode
evaluation), ``ablate`` (backbone/grid/MLP sweeps), ``tsne`` (2-D embedding
export). Options resolve as flag > config file > environment
(``FEWSHOT_STACK_SEED``) > default, and every run directory receives a
``manifest.json`` naming the resolved configuration, input digests and seed.

Exit codes: 0 ok, 1 validation failure, 2 config error, 3 data error,
4 incompatible reshape.
"""

from __future__ import annotations

import argparse
import hashlib
import itertools
import json
import os
import sys
from datetime import datetime, timezone

import numpy as np

from . import __version__, backends
from .episodes import EpisodeSpec, cross_validate, sample_episode
from .errors import (
    ConfigError,
    DataError,
    DivisibilityError,
    FewshotStackError,
    FsfError,
    JoinError,
    ValidationError,
)
from .fsf import join, read_fsf
from .headnet import TrainConfig, forward, train_head, with_dims
from .reporting import emit_report, render_confusion
from .stacking import stack_batch
from .tsne import EmbeddingPoint, tsne

DEFAULTS = {
    "ways": 5,
    "shots": 5,
    "queries": 27,
    "pool": 32,
    "episodes": 10,
    "reshape": 4,
    "filters": 512,
    "hidden": "512,256,32",
    "lr": 5e-5,
    "epochs": 300,
    "l2": 0.5,
    "jobs": 1,
    "format": "both",
    "perplexity": 30.0,
    "tsne_iters": 1000,
    "reshapes": None,
    "subsets": "all",
    "structures": None,
    "raw_features": False,
}

SEED_ENV = "FEWSHOT_STACK_SEED"


def _utcnow() -> str:
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%S.%fZ")


def _sha256(path: str) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _parse_int_list(text: str, flag: str) -> tuple[int, ...]:
    try:
        items = tuple(int(v) for v in str(text).split(",") if str(v).strip() != "")
    except ValueError as exc:
        raise ConfigError(f"{flag} expects a comma-separated integer list: {text!r}") from exc
    if not items:
        raise ConfigError(f"{flag} must not be empty")
    return items


def resolve_options(args: argparse.Namespace, keys) -> dict:
    """Materialize the configuration: flags beat config file beat defaults."""
    resolved = {k: DEFAULTS[k] for k in keys}
    if getattr(args, "config", None):
        try:
            with open(args.config, "r", encoding="utf-8") as fh:
                file_cfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config file {args.config}: {exc}") from exc
        if not isinstance(file_cfg, dict):
            raise ConfigError("config file must hold one JSON object")
        for k, v in file_cfg.items():
            if k == "seed":
                continue
            if k not in resolved:
                raise ConfigError(f"unknown config key {k!r}")
            resolved[k] = v
    for k in keys:
        flag_val = getattr(args, k, None)
        if flag_val is not None:
            resolved[k] = flag_val
    return resolved


def resolve_seed(args: argparse.Namespace) -> int:
    if getattr(args, "seed", None) is not None:
        return int(args.seed)
    if getattr(args, "config", None):
        with open(args.config, "r", encoding="utf-8") as fh:
            file_cfg = json.load(fh)
        if isinstance(file_cfg, dict) and "seed" in file_cfg:
            return int(file_cfg["seed"])
    env = os.environ.get(SEED_ENV)
    if env is not None:
        try:
            return int(env)
        except ValueError as exc:
            raise ConfigError(f"{SEED_ENV}={env!r} is not an integer") from exc
    return 0


def _load_stores(paths):
    return [read_fsf(p) for p in paths]


def _write_manifest(out_dir, command, config, inputs, seed, started):
    manifest = {
        "tool": "fewshot-stack",
        "version": __version__,
        "command": command,
        "backend": backends.backend_name(),
        "config": config,
        "inputs": [{"path": str(p), "sha256": _sha256(p)} for p in inputs],
        "seed": seed,
        "started_utc": started,
        "finished_utc": _utcnow(),
    }
    with open(os.path.join(out_dir, "manifest.json"), "w", encoding="utf-8", newline="\n") as fh:
        json.dump(manifest, fh, indent=2)
        fh.write("\n")


def _formats(fmt: str):
    if fmt not in ("csv", "json", "both"):
        raise ConfigError(f"--format must be csv, json or both, got {fmt!r}")
    return ("csv", "json") if fmt == "both" else (fmt,)


def cmd_validate(args) -> int:
    ok = True
    stores = []
    for path in args.features:
        try:
            store = read_fsf(path)
        except (FsfError, OSError) as exc:
            ok = False
            print(f"{path}: ERROR ({type(exc).__name__}): {exc}")
            continue
        stores.append(store)
        counts = {}
        for rec in store.records:
            counts[rec.class_index] = counts.get(rec.class_index, 0) + 1
        per_class = ", ".join(
            f"{store.class_names[ci]}={counts.get(ci, 0)}" for ci in range(len(store.class_names))
        )
        print(
            f"{path}: backbone={store.backbone_name} dim={store.dim} "
            f"classes={len(store.class_names)} records={len(store.records)} ({per_class})"
        )
    if len(stores) >= 2 and ok:
        try:
            joined = join(stores)
            print(f"joinable, total dim {joined.dim} ({len(joined)} shared items)")
        except JoinError as exc:
            ok = False
            print(f"not joinable: {exc}")
    return 0 if ok else 1


def _head_config(dim, opts, ways):
    return with_dims(
        dim,
        int(opts["reshape"]),
        conv_filters=int(opts["filters"]),
        hidden_sizes=_parse_int_list(opts["hidden"], "--hidden"),
        n_classes=ways,
        l2_lambda=float(opts["l2"]),
    )


def cmd_eval(args) -> int:
    keys = ("ways", "shots", "queries", "pool", "episodes", "reshape", "filters",
            "hidden", "lr", "epochs", "l2", "jobs", "format")
    opts = resolve_options(args, keys)
    seed = resolve_seed(args)
    formats = _formats(opts["format"])
    started = _utcnow()
    os.makedirs(args.out, exist_ok=True)

    dataset = join(_load_stores(args.features))
    ways = int(opts["ways"])
    spec = EpisodeSpec(
        n_way=ways,
        k_shot=int(opts["shots"]),
        q_query=int(opts["queries"]),
        pool_per_class=int(opts["pool"]),
        seed=seed,
    )
    head_config = _head_config(dataset.dim, opts, ways)
    train_config = TrainConfig(
        learning_rate=float(opts["lr"]), epochs=int(opts["epochs"]), seed=seed
    )
    report = cross_validate(
        dataset, spec, head_config, train_config,
        n_episodes=int(opts["episodes"]), jobs=int(opts["jobs"]),
    )

    if "csv" in formats:
        emit_report(report, os.path.join(args.out, "report.csv"), "csv")
    if "json" in formats:
        emit_report(report, os.path.join(args.out, "report.json"), "json")
    if ways == len(dataset.class_names):
        names = list(dataset.class_names)
    else:
        names = [f"way_{i}" for i in range(ways)]  # class identity varies per episode
    with open(os.path.join(args.out, "confusion.txt"), "w", encoding="utf-8", newline="\n") as fh:
        fh.write(render_confusion(report.confusion, names))
    resolved = dict(opts)
    resolved["seed"] = seed
    _write_manifest(args.out, "eval", resolved, args.features, seed, started)
    print(f"mean accuracy {report.mean:.4f} +- {report.std:.4f} over "
          f"{len(report.per_episode_accuracy)} episodes -> {args.out}")
    return 0


def _parse_subsets(text, backbone_names):
    if text == "all":
        subsets = []
        for size in range(1, len(backbone_names) + 1):
            subsets += [tuple(c) for c in itertools.combinations(backbone_names, size)]
        return subsets
    subsets = []
    for part in str(text).split(";"):
        part = part.strip()
        if not part:
            raise ConfigError("empty backbone subset in --subsets")
        subsets.append(tuple(name.strip() for name in part.split("+")))
    if not subsets:
        raise ConfigError("--subsets must name at least one subset")
    return subsets


def cmd_ablate(args) -> int:
    from .episodes import ablation_grid

    keys = ("ways", "shots", "queries", "pool", "episodes", "reshape", "filters",
            "hidden", "lr", "epochs", "l2", "jobs", "format",
            "reshapes", "subsets", "structures")
    opts = resolve_options(args, keys)
    seed = resolve_seed(args)
    formats = _formats(opts["format"])
    started = _utcnow()
    os.makedirs(args.out, exist_ok=True)

    stores = _load_stores(args.features)
    subsets = _parse_subsets(opts["subsets"], [st.backbone_name for st in stores])
    if opts["reshapes"] is not None:
        s_values = _parse_int_list(opts["reshapes"], "--reshapes")
    else:
        s_values = (int(opts["reshape"]),)
    if opts["structures"] is not None:
        structures = [
            _parse_int_list(p, "--structures") for p in str(opts["structures"]).split(";")
        ]
    else:
        structures = [_parse_int_list(opts["hidden"], "--hidden")]

    spec = EpisodeSpec(
        n_way=int(opts["ways"]),
        k_shot=int(opts["shots"]),
        q_query=int(opts["queries"]),
        pool_per_class=int(opts["pool"]),
        seed=seed,
    )
    train_config = TrainConfig(
        learning_rate=float(opts["lr"]), epochs=int(opts["epochs"]), seed=seed
    )
    cells = ablation_grid(
        stores, subsets, s_values, structures, spec, train_config,
        n_episodes=int(opts["episodes"]),
        conv_filters=int(opts["filters"]),
        l2_lambda=float(opts["l2"]),
        jobs=int(opts["jobs"]),
    )
    if "csv" in formats:
        emit_report(cells, os.path.join(args.out, "ablation.csv"), "csv")
    if "json" in formats:
        emit_report(cells, os.path.join(args.out, "ablation.json"), "json")
    resolved = dict(opts)
    resolved["seed"] = seed
    _write_manifest(args.out, "ablate", resolved, args.features, seed, started)
    n_ok = sum(1 for c in cells if c.status == "ok")
    print(f"{len(cells)} cells ({n_ok} ok, {len(cells) - n_ok} incompatible) -> {args.out}")
    return 0


def cmd_tsne(args) -> int:
    keys = ("ways", "shots", "queries", "pool", "reshape", "filters", "hidden",
            "lr", "epochs", "l2", "format", "perplexity", "tsne_iters", "raw_features")
    opts = resolve_options(args, keys)
    seed = resolve_seed(args)
    formats = _formats(opts["format"])
    started = _utcnow()
    os.makedirs(args.out, exist_ok=True)

    dataset = join(_load_stores(args.features))
    ways = int(opts["ways"])
    spec = EpisodeSpec(
        n_way=ways,
        k_shot=int(opts["shots"]),
        q_query=int(opts["queries"]),
        pool_per_class=int(opts["pool"]),
        seed=seed,
    )
    episode = sample_episode(dataset, spec)
    labels = [k[0] for k in episode.query_keys]  # dataset-global class indices

    if opts["raw_features"]:
        vectors = episode.query_x
    else:
        head_config = _head_config(dataset.dim, opts, ways)
        train_config = TrainConfig(
            learning_rate=float(opts["lr"]), epochs=int(opts["epochs"]), seed=seed
        )
        xs = stack_batch(episode.support_x, head_config.input_spatial)
        xq = stack_batch(episode.query_x, head_config.input_spatial)
        params, _ = train_head(list(zip(xs, episode.support_y)), head_config, train_config)
        _, cache = forward(head_config, params, xq, mode="eval")
        vectors = cache["dense_inputs"][-1]  # penultimate activations

    y, _, _ = tsne(
        np.asarray(vectors, dtype=np.float64),
        perplexity=float(opts["perplexity"]),
        iterations=int(opts["tsne_iters"]),
        seed=seed,
    )
    points = [
        EmbeddingPoint(float(y[i, 0]), float(y[i, 1]), labels[i], episode.query_keys[i])
        for i in range(len(labels))
    ]
    if "csv" in formats:
        emit_report(points, os.path.join(args.out, "embedding.csv"), "csv",
                    class_names=dataset.class_names)
    if "json" in formats:
        emit_report(points, os.path.join(args.out, "embedding.json"), "json",
                    class_names=dataset.class_names)
    resolved = dict(opts)
    resolved["seed"] = seed
    _write_manifest(args.out, "tsne", resolved, args.features, seed, started)
    print(f"embedded {len(points)} query points -> {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="fewshot-stack",
        description="Few-shot evaluation of stacked multi-backbone features.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_val = sub.add_parser("validate", help="inspect FSF files and report joinability")
    p_val.add_argument("features", nargs="+", metavar="FSF")
    p_val.set_defaults(func=cmd_validate)

    def common(p):
        p.add_argument("--features", nargs="+", required=True, metavar="FSF",
                       help="feature files; order fixes the concatenation order")
        p.add_argument("--config", help="JSON config file (flags override it)")
        p.add_argument("--ways", type=int)
        p.add_argument("--shots", type=int)
        p.add_argument("--queries", type=int)
        p.add_argument("--pool", type=int)
        p.add_argument("--reshape", type=int, help="grid side S of the restack")
        p.add_argument("--filters", type=int)
        p.add_argument("--hidden", help="comma list, e.g. 512,256,32")
        p.add_argument("--lr", type=float)
        p.add_argument("--epochs", type=int)
        p.add_argument("--l2", type=float)
        p.add_argument("--seed", type=int, help=f"falls back to ${SEED_ENV}, then 0")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--format", choices=["csv", "json", "both"])

    p_eval = sub.add_parser("eval", help="repeated-episode evaluation")
    common(p_eval)
    p_eval.add_argument("--episodes", type=int)
    p_eval.add_argument("--jobs", type=int, help="parallel episodes (default 1)")
    p_eval.set_defaults(func=cmd_eval)

    p_abl = sub.add_parser("ablate", help="backbone / grid-side / MLP sweeps")
    common(p_abl)
    p_abl.add_argument("--episodes", type=int)
    p_abl.add_argument("--jobs", type=int)
    p_abl.add_argument("--subsets",
                       help="semicolon list of +-joined backbone names, or 'all'")
    p_abl.add_argument("--reshapes", help="comma list of grid sides, e.g. 32,16,8,4")
    p_abl.add_argument("--structures",
                       help="semicolon list of comma hidden-size lists")
    p_abl.set_defaults(func=cmd_ablate)

    p_tsne = sub.add_parser("tsne", help="embed one episode's query set in 2-D")
    common(p_tsne)
    p_tsne.add_argument("--raw-features", dest="raw_features", action="store_true",
                        default=None, help="embed joined vectors without training")
    p_tsne.add_argument("--perplexity", type=float)
    p_tsne.add_argument("--tsne-iters", dest="tsne_iters", type=int)
    p_tsne.set_defaults(func=cmd_tsne)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DivisibilityError as exc:
        print(f"incompatible reshape: {exc}", file=sys.stderr)
        return 4
    except (FsfError, JoinError, DataError, ValidationError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except FewshotStackError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
