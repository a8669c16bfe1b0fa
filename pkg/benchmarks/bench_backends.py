"""Benchmark: compiled kernels vs the pure-numpy fallback.

Times the individual kernels and two end-to-end workloads (one training
episode at the production feature dimension, one t-SNE embedding) under
each backend. Run:

    python benchmarks/bench_backends.py [--repeats N]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from fewshot_stack import backends
from fewshot_stack.episodes import EpisodeSpec, run_episode
from fewshot_stack.headnet import TrainConfig, with_dims
from fewshot_stack.synthetic import separable_dataset
from fewshot_stack.tsne import tsne


def timeit(fn, repeats, warmup=1):
    for _ in range(warmup):
        fn()
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_kernels(repeats):
    rng = np.random.default_rng(0)
    x = rng.standard_normal((25, 4, 4, 376)).astype(np.float32)
    n_par = 2_136_517
    p = rng.standard_normal(n_par).astype(np.float32)
    g = rng.standard_normal(n_par).astype(np.float32)
    m = np.zeros(n_par, dtype=np.float32)
    v = np.zeros(n_par, dtype=np.float32)
    yy = rng.standard_normal((500, 2))
    pp = np.abs(rng.standard_normal((500, 500)))
    pp = (pp + pp.T) / (2 * pp.sum())
    np.fill_diagonal(pp, 0.0)
    d2 = backends.pairwise_sq_dists(rng.standard_normal((500, 32)))

    rows = {}
    rows["im2col 25x4x4x376"] = timeit(lambda: backends.im2col3x3(x), repeats)
    rows["adam 2.1M params"] = timeit(
        lambda: backends.adam_update(p, g, m, v, 3, 1e-4, 0.9, 0.999, 1e-8), repeats
    )
    rows["tsne grad N=500"] = timeit(lambda: backends.tsne_grad(yy, pp), repeats)
    rows["tsne kl N=500"] = timeit(lambda: backends.tsne_kl(yy, pp), repeats)
    rows["perplexity search N=500"] = timeit(
        lambda: backends.conditional_probs(d2, np.log(30.0)), max(1, repeats // 2)
    )
    return rows


def bench_end_to_end():
    dataset = separable_dataset(per_class=34, seed=1)
    head = with_dims(dataset.dim, 4, l2_lambda=0.0)
    tc = TrainConfig(epochs=100, seed=0)

    def episode():
        run_episode(dataset, EpisodeSpec(seed=3), head, tc)

    rng = np.random.default_rng(2)
    emb_x = rng.standard_normal((300, 32))
    emb_x[100:200, 0] += 15
    emb_x[200:, 1] += 15

    def embed():
        tsne(emb_x, perplexity=20.0, iterations=300, seed=0)

    return {
        "episode (100 epochs, dim 6016)": timeit(episode, 1, warmup=0),
        "tsne (N=300, 300 iters)": timeit(embed, 1, warmup=0),
    }


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    results = {}
    for name in backends.available_backends():
        backends.set_backend(name)
        rows = bench_kernels(args.repeats)
        rows.update(bench_end_to_end())
        results[name] = rows

    names = list(results)
    keys = list(next(iter(results.values())))
    width = max(len(k) for k in keys) + 2
    header = f"{'benchmark':<{width}}" + "".join(f"{n:>14}" for n in names)
    two = set(names) == {"cython", "numpy"}
    if two:
        header += f"{'cy speedup':>12}"
    print(header)
    print("-" * len(header))
    for key in keys:
        line = f"{key:<{width}}"
        for n in names:
            line += f"{results[n][key] * 1e3:>12.2f}ms"
        if two:
            line += f"{results['numpy'][key] / results['cython'][key]:>11.2f}x"
        print(line)


if __name__ == "__main__":
    main()
