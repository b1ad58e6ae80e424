"""Time the edge kernel and a full training step on both backends.

    python3 benchmarks/bench_kernels.py [--batch 32] [--hidden 32] [--repeat 20]

Prints one line per (backend, stage) with the median wall time and the
speed-up of the compiled kernel over the NumPy fallback.
"""

import argparse
import statistics
import time

import numpy as np

from rfgesture import _core, gnn
from rfgesture.graph import knn_sources


def _median_time(fn, repeat):
    fn()  # warm-up
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return statistics.median(times)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--batch", type=int, default=32)
    ap.add_argument("--hidden", type=int, default=32)
    ap.add_argument("--steps", type=int, default=30, help="timesteps per sample (l_rs)")
    ap.add_argument("--tags", type=int, default=8)
    ap.add_argument("--k", type=int, default=3)
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args()

    rng = np.random.default_rng(0)
    B, T, N, h = args.batch, args.steps, args.tags, args.hidden
    x = rng.normal(size=(B, T, N, 2))
    src = knn_sources(x, args.k)
    y = rng.integers(0, 21, size=B)
    params = gnn.ModelParams.init(gnn.ModelConfig(hidden_dim=h), seed=0)
    node = lambda: rng.normal(size=(B, T, N, h))  # noqa: E731
    ps, pt, q, kk = node(), node(), node(), node()
    b1 = rng.normal(size=h)

    backends = ["python"] + (["cython"] if _core.BACKEND == "cython" else [])
    if len(backends) == 1:
        print("compiled kernel not built; timing the NumPy fallback only")
    results = {}
    for name in backends:
        fwd, bwd = _core.get_backend(name)
        a, alpha, c = fwd(ps, pt, q, kk, b1, src, 1 / args.k)
        dc = rng.normal(size=c.shape)
        stages = {
            "edge_forward": lambda: fwd(ps, pt, q, kk, b1, src, 1 / args.k),
            "edge_backward": lambda: bwd(dc, a, alpha, q, kk, src, 1 / args.k),
            "train_step": lambda: gnn.loss_and_grads(params, x, src, y, backend=name),
        }
        for stage, fn in stages.items():
            results[name, stage] = _median_time(fn, args.repeat)

    print(f"B={B} T={T} N={N} k={args.k} hidden={h}, median of {args.repeat}")
    for stage in ("edge_forward", "edge_backward", "train_step"):
        line = f"{stage:14s} python {results['python', stage] * 1e3:8.2f} ms"
        if ("cython", stage) in results:
            t = results["cython", stage]
            line += f"   cython {t * 1e3:8.2f} ms   speed-up {results['python', stage] / t:5.2f}x"
        print(line)


if __name__ == "__main__":
    main()
