#!/usr/bin/env python3
"""Benchmark the compiled kernels against the NumPy fallback.

Times the edge-sparse product (forward and both gradients), the segment
softmax, and the soft threshold on a range of problem sizes, then optionally
times a full training epoch under each backend in subprocesses (the backend
is chosen at import time).

Run: python3 benchmarks/bench_kernels.py [--end-to-end]
"""

import argparse
import os
import subprocess
import sys
import time

import numpy as np

from liftwave._kernels import _fallback

try:
    from liftwave._kernels import _speedups
except ImportError:
    _speedups = None


def timeit(fn, *args, repeat=20):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def edge_problem(rng, n_nodes, n_edges, d):
    rows = rng.integers(0, n_nodes, size=n_edges).astype(np.int64)
    cols = rng.integers(0, n_nodes, size=n_edges).astype(np.int64)
    vals = rng.normal(size=n_edges)
    x = rng.normal(size=(n_nodes, d))
    gout = rng.normal(size=(n_nodes, d))
    order = np.argsort(rows, kind="stable")
    rows_sorted = rows[order]
    indptr = np.searchsorted(rows_sorted, np.arange(n_nodes + 1)).astype(np.int64)
    return rows, cols, vals, x, gout, rows_sorted, indptr


def bench_kernels():
    if _speedups is None:
        print("compiled kernels unavailable; showing fallback timings only")
    rng = np.random.default_rng(0)
    cases = [(1_000, 5_000, 16), (5_000, 40_000, 16), (20_000, 200_000, 32)]
    header = f"{'kernel':28s} {'nodes':>7s} {'edges':>8s} {'numpy':>10s} {'cython':>10s} {'speedup':>8s}"
    print(header)
    print("-" * len(header))
    for n_nodes, n_edges, d in cases:
        rows, cols, vals, x, gout, rows_sorted, indptr = edge_problem(rng, n_nodes, n_edges, d)
        probes = [
            ("spmm_edge_forward", (rows, cols, vals, x, n_nodes)),
            ("spmm_edge_grad_vals", (rows, cols, gout, x)),
            ("spmm_edge_grad_x", (rows, cols, vals, gout, n_nodes)),
            ("segment_softmax_forward", (vals[np.argsort(rows, kind="stable")], indptr)),
            ("soft_threshold_forward", (x, 0.1)),
        ]
        for name, args in probes:
            t_py = timeit(getattr(_fallback, name), *args)
            if _speedups is not None:
                t_cy = timeit(getattr(_speedups, name), *args)
                print(
                    f"{name:28s} {n_nodes:7d} {n_edges:8d} {t_py*1e3:9.3f}ms {t_cy*1e3:9.3f}ms {t_py/t_cy:7.1f}x"
                )
            else:
                print(f"{name:28s} {n_nodes:7d} {n_edges:8d} {t_py*1e3:9.3f}ms {'n/a':>10s}")
        print()


END_TO_END_SNIPPET = """
import time
import numpy as np
import liftwave
from liftwave.datasets import synth_sbm_node
from liftwave.preprocess import preprocess_node_dataset
from liftwave.models import NodeModelConfig, build_node_model, train_node_model

ds = synth_sbm_node(200, 0.15, 0.01, seed=0)
data, pg, _ = preprocess_node_dataset(ds, 1.0, 1e-4, 0)
cfg = NodeModelConfig(hidden=32, theta=0.4, dropout=0.4, max_epochs=30, patience=30)
model = build_node_model(cfg, pg, 2, seed=0)
t0 = time.perf_counter()
m = train_node_model(model, data, seed=0)
per_epoch = (time.perf_counter() - t0) / len(m.epochs)
print(f"backend={liftwave.KERNEL_BACKEND}: {per_epoch*1e3:.1f} ms/epoch over {len(m.epochs)} epochs")
"""


def bench_end_to_end():
    for backend in ("py", "cy"):
        env = dict(os.environ, LIFTWAVE_KERNELS=backend)
        try:
            out = subprocess.run(
                [sys.executable, "-c", END_TO_END_SNIPPET],
                env=env,
                capture_output=True,
                text=True,
                check=True,
            )
            print(out.stdout.strip())
        except subprocess.CalledProcessError as exc:
            print(f"backend={backend}: failed ({exc.stderr.strip().splitlines()[-1]})")


if __name__ == "__main__":
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--end-to-end", action="store_true", help="also time a training run per backend")
    opts = parser.parse_args()
    bench_kernels()
    if opts.end_to_end:
        bench_end_to_end()
