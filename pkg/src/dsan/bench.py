"""Microbenchmarks: strip aggregation vs its oracle vs convolution.

Times are min-of-repeats (robust against scheduler noise) reported in
nanoseconds per output pixel. The interesting properties: cost is flat in
the dilation (addressing changes, work does not) and linear in K.
"""

from __future__ import annotations

import csv
import time
from pathlib import Path

import numpy as np

from . import tensor as T
from .strip import dsa, dsa_oracle
from .tensor import Tensor

__all__ = ["run_bench", "bench_rows"]


def _time_min(fn, reps: int) -> float:
    best = float("inf")
    for _ in range(reps):
        t0 = time.perf_counter_ns()
        fn()
        best = min(best, time.perf_counter_ns() - t0)
    return best


def bench_rows(
    ks: tuple[int, ...] = (3, 5, 9),
    ds: tuple[int, ...] = (1, 2, 3, 4),
    hw: int = 96,
    channels: int = 16,
    reps: int = 12,
    oracle_hw: int = 24,
) -> list[dict]:
    """Measure ns/pixel for dsa across (K, d), the naive oracle, and conv2d."""
    rng = np.random.default_rng(0)
    rows = []

    x = Tensor(rng.normal(size=(1, channels, hw, hw)))
    for K in ks:
        a = rng.uniform(0.2, 0.8, size=(1, 1, K))
        for d in ds:
            dsa(x, a, K, d, "horizontal")  # warm
            ns = _time_min(lambda: dsa(x, a, K, d, "horizontal"), reps)
            rows.append(
                {"op": "dsa", "K": K, "d": d, "HxW": f"{hw}x{hw}", "ns_per_pixel": ns / (hw * hw)}
            )

    xo = rng.normal(size=(1, 4, oracle_hw, oracle_hw))
    for K in ks:
        a = rng.uniform(0.2, 0.8, size=(1, 1, K))
        ns = _time_min(lambda: dsa_oracle(xo, a, K, 2, "horizontal"), max(2, reps // 4))
        rows.append(
            {
                "op": "dsa_oracle",
                "K": K,
                "d": 2,
                "HxW": f"{oracle_hw}x{oracle_hw}",
                "ns_per_pixel": ns / (oracle_hw * oracle_hw),
            }
        )

    for K in (3,):
        w = Tensor(rng.normal(size=(channels, channels, K, K)))
        T.conv2d(x, w, padding=K // 2)
        ns = _time_min(lambda: T.conv2d(x, w, padding=K // 2), reps)
        rows.append(
            {"op": "conv2d", "K": K, "d": 1, "HxW": f"{hw}x{hw}", "ns_per_pixel": ns / (hw * hw)}
        )
    return rows


def run_bench(out_dir, **kwargs) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "bench.csv"
    rows = bench_rows(**kwargs)
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["op", "K", "d", "HxW", "ns_per_pixel"])
        w.writeheader()
        for r in rows:
            r = dict(r)
            r["ns_per_pixel"] = f"{r['ns_per_pixel']:.2f}"
            w.writerow(r)
    return path
