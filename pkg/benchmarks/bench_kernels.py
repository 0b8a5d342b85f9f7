"""Time the compiled kernels against the numpy fallback.

Run from the repository root::

    python3 benchmarks/bench_kernels.py [--repeat 5] [--json out.json]

Each kernel is called on the same inputs under both backends; the median
wall time over ``--repeat`` runs is reported with the speed-up of the
compiled backend.  The end-to-end rows time one CPD registration and one
sparse-coding solve with every kernel routed through the given backend.
"""
from __future__ import annotations

import argparse
import json
import statistics
import time
from contextlib import contextmanager

import numpy as np

from toothsparse import kernels
from toothsparse.bpdn import BpdnConfig, solve_bpdn
from toothsparse.cpd import CpdConfig, cpd_nonrigid

KERNEL_NAMES = ("nearest", "cpd_posterior", "weighted_sq_distance", "admm_bpdn", "fnv1a64")


@contextmanager
def routed(module):
    saved = {name: getattr(kernels, name) for name in KERNEL_NAMES}
    try:
        for name in KERNEL_NAMES:
            setattr(kernels, name, getattr(module, name))
        yield
    finally:
        for name, fn in saved.items():
            setattr(kernels, name, fn)


def median_time(fn, repeat: int) -> float:
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return statistics.median(times)


def cases(rng):
    pts = rng.normal(size=(300, 3))
    qs = rng.normal(size=(1500, 3))
    X, Y = rng.normal(size=(300, 3)), rng.normal(size=(300, 3))
    P = rng.random((300, 300))
    D = rng.normal(size=(60, 100))
    U, s, Vt = np.linalg.svd(D, full_matrices=False)
    b = U.T @ rng.normal(size=60)
    blob = np.frombuffer(rng.bytes(1 << 20), dtype=np.uint8)

    def admm(mod):
        z, u2 = np.zeros(100), np.zeros(100)
        u1, v = np.zeros(60), np.zeros(60)
        mod.admm_bpdn(Vt, s, b, 0.1, z, u1, u2, v, 1.0, 500, 25, 1e-12, np.inf, 0.0)

    return {
        "nearest 1500x300": lambda m: m.nearest(pts, qs),
        "cpd_posterior 300x300": lambda m: m.cpd_posterior(X, Y, 0.5, -2.0),
        "weighted_sq_distance 300x300": lambda m: m.weighted_sq_distance(P, X, Y),
        "admm_bpdn 60x100, 500 it": admm,
        "fnv1a64 1 MiB": lambda m: m.fnv1a64(blob),
    }


def end_to_end(rng):
    u = rng.normal(size=(300, 3))
    target = u / np.linalg.norm(u, axis=1, keepdims=True) * 5.0
    source = target * [1.1, 0.95, 1.0] + 0.3
    D = rng.normal(size=(900, 100))
    a = D @ (rng.normal(size=100) * (rng.random(100) < 0.1)) + rng.normal(scale=0.05, size=900)
    return {
        "cpd_nonrigid 300 pts": lambda: cpd_nonrigid(source, target, CpdConfig()),
        "solve_bpdn 900x100": lambda: solve_bpdn(D, a, BpdnConfig(), relax_infeasible=True),
    }


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--json", default=None, help="also write results to this file")
    args = parser.parse_args(argv)

    available = kernels.backends()
    rng = np.random.default_rng(args.seed)
    results = []
    for name, fn in cases(rng).items():
        row = {"case": name}
        for backend, mod in available.items():
            row[backend] = median_time(lambda: fn(mod), args.repeat)
        results.append(row)
    for name, fn in end_to_end(rng).items():
        row = {"case": name}
        for backend, mod in available.items():
            with routed(mod):
                row[backend] = median_time(fn, args.repeat)
        results.append(row)

    print(f"{'case':<32}{'python (s)':>12}{'compiled (s)':>14}{'speed-up':>10}")
    for row in results:
        py = row["python"]
        c = row.get("compiled")
        ctext = f"{c:14.5f}{py / c:9.1f}x" if c is not None else f"{'n/a':>14}{'':>10}"
        print(f"{row['case']:<32}{py:12.5f}{ctext}")
    if "compiled" not in available:
        print("compiled extension not built; only the numpy fallback was timed")
    if args.json:
        with open(args.json, "w", encoding="utf-8") as fh:
            json.dump({"repeat": args.repeat, "results": results}, fh, indent=2, sort_keys=True)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
