#!/usr/bin/env python3
"""Time the numba and numpy variants of each hot kernel and check they agree.

    python3 benchmarks/bench_backends.py [--repeat 5] [--json out.json]

Numba variants are called once before timing so compilation is excluded.
"""
from __future__ import annotations

import argparse
import json
import timeit
from dataclasses import asdict, dataclass

import numpy as np

from fbm_bipolar import kernels
from fbm_bipolar._backend import BACKEND, HAS_NUMBA


@dataclass
class BenchRow:
    kernel: str
    size: str
    numpy_s: float
    numba_s: float
    speedup: float
    max_abs_diff: float


def _cases(rng):
    rows, steps = 256, 4096
    inc = rng.standard_normal((rows, steps)) * 1e-2
    lam = np.geomspace(4.0, 16384.0, rows)
    dt = 2 ** -10
    decay = np.exp(-lam * dt)
    weight = -np.expm1(-lam * dt) / (lam * dt)
    z0 = np.zeros(rows)
    yield ("exp_filter", f"{rows}x{steps}",
           lambda: kernels.exp_filter_numpy(inc, decay, weight, z0),
           lambda: kernels.exp_filter_numba(inc, decay, weight, z0))

    yield ("lattice_sum", "s=1, M=4000",
           lambda: np.float64(kernels.lattice_sum_numpy(1.0, 4000)),
           lambda: np.float64(kernels.lattice_sum_numba(1.0, 4000)))

    grid = np.linspace(0.0, 1.0, 1025)
    phi = np.cos(3 * grid) + grid
    s = np.linspace(0.01, 0.99, 200)
    yield ("singular_integral", "200 pts x 1024 cells",
           lambda: kernels.singular_integral_numpy(s, grid, phi, 1.0, 0.35),
           lambda: kernels.singular_integral_numba(s, grid, phi, 1.0, 0.35))


def run(repeat: int = 5, seed: int = 0) -> list[BenchRow]:
    rng = np.random.default_rng(seed)
    out = []
    for name, size, f_np, f_nb in _cases(rng):
        a, b = np.asarray(f_np()), np.asarray(f_nb())  # warm-up (and JIT compile)
        t_np = min(timeit.repeat(f_np, number=1, repeat=repeat))
        t_nb = min(timeit.repeat(f_nb, number=1, repeat=repeat))
        out.append(BenchRow(name, size, t_np, t_nb, t_np / t_nb, float(np.max(np.abs(a - b)))))
    return out


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json", help="write rows to this file")
    args = ap.parse_args(argv)
    if not HAS_NUMBA:
        print("numba is not installed; the numba column times the plain-python loops")
    rows = run(args.repeat)
    print(f"active backend: {BACKEND}")
    print(f"{'kernel':<18} {'size':<22} {'numpy [s]':>10} {'numba [s]':>10} {'speedup':>8} {'max |diff|':>11}")
    for r in rows:
        print(f"{r.kernel:<18} {r.size:<22} {r.numpy_s:>10.4f} {r.numba_s:>10.4f} {r.speedup:>8.1f} {r.max_abs_diff:>11.2e}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump([asdict(r) for r in rows], fh, indent=2)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
