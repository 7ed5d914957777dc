"""Compiled vs pure-Python kernels.

    python benchmarks/bench_kernels.py [--rows 40000] [--repeat 5]

Times the most-violated-row scan, exact 2-D pruning, and a full scenario
QP solve with each backend swapped in.
"""
from __future__ import annotations

import argparse
import contextlib
import timeit

import numpy as np

from scenario_cbf import kernels
from scenario_cbf.qp import QpProblem, prune_rows, solve


@contextlib.contextmanager
def use_backend(mod):
    saved = kernels.most_violated, kernels.halfplane_cycle
    kernels.most_violated, kernels.halfplane_cycle = mod.most_violated, mod.halfplane_cycle
    try:
        yield
    finally:
        kernels.most_violated, kernels.halfplane_cycle = saved


def make_problem(n, seed=0):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(n, 2))
    centre = rng.uniform(-0.3, 0.3, 2)
    b = A @ centre + rng.uniform(0.0, 0.3, n) * np.linalg.norm(A, axis=1)
    return QpProblem(np.eye(2), rng.normal(scale=3, size=2), A, b, [-1, -1], [1, 1])


def best(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rows", type=int, default=40_000)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    p = make_problem(args.rows)
    A = np.ascontiguousarray(p.A)
    inv = 1.0 / np.linalg.norm(A, axis=1)
    x = np.zeros(2)
    cases = {
        "most_violated": lambda mod: best(lambda: mod.most_violated(A, p.b, x, inv), args.repeat),
        "prune exact-2d": lambda mod: best(
            lambda: prune_rows(A, p.b, p.lower, p.upper, backend=mod), args.repeat),
        "full solve": lambda mod: best(lambda: solve(p), args.repeat),
    }
    found = kernels.backends()
    if "cython" not in found:
        print("compiled extension not built; timing the python backend only")
    print(f"rows={args.rows} repeat={args.repeat} (best of, milliseconds)")
    print(f"{'case':<16}" + "".join(f"{name:>12}" for name in found) + f"{'speedup':>10}")
    for label, run in cases.items():
        times = {}
        for name, mod in found.items():
            with use_backend(mod):
                times[name] = run(mod) * 1e3
        line = f"{label:<16}" + "".join(f"{times[n]:>12.3f}" for n in found)
        if "cython" in times:
            line += f"{times['python'] / times['cython']:>9.1f}x"
        print(line)


if __name__ == "__main__":
    main()
