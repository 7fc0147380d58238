"""Time each kernel under numba and numpy and check they agree.

Usage: python benchmarks/bench_kernels.py [--repeat 5]

Both implementation tables are imported directly, so one process compares
both backends regardless of FAIRCOMPOSE_DISABLE_NUMBA.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from faircompose import kernels
from faircompose._jit import NUMBA_AVAILABLE


def _cases(rng: np.random.Generator) -> dict[str, tuple]:
    n = 300
    q = rng.random(n)
    dist = np.abs(q[:, None] - q[None, :])
    targets = rng.random(n)
    order = rng.permutation(n).astype(np.int64)
    probs = np.full(n, np.nan)
    p8 = rng.random(8)
    trials = 50_000
    orders = np.argsort(rng.random((trials, 8)), axis=1).astype(np.int64)
    coins = rng.random((trials, 8))
    P = rng.random((20_000, 3))
    rank = np.tile(np.array([2, 0, 1], dtype=np.int64), (20_000, 1))
    cand = np.linspace(0.0, 1.0, 41)
    return {
        "build_fair": (dist, probs, targets, order),
        "ptc_exact": (p8, 3),
        "ptc_monte_carlo": (p8, 3, orders, coins),
        "competitive": (P, kernels.RULE_STRICT, rank, np.zeros(20_000)),
        "witness": (0.3, 0.2, 0.5, 0.25, cand, cand, 2),
    }


def _time(fn, args, repeat: int) -> float:
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*[a.copy() if isinstance(a, np.ndarray) else a for a in args])
        best = min(best, time.perf_counter() - t0)
    return best


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    cases = _cases(np.random.default_rng(args.seed))
    print(f"{'kernel':<18} {'numpy s':>10} {'numba s':>10} {'speedup':>8}  agree")
    for name, case in cases.items():
        np_fn = kernels.NUMPY_IMPLS[name]
        nb_fn = kernels.NUMBA_IMPLS[name]
        ref = np_fn(*[a.copy() if isinstance(a, np.ndarray) else a for a in case])
        t_np = _time(np_fn, case, args.repeat)
        if NUMBA_AVAILABLE:
            got = nb_fn(*[a.copy() if isinstance(a, np.ndarray) else a for a in case])  # compile
            t_nb = _time(nb_fn, case, args.repeat)
            agree = np.allclose(np.asarray(ref, dtype=float), np.asarray(got, dtype=float), atol=1e-12)
            print(f"{name:<18} {t_np:>10.4f} {t_nb:>10.4f} {t_np / t_nb:>8.1f}  {agree}")
        else:
            print(f"{name:<18} {t_np:>10.4f} {'n/a':>10} {'n/a':>8}  -")


if __name__ == "__main__":
    main()
