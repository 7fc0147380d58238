import os
import subprocess
import sys

import numpy as np
import pytest

from faircompose import kernels
from faircompose._jit import NUMBA_AVAILABLE


def _cases(rng):
    n = int(rng.integers(2, 30))
    q = rng.random(n)
    dist = np.abs(q[:, None] - q[None, :])
    probs = np.full(n, np.nan)
    defined = np.zeros(n, dtype=bool)
    k = int(rng.integers(0, n))
    defined[:k] = True
    probs[:k] = np.clip(q[0] + (q[:k] - q[0]) * rng.random(), 0, 1)
    probs_def = np.where(defined, np.clip(q, 0, 1), np.nan)
    size = int(rng.integers(1, 7))
    p = rng.random(size)
    nsel = int(rng.integers(1, size + 1))
    trials = 200
    orders = np.argsort(rng.random((trials, size)), axis=1).astype(np.int64)
    coins = rng.random((trials, size))
    kt = int(rng.integers(1, 5))
    P = rng.random((n, kt))
    rank = np.array([rng.permutation(kt) for _ in range(n)], dtype=np.int64)
    rules = [(kernels.RULE_STRICT, rank, np.zeros(n)), (kernels.RULE_UNIFORM, rank, np.zeros(n))]
    if kt == 2:
        rules.append((kernels.RULE_RHO, rank, rng.random(n)))
    d1, d2 = float(rng.random()), float(rng.random())
    cand_p = np.unique(np.r_[0.0, d1, 1 - d1, 1.0, np.round(rng.random(5), 2)])
    cand_q = np.unique(np.r_[0.0, d2, 1 - d2, 1.0, np.round(rng.random(5), 2)])
    cases = [
        ("fair_add_scan", (dist[n - 1].copy(), probs_def.copy(), np.arange(n) < n - 1, float(rng.random()))),
        ("build_fair", (dist, probs, rng.random(n), rng.permutation(n).astype(np.int64))),
        ("ptc_exact", (p, nsel)),
        ("ptc_monte_carlo", (p, nsel, orders, coins)),
        ("witness", (d1, d2, float(rng.random()), float(rng.random()), cand_p, cand_q, int(rng.integers(3)))),
    ]
    cases += [("competitive", (P, *r)) for r in rules]
    return cases


def _call(fn, args):
    return fn(*[a.copy() if isinstance(a, np.ndarray) else a for a in args])


def _same(a, b):
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    np.testing.assert_allclose(a, b, atol=1e-12, rtol=0)


@pytest.mark.skipif(not NUMBA_AVAILABLE, reason="numba not installed")
def test_numba_matches_numpy(rng):
    for _ in range(60):
        for name, args in _cases(rng):
            _same(_call(kernels.NUMBA_IMPLS[name], args), _call(kernels.NUMPY_IMPLS[name], args))


def test_loop_bodies_match_numpy(rng):
    # the uncompiled loop versions, so the logic is checked even without numba
    for _ in range(10):
        for name, args in _cases(rng):
            if name == "ptc_exact" and args[0].size > 5:
                continue
            loop = kernels.NUMBA_IMPLS[name].py_func
            _same(_call(loop, args), _call(kernels.NUMPY_IMPLS[name], args))


def test_tables_cover_same_kernels():
    assert set(kernels.NUMBA_IMPLS) == set(kernels.NUMPY_IMPLS)


def test_disable_flag_selects_numpy_and_agrees():
    code = (
        "import numpy as np, faircompose as fc\n"
        "print(fc.backend())\n"
        "print(repr(fc.ptc_selection_probability([0.9, 0.4, 0.2, 0.7], 2).probs.tolist()))\n"
    )
    env = {**os.environ, "FAIRCOMPOSE_DISABLE_NUMBA": "1"}
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True).stdout
    backend, probs = out.strip().splitlines()
    assert backend == "numpy"
    from faircompose import ptc_selection_probability

    np.testing.assert_allclose(eval(probs), ptc_selection_probability([0.9, 0.4, 0.2, 0.7], 2).probs, atol=1e-12)
