"""Brute-force reference implementations used by the test-suite."""

from __future__ import annotations

import itertools
import math

import numpy as np


def grid_lp_optimum(dist: np.ndarray, util: np.ndarray, cap: float, step: float = 0.01) -> float:
    """Best objective over the regular grid {0, step, ..., 1}^N.

    The first N-1 coordinates are enumerated; for each prefix the last
    coordinate takes the best grid value in its feasible interval, which is
    the same optimum as enumerating it too.
    """
    n = dist.shape[0]
    steps = int(round(1.0 / step))
    vals = np.arange(steps + 1) / steps
    tol = 1e-12
    if n == 1:
        prefix = np.zeros((1, 0))
    else:
        prefix = np.array(np.meshgrid(*[vals] * (n - 1), indexing="ij")).reshape(n - 1, -1).T
    ok = prefix.sum(axis=1) <= cap + tol
    for u in range(n - 1):
        for v in range(u + 1, n - 1):
            ok &= np.abs(prefix[:, u] - prefix[:, v]) <= dist[u, v] + tol
    prefix = prefix[ok]
    last = n - 1
    hi = np.minimum(1.0, cap - prefix.sum(axis=1))
    lo = np.zeros(prefix.shape[0])
    for u in range(n - 1):
        hi = np.minimum(hi, prefix[:, u] + dist[u, last])
        lo = np.maximum(lo, prefix[:, u] - dist[u, last])
    # grid indices inside [lo, hi], widened by the same tolerance as above
    k_hi = np.floor((hi + tol) * steps + 1e-9)
    k_lo = np.ceil((lo - tol) * steps - 1e-9)
    feasible = k_lo <= k_hi
    pick = np.where(util[last] >= 0, k_hi, k_lo)[feasible] / steps
    obj = prefix[feasible] @ util[:last] + util[last] * pick
    return float(obj.max())


def vertex_lp_optimum(dist: np.ndarray, util: np.ndarray, cap: float) -> float:
    """Exact LP optimum by enumerating every basic solution.

    The feasible set is a bounded polytope, so the maximum of a linear
    objective is attained at a vertex; each vertex is the solution of N
    linearly independent tight constraints.
    """
    n = dist.shape[0]
    rows, rhs = [], []
    for u in range(n):
        e = np.zeros(n)
        e[u] = 1.0
        rows += [e, -e]
        rhs += [1.0, 0.0]
        for v in range(u + 1, n):
            r = np.zeros(n)
            r[u], r[v] = 1.0, -1.0
            rows += [r, -r]
            rhs += [dist[u, v], dist[u, v]]
    rows.append(np.ones(n))
    rhs.append(cap)
    A, b = np.array(rows), np.array(rhs)
    combos = np.array(list(itertools.combinations(range(len(rows)), n)))
    M = A[combos]
    good = np.abs(np.linalg.det(M)) > 1e-10
    x = np.linalg.solve(M[good], b[combos[good]][..., None])[..., 0]
    feas = np.all(x @ A.T <= b + 1e-9, axis=1)
    return float((x[feas] @ util).max())


def ptc_exact_bruteforce(p: np.ndarray, n: int) -> np.ndarray:
    """Selection probabilities by enumerating permutations and coin outcomes."""
    size = p.size
    out = np.zeros(size)
    perms = list(itertools.permutations(range(size)))
    for order in perms:
        # walk the scan, branching on each coin
        stack = [(0, (), 1.0)]
        while stack:
            i, chosen, w = stack.pop()
            slots = n - len(chosen)
            if slots == 0 or i == size:
                for u in chosen:
                    out[u] += w / len(perms)
                continue
            u = order[i]
            if slots >= size - i:
                stack.append((i + 1, chosen + (u,), w))
                continue
            if p[u] > 0:
                stack.append((i + 1, chosen + (u,), w * p[u]))
            if p[u] < 1:
                stack.append((i + 1, chosen, w * (1 - p[u])))
    return out


def threshold_bruteforce(P: np.ndarray, k: int) -> np.ndarray:
    """Pr[at least k positives] by enumerating all 2^m outcome vectors."""
    m, n = P.shape
    out = np.zeros(n)
    for bits in itertools.product([0, 1], repeat=m):
        b = np.array(bits, dtype=bool)
        w = np.prod(np.where(b[:, None], P, 1 - P), axis=0)
        if b.sum() >= k:
            out += w
    return out


def threshold_enumeration(P: np.ndarray, k: int, chunk: int = 1 << 15) -> np.ndarray:
    """Vectorised version of :func:`threshold_bruteforce` for up to ~22 classifiers."""
    m, n = P.shape
    shifts = np.arange(m)
    out = np.zeros(n)
    for start in range(0, 1 << m, chunk):
        codes = np.arange(start, min(start + chunk, 1 << m))
        bits = ((codes[:, None] >> shifts) & 1).astype(bool)
        keep = bits.sum(axis=1) >= k
        b = bits[keep]
        for j in range(n):
            out[j] += np.prod(np.where(b, P[:, j], 1 - P[:, j]), axis=1).sum()
    return out


def ws_coefficient_bruteforce(p: np.ndarray, n: int) -> float:
    """(Pr[0] - Pr[1]) / (p_0 - p_1) from explicit set weights."""
    size = p.size
    sets = list(itertools.combinations(range(size), n))
    w = np.array([p[list(s)].sum() for s in sets])
    eta = w.sum()
    sel = np.zeros(size)
    for s, ws in zip(sets, w):
        sel[list(s)] += ws / eta
    return (sel[0] - sel[1]) / (p[0] - p[1])


def n_choose(a: int, b: int) -> int:
    return math.comb(a, b) if 0 <= b <= a else 0
