"""Constructors for individually fair classifiers.

Every constructor here returns a classifier whose pairwise gaps satisfy
``|p_u - p_v| <= D(u, v)`` exactly in floating point, so an audit at
``epsilon=0`` passes.
"""

from __future__ import annotations

from collections.abc import Mapping, Sequence
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

from . import kernels
from .core import InfeasibleError, SoftClassifier, TaskMetric

PartialLike = Mapping[int, float] | np.ndarray | Sequence[float]


def _partial_vector(partial: PartialLike | None, n: int) -> np.ndarray:
    """Length-``n`` vector with NaN where the partial classifier is undefined."""
    out = np.full(n, np.nan)
    if partial is None:
        return out
    if isinstance(partial, Mapping):
        for k, v in partial.items():
            out[int(k)] = float(v)
    else:
        arr = np.asarray(partial, dtype=float)
        if arr.shape != (n,):
            raise ValueError(f"partial classifier must have length {n}")
        out[:] = arr
    defined = ~np.isnan(out)
    if np.any((out[defined] < 0) | (out[defined] > 1)):
        raise ValueError("partial probabilities must lie in [0, 1]")
    return out


def fair_add(m: TaskMetric, partial: PartialLike | None, target: float, x: int) -> float:
    """Probability for a new element ``x`` that keeps ``partial`` fair.

    Starts at ``target`` and walks the defined elements in ascending id,
    pulling the value inside each Lipschitz band it falls outside of.
    ``partial`` is either ``{id: p}`` or a length-N vector with NaN on
    undefined elements; it is not modified.
    """
    if not 0.0 <= target <= 1.0:
        raise ValueError("target must lie in [0, 1]")
    probs = _partial_vector(partial, m.size)
    if not np.isnan(probs[x]):
        raise ValueError(f"element {x} already has a probability")
    defined = ~np.isnan(probs)
    filled = np.where(defined, probs, 0.0)
    return float(kernels.fair_add_scan(np.ascontiguousarray(m.dist[x]), filled, defined, float(target)))


def build_fair_classifier(
    m: TaskMetric,
    targets: Sequence[float] | np.ndarray | None = None,
    order: Sequence[int] | np.ndarray | None = None,
    partial: PartialLike | None = None,
) -> SoftClassifier:
    """Extend ``partial`` to the whole universe one element at a time.

    ``targets[x]`` is the value ``x`` would get with no constraints; NaN (or
    ``targets=None``) means "copy the nearest already-placed element".  The
    result depends on ``order`` (default ascending id) but is always fair.
    """
    n = m.size
    probs = _partial_vector(partial, n)
    tgt = np.full(n, np.nan) if targets is None else np.array(targets, dtype=float)
    if tgt.shape != (n,):
        raise ValueError(f"targets must have length {n}")
    if np.any((tgt < 0) | (tgt > 1)):
        raise ValueError("targets must lie in [0, 1]")
    if order is None:
        ordr = np.arange(n, dtype=np.int64)
    else:
        ordr = np.asarray(order, dtype=np.int64)
        if sorted(ordr.tolist()) != list(range(n)):
            raise ValueError("order must be a permutation of element ids")
    out = kernels.build_fair(np.ascontiguousarray(m.dist), probs, tgt, ordr)
    return SoftClassifier(out)


def maximize_pair_distance(m: TaskMetric, u: int, v: int, low: float = 0.0) -> SoftClassifier:
    """Fair classifier with ``p_v - p_u = D(u, v)`` exactly.

    ``p_u`` is ``low`` (shifted down if ``low + D`` would exceed 1); every
    other element copies its nearest placed neighbour.
    """
    if u == v:
        raise ValueError("u and v must differ")
    d = m(u, v)
    pu = min(float(low), 1.0 - d)
    pv = pu + d
    # keep the gap exact after rounding
    while pv - pu > d:
        pv = np.nextafter(pv, pu)
    return build_fair_classifier(m, partial={u: pu, v: pv}, order=_pair_first(m.size, u, v))


def _pair_first(n: int, u: int, v: int) -> np.ndarray:
    rest = [i for i in range(n) if i not in (u, v)]
    return np.array([u, v, *rest], dtype=np.int64)


def pair_ratio_probs(d: float, alpha: float) -> tuple[float, float]:
    """``(p_u, p_v)`` with ``p_u / p_v = alpha`` and ``|p_u - p_v| <= d``."""
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    if alpha == 1.0:
        return 1.0, 1.0
    if d <= 0.0:
        raise InfeasibleError("a ratio other than 1 needs a positive distance between the pair")
    pv = 1.0 / max(alpha, 1.0)
    pu = alpha * pv
    gap = abs(pu - pv)
    if gap > d:
        beta = d / gap
        pv, pu = beta * pv, beta * pu
    shrink = 1.0
    while abs(pu - pv) > d:
        shrink = np.nextafter(shrink, 0.0)
        pv, pu = pv * shrink, pu * shrink
    return float(pu), float(pv)


def set_pair_ratio(m: TaskMetric, u: int, v: int, alpha: float) -> SoftClassifier:
    """Fair classifier with ``p_u / p_v = alpha`` on the chosen pair.

    Starts from the largest probabilities with that ratio and scales both
    down together until the pair's gap fits within ``D(u, v)``.
    """
    if u == v:
        raise ValueError("u and v must differ")
    pu, pv = pair_ratio_probs(m(u, v), alpha)
    return build_fair_classifier(m, partial={u: pu, v: pv}, order=_pair_first(m.size, u, v))


@dataclass(frozen=True)
class AllocationTarget:
    """Linear objective ``sum(utilities * p)`` with ``sum(p) <= cap``."""

    utilities: np.ndarray
    cap: float

    def __post_init__(self):
        q = np.array(self.utilities, dtype=float)
        if q.ndim != 1 or not np.all(np.isfinite(q)):
            raise ValueError("utilities must be a finite vector")
        if self.cap < 0:
            raise ValueError("cap must be nonnegative")
        q.setflags(write=False)
        object.__setattr__(self, "utilities", q)
        object.__setattr__(self, "cap", float(self.cap))


def _lp_constraints(dist: np.ndarray, cap: float) -> tuple[sparse.csr_matrix, np.ndarray]:
    n = dist.shape[0]
    # pairs at distance >= 1 are implied by the box bounds
    iu, iv = np.nonzero(np.triu(dist < 1.0, 1))
    k = iu.size
    rows = np.repeat(np.arange(2 * k), 2)
    cols = np.empty(4 * k, dtype=np.int64)
    vals = np.empty(4 * k)
    # p_u - p_v <= d and p_v - p_u <= d
    cols[0:2 * k:2], cols[1:2 * k:2] = iu, iv
    vals[0:2 * k:2], vals[1:2 * k:2] = 1.0, -1.0
    cols[2 * k::2], cols[2 * k + 1::2] = iv, iu
    vals[2 * k::2], vals[2 * k + 1::2] = 1.0, -1.0
    pair = sparse.csr_matrix((vals, (rows, cols)), shape=(2 * k, n))
    budget = sparse.csr_matrix(np.ones((1, n)))
    d = dist[iu, iv]
    A = sparse.vstack([pair, budget], format="csr")
    b = np.concatenate([d, d, [cap]])
    return A, b


def optimize_fair_classifier(m: TaskMetric, target: AllocationTarget) -> SoftClassifier:
    """Maximise expected utility of a fair classifier under an allocation cap.

    Solved as a linear program (HiGHS).  The solver's answer is then passed
    through :func:`build_fair_classifier` as targets, which removes the
    solver's feasibility slack so the result is fair at ``epsilon=0``.
    """
    n = m.size
    q = target.utilities
    if q.shape != (n,):
        raise ValueError("utilities length does not match the metric")
    cap = min(target.cap, float(n))
    if cap == 0.0:
        return SoftClassifier(np.zeros(n))
    A, b = _lp_constraints(m.dist, cap)
    res = linprog(
        -q,
        A_ub=A,
        b_ub=b,
        bounds=(0.0, 1.0),
        method="highs",
        options={"primal_feasibility_tolerance": 1e-10, "dual_feasibility_tolerance": 1e-10},
    )
    if res.status != 0:  # pragma: no cover - the zero vector is always feasible
        raise RuntimeError(f"linear program failed: {res.message}")
    x = np.clip(res.x, 0.0, 1.0)
    order = np.argsort(-x, kind="stable")
    p = build_fair_classifier(m, targets=x, order=order).p
    excess = p.sum() - cap
    if excess > 0:
        # trim the overshoot uniformly from the top, then re-repair
        p = np.clip(p * (cap / p.sum()), 0.0, 1.0)
        p = build_fair_classifier(m, targets=p, order=order).p
    return SoftClassifier(p)
