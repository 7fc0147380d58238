"""Logical composition of independent classifiers.

All compositions assume the classifiers draw their randomness independently,
so every output is a closed-form function of the per-element probabilities.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from .construct import maximize_pair_distance
from .core import (
    DEFAULT_EPSILON,
    FairnessError,
    FairnessReport,
    SoftClassifier,
    TaskMetric,
    audit_individual_fairness,
    as_probs,
)

ClassifierLike = SoftClassifier | np.ndarray | Sequence[float]


def _stack(classifiers: Sequence[ClassifierLike]) -> np.ndarray:
    """``(k, N)`` array of probabilities; checks equal length."""
    if len(classifiers) == 0:
        raise ValueError("at least one classifier is required")
    rows = [as_probs(c) for c in classifiers]
    n = rows[0].shape[0]
    if any(r.shape[0] != n for r in rows):
        raise ValueError("classifiers have different lengths")
    return np.vstack(rows)


def _membership(applies: np.ndarray | None, k: int, n: int) -> np.ndarray:
    if applies is None:
        return np.ones((k, n), dtype=bool)
    a = np.asarray(applies, dtype=bool)
    if a.shape != (k, n):
        raise ValueError(f"applies must have shape ({k}, {n})")
    return a


def compose_or(classifiers: Sequence[ClassifierLike], applies: np.ndarray | None = None) -> np.ndarray:
    """Probability of at least one positive.

    ``applies[i, u]`` (default all true) says whether classifier ``i`` is run
    on element ``u``; skipped classifiers count as negative.
    """
    P = _stack(classifiers)
    A = _membership(applies, *P.shape)
    return 1.0 - np.prod(np.where(A, 1.0 - P, 1.0), axis=0)


def compose_and(classifiers: Sequence[ClassifierLike]) -> np.ndarray:
    return np.prod(_stack(classifiers), axis=0)


def compose_xor_exactly_one(classifiers: Sequence[ClassifierLike]) -> np.ndarray:
    """Probability that exactly one classifier is positive."""
    P = _stack(classifiers)
    out = np.zeros(P.shape[1])
    for i in range(P.shape[0]):
        others = np.prod(np.delete(1.0 - P, i, axis=0), axis=0)
        out += P[i] * others
    return out


def success_count_distribution(classifiers: Sequence[ClassifierLike]) -> np.ndarray:
    """``(N, k+1)`` array; entry ``[u, j]`` = Pr[exactly j positives for u]."""
    P = _stack(classifiers)
    k, n = P.shape
    dist = np.zeros((n, k + 1))
    dist[:, 0] = 1.0
    for i in range(k):
        p = P[i][:, None]
        shifted = np.zeros_like(dist)
        shifted[:, 1:] = dist[:, :-1]
        dist = dist * (1.0 - p) + shifted * p
    return dist


def compose_threshold(classifiers: Sequence[ClassifierLike], k: int) -> np.ndarray:
    """Probability of at least ``k`` positives (exact dynamic programme)."""
    m = len(classifiers)
    if not 1 <= k <= m:
        raise ValueError(f"k must be between 1 and {m}")
    return success_count_distribution(classifiers)[:, k:].sum(axis=1)


@dataclass(frozen=True)
class HeavyOrCheck:
    ok: bool
    witness: int | None
    probabilities: np.ndarray

    def __bool__(self) -> bool:
        return self.ok


def check_heavy_or(classifiers: Sequence[ClassifierLike] | ClassifierLike) -> HeavyOrCheck:
    """True iff the OR of ``classifiers`` is at least 1/2 for every element.

    Accepts either a list of classifiers or a single pre-composed vector.
    ``witness`` is the lowest-id element below 1/2.
    """
    if isinstance(classifiers, SoftClassifier) or (
        isinstance(classifiers, np.ndarray) and classifiers.ndim == 1
    ):
        q = as_probs(classifiers)
    elif len(classifiers) > 0 and np.isscalar(classifiers[0]):
        q = as_probs(classifiers)
    else:
        q = compose_or(classifiers)
    low = np.flatnonzero(q < 0.5)
    return HeavyOrCheck(ok=low.size == 0, witness=int(low[0]) if low.size else None, probabilities=q)


@dataclass(frozen=True)
class HeavyOrGrouping:
    """Consecutive index groups; ``residual`` holds indices left over on failure."""

    groups: tuple[tuple[int, ...], ...]
    residual: tuple[int, ...]

    @property
    def ok(self) -> bool:
        return not self.residual

    def __bool__(self) -> bool:
        return self.ok


def group_into_heavy_ors(classifiers: Sequence[ClassifierLike], merge_tail: bool = False) -> HeavyOrGrouping:
    """Greedily cut the list into runs whose OR is heavy everywhere.

    Scanning left to right, a group closes as soon as its OR reaches 1/2 for
    every element.  A tail that never gets there is returned as ``residual``,
    unless ``merge_tail`` folds it into the last complete group (the OR only
    grows, so that group stays heavy).
    """
    P = _stack(classifiers)
    groups: list[tuple[int, ...]] = []
    current: list[int] = []
    miss = np.ones(P.shape[1])
    for i in range(P.shape[0]):
        current.append(i)
        miss = miss * (1.0 - P[i])
        if np.all(1.0 - miss >= 0.5):
            groups.append(tuple(current))
            current, miss = [], np.ones(P.shape[1])
    if current and merge_tail and groups:
        groups[-1] = groups[-1] + tuple(current)
        current = []
    return HeavyOrGrouping(tuple(groups), tuple(current))


# --------------------------------------------------------------------------
# Constructive counterexamples
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class CompositionWitness:
    """Fair base classifiers whose composition fails an audit.

    ``classifiers`` pass their own audits; ``composed`` is the composed
    probability vector and ``report`` its audit against ``metric``.
    """

    pair: tuple[int, int]
    classifiers: tuple[SoftClassifier, ...]
    composed: np.ndarray
    metric: TaskMetric
    report: FairnessReport

    @property
    def pair_excess(self) -> float:
        u, v = self.pair
        return float(abs(self.composed[u] - self.composed[v]) - self.metric(u, v))


def _fractional_pair(m: TaskMetric) -> tuple[int, int]:
    iu, iv = np.nonzero(np.triu((m.dist > 0) & (m.dist < 1), 1))
    if iu.size == 0:
        raise FairnessError("metric is trivial: no pair with distance strictly between 0 and 1")
    return int(iu[0]), int(iv[0])


def or_same_set_witness(
    m: TaskMetric, pair: tuple[int, int] | None = None, epsilon: float = DEFAULT_EPSILON
) -> CompositionWitness:
    """Two copies of one fair classifier whose OR breaks fairness.

    The pair is pushed to the full allowed gap with ``p_u = 0`` so
    ``p_u + p_v < 1``; the OR gap becomes ``D(2 - D) > D``.
    """
    u, v = pair if pair is not None else _fractional_pair(m)
    c = maximize_pair_distance(m, u, v)
    q = compose_or([c, c])
    return CompositionWitness((u, v), (c, c), q, m, audit_individual_fairness(m, q, epsilon))


def or_different_count_witness(
    m: TaskMetric, pair: tuple[int, int] | None = None, epsilon: float = DEFAULT_EPSILON
) -> CompositionWitness:
    """One fair classifier run once on ``u`` and twice on everyone else.

    With ``p_v - p_u = D(u, v)`` and ``0 < p_v < 1`` the extra attempt adds
    ``p_v (1 - p_v)`` to ``v``'s gap.
    """
    u, v = pair if pair is not None else _fractional_pair(m)
    c = maximize_pair_distance(m, u, v)
    applies = np.ones((2, m.size), dtype=bool)
    applies[1, u] = False
    q = compose_or([c, c], applies=applies)
    return CompositionWitness((u, v), (c, c), q, m, audit_individual_fairness(m, q, epsilon))


def and_unfairness_witness(
    m_first: TaskMetric,
    m_second: TaskMetric,
    m_outcome: TaskMetric,
    pair: tuple[int, int] | None = None,
    epsilon: float = DEFAULT_EPSILON,
) -> CompositionWitness:
    """Fair classifiers for two tasks whose AND is unfair under ``m_outcome``.

    Needs a pair with both task distances positive and no smaller than the
    outcome distance.  If the first task's distance is strictly larger, the
    second classifier is constant 1.  Otherwise both gaps are set to the
    shared distance with ``p'_u = 1`` and ``p_v > 0``, giving an AND gap of
    ``D (1 + p_v)``.
    """
    d1, d2, ds = m_first.dist, m_second.dist, m_outcome.dist
    if pair is None:
        ok = (d1 > 0) & (d2 > 0) & (ds <= d1) & (ds <= d2)
        # the equal-distance case needs room below 1
        ok &= (d1 > ds) | (d1 < 1)
        iu, iv = np.nonzero(np.triu(ok, 1))
        if iu.size == 0:
            raise FairnessError("no pair meets the hypotheses for an AND counterexample")
        pair = (int(iu[0]), int(iv[0]))
    u, v = pair
    a, b, s = d1[u, v], d2[u, v], ds[u, v]
    if a > s:
        # p_u - p_v = a > s and the second task passes everyone
        first = maximize_pair_distance(m_first, v, u)
        second = SoftClassifier(np.ones(m_first.size))
    else:
        first = maximize_pair_distance(m_first, v, u, low=(1.0 - a) / 2)
        # p'_u = 1, p'_v = 1 - b
        second = maximize_pair_distance(m_second, v, u, low=1.0 - b)
    q = compose_and([first, second])
    return CompositionWitness((u, v), (first, second), q, m_outcome, audit_individual_fairness(m_outcome, q, epsilon))
