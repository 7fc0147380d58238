"""Single-slot composition of classifiers for competing tasks.

Each element is classified independently for every task; when several tasks
come back positive a tie-breaker picks one.  Outcomes are computed exactly by
enumerating the ``2**k`` joint classification patterns per element.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from . import kernels
from .construct import build_fair_classifier
from .core import (
    DEFAULT_EPSILON,
    FairnessError,
    FairnessReport,
    SoftClassifier,
    SystemOutcome,
    TaskMetric,
    as_probs,
    audit_individual_fairness,
)

MAX_TASKS = 20
# witness searches always include these so the per-pair optimum is exact
_WITNESS_ANCHORS = (0.0, 1.0)


@dataclass(frozen=True, eq=False)
class TieBreaker:
    """Per-element rule for choosing one task among several positives.

    Build with :meth:`strict_order`, :meth:`uniform`, :meth:`two_task_value`
    or :meth:`from_table`.  For ``k > 2`` only strict orders, the uniform
    rule and explicit tables are available.
    """

    kind: str
    k: int
    order: np.ndarray | None = None
    rho: np.ndarray | float | None = None
    table: np.ndarray | None = None

    @classmethod
    def strict_order(cls, order: Sequence[int] | np.ndarray) -> TieBreaker:
        """Most-preferred task first.

        A length-``k`` sequence applies to every element; an ``(N, k)`` array
        gives each element its own ranking.
        """
        o = np.array(order, dtype=np.int64)
        k = o.shape[-1]
        rows = o.reshape(-1, k)
        for r in rows:
            if sorted(r.tolist()) != list(range(k)):
                raise ValueError("each ranking must be a permutation of task indices")
        return cls("strict", k, order=o)

    @classmethod
    def uniform(cls, k: int) -> TieBreaker:
        return cls("uniform", int(k))

    @classmethod
    def two_task_value(cls, rho: float | Sequence[float] | np.ndarray) -> TieBreaker:
        """``rho[u]`` = Pr[task 0 chosen | both tasks positive for ``u``]."""
        r = np.array(rho, dtype=float)
        if np.any((r < 0) | (r > 1)):
            raise ValueError("rho must lie in [0, 1]")
        return cls("rho", 2, rho=r)

    @classmethod
    def from_table(cls, table: np.ndarray) -> TieBreaker:
        """``table[u, mask, i]`` = Pr[task ``i`` chosen | positive set ``mask``]."""
        t = np.array(table, dtype=float)
        if t.ndim != 3 or t.shape[1] != 1 << t.shape[2]:
            raise ValueError("table must have shape (N, 2**k, k)")
        k = t.shape[2]
        for m in range(1 << k):
            bits = np.array([(m >> j) & 1 for j in range(k)], dtype=bool)
            row = t[:, m, :]
            if np.any(row < -1e-12) or np.any(row[:, ~bits] > 1e-12):
                raise ValueError(f"mask {m}: mass on a task that was not positive")
            want = 0.0 if m == 0 else 1.0
            if not np.allclose(row.sum(axis=1), want, atol=1e-12):
                raise ValueError(f"mask {m}: probabilities must sum to {want}")
        return cls("table", k, table=t)

    def orders(self, n: int) -> np.ndarray:
        if self.kind != "strict":
            return np.zeros((n, self.k), dtype=np.int64)
        o = self.order
        return np.ascontiguousarray(np.broadcast_to(o, (n, self.k)) if o.ndim == 1 else o, dtype=np.int64)

    def rhos(self, n: int) -> np.ndarray:
        if self.kind != "rho":
            return np.zeros(n)
        return np.ascontiguousarray(np.broadcast_to(self.rho, (n,)), dtype=float)

    def as_table(self, n: int) -> np.ndarray:
        """Dense ``(N, 2**k, k)`` form of any tie-breaker."""
        if self.kind == "table":
            return self.table
        k = self.k
        t = np.zeros((n, 1 << k, k))
        orders, rhos = self.orders(n), self.rhos(n)
        for m in range(1, 1 << k):
            bits = np.array([(m >> j) & 1 for j in range(k)], dtype=bool)
            if self.kind == "strict":
                first = orders[np.arange(n), bits[orders].argmax(axis=1)]
                t[np.arange(n), m, first] = 1.0
            elif self.kind == "uniform":
                t[:, m, bits] = 1.0 / bits.sum()
            elif m == 3:
                t[:, m, 0], t[:, m, 1] = rhos, 1.0 - rhos
            else:
                t[:, m, bits] = 1.0
        return t

    def distribution(self, u: int, mask: int, n: int | None = None) -> np.ndarray:
        """Choice probabilities over tasks for element ``u`` given ``mask``."""
        size = n if n is not None else u + 1
        return self.as_table(size)[u, mask]

    def both_positive_share(self, n: int) -> np.ndarray:
        """Two-task case: Pr[task 0 | both positive] per element."""
        if self.k != 2:
            raise ValueError("defined for two tasks only")
        return self.as_table(n)[:, 3, 0]


def _task_matrix(classifiers: Sequence[SoftClassifier | np.ndarray]) -> np.ndarray:
    if len(classifiers) == 0:
        raise ValueError("at least one classifier is required")
    cols = [as_probs(c) for c in classifiers]
    n = cols[0].shape[0]
    if any(c.shape[0] != n for c in cols):
        raise ValueError("classifiers have different lengths")
    return np.ascontiguousarray(np.column_stack(cols))


_RULES = {"strict": kernels.RULE_STRICT, "uniform": kernels.RULE_UNIFORM, "rho": kernels.RULE_RHO}


def compose_competitive(
    classifiers: Sequence[SoftClassifier | np.ndarray], tb: TieBreaker
) -> SystemOutcome:
    """Exact per-task positive probabilities after tie-breaking."""
    P = _task_matrix(classifiers)
    n, k = P.shape
    if k != tb.k:
        raise ValueError(f"tie-breaker is for {tb.k} tasks, got {k} classifiers")
    if k > MAX_TASKS:
        raise ValueError(f"at most {MAX_TASKS} tasks can be enumerated exactly")
    if tb.kind == "table":
        table = tb.table
        if table.shape[0] != n:
            raise ValueError("tie-break table has the wrong number of elements")
        out = np.zeros((n, k))
        for m in range(1, 1 << k):
            bits = np.array([(m >> j) & 1 for j in range(k)], dtype=bool)
            w = np.where(bits, P, 1.0 - P).prod(axis=1)
            out += w[:, None] * table[:, m, :]
    else:
        out = kernels.competitive(P, _RULES[tb.kind], tb.orders(n), tb.rhos(n))
    return SystemOutcome(np.clip(out, 0.0, 1.0), single_slot=True)


def _task_distribution(x: Sequence[float] | np.ndarray, k: int) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape != (k,):
        raise ValueError(f"task distribution must have {k} entries")
    if np.any(x < 0) or abs(x.sum() - 1.0) > 1e-12:
        raise ValueError("task distribution must be nonnegative and sum to 1")
    return x


def randomize_then_classify(
    classifiers: Sequence[SoftClassifier | np.ndarray], x: Sequence[float] | np.ndarray
) -> SystemOutcome:
    """Pick one task per element at random from ``x``, then classify only for it.

    ``probs[u, i] = x[i] * p_i[u]``.  Each column is a nonnegative scaling of
    a fair classifier, so per-task fairness and orderings carry over.
    """
    P = _task_matrix(classifiers)
    return SystemOutcome(P * _task_distribution(x, P.shape[1])[None, :], single_slot=True)


def boosted(c: SoftClassifier | np.ndarray, boost: float) -> SoftClassifier:
    """Add ``boost`` to every probability, capped at 1.

    Shifting all entries equally (then capping) never widens a gap, so a
    fair input stays fair.
    """
    return SoftClassifier(np.minimum(as_probs(c) + boost, 1.0))


def allocation(outcome: SystemOutcome | np.ndarray) -> np.ndarray:
    """Expected number of positives per task."""
    P = outcome.probs if isinstance(outcome, SystemOutcome) else np.asarray(outcome, dtype=float)
    return P.sum(axis=0)


def utility_loss(
    baseline: Sequence[SoftClassifier | np.ndarray],
    outcome: SystemOutcome,
    utilities: Sequence[np.ndarray],
) -> np.ndarray:
    """Per-task fractional drop in ``sum(utility * p)`` relative to ``baseline``."""
    P = _task_matrix(baseline)
    out = np.empty(P.shape[1])
    for i, q in enumerate(utilities):
        base = float(np.dot(q, P[:, i]))
        out[i] = 1.0 - float(np.dot(q, outcome.task(i))) / base if base > 0 else 0.0
    return out


def audit_multiple_task_fairness(
    metrics: Sequence[TaskMetric], so: SystemOutcome, epsilon: float = DEFAULT_EPSILON
) -> list[FairnessReport]:
    """One individual-fairness report per task column."""
    if len(metrics) != so.n_tasks:
        raise ValueError(f"{len(metrics)} metrics for {so.n_tasks} tasks")
    return [audit_individual_fairness(m, so.task(i), epsilon) for i, m in enumerate(metrics)]


@dataclass(frozen=True)
class ViolationWitness:
    """Best two-task counterexample found by :func:`find_violation_witness`."""

    pair: tuple[int, int]
    classifiers: tuple[SoftClassifier, SoftClassifier]
    outcome: SystemOutcome
    reports: tuple[FairnessReport, FairnessReport]
    excess: float
    pair_probs: tuple[float, float, float, float]

    @property
    def violates(self) -> bool:
        return any(r.violations for r in self.reports)


def _axis_candidates(d: float, resolution: float | None) -> np.ndarray:
    # vertices of {|a - b| <= d} within the unit square project onto these
    vals = {*_WITNESS_ANCHORS, d, 1.0 - d}
    if resolution is not None:
        steps = int(round(1.0 / resolution))
        vals.update(np.round(np.linspace(0.0, 1.0, steps + 1), 12).tolist())
    return np.array(sorted(v for v in vals if 0.0 <= v <= 1.0))


_TASK_CODES = {"first": 0, "second": 1, "any": 2}


def find_violation_witness(
    metrics: Sequence[TaskMetric],
    tb: TieBreaker,
    resolution: float | None = None,
    pairs: Sequence[tuple[int, int]] | None = None,
    max_pairs: int | None = None,
    task: str = "any",
    epsilon: float = DEFAULT_EPSILON,
) -> ViolationWitness:
    """Search for fair classifiers whose competitive composition is unfair.

    For each candidate pair ``(u, v)`` the four probabilities
    ``p_u, p_v, p'_u, p'_v`` are searched over values respecting both
    pairwise constraints; the rest of each classifier is then filled in
    fairly.  The audit excess is convex in each classifier's pair, so its
    maximum sits on the vertices of the feasible squares; those are always
    included, and ``resolution`` adds a regular grid on top.  ``task``
    picks which task's excess to maximise.  Ties go to the earliest pair and
    lexicographically smallest parameters.
    """
    if len(metrics) != 2 or tb.k != 2:
        raise ValueError("witness search is defined for two tasks")
    m1, m2 = metrics
    if m1.size != m2.size:
        raise ValueError("metrics cover different universes")
    if m1.is_trivial() or m2.is_trivial():
        raise FairnessError("both metrics must be nontrivial")
    n = m1.size
    share = tb.both_positive_share(n)
    if pairs is None:
        iu, iv = np.triu_indices(n, 1)
        pairs = list(zip(iu.tolist(), iv.tolist()))
    if max_pairs is not None:
        pairs = pairs[:max_pairs]
    code = _TASK_CODES[task]
    best_obj, best = -np.inf, None
    for u, v in pairs:
        d1, d2 = m1(u, v), m2(u, v)
        res = kernels.witness(
            d1, d2, share[u], share[v], _axis_candidates(d1, resolution), _axis_candidates(d2, resolution), code
        )
        if res[0] > best_obj:
            best_obj, best = res[0], (u, v, res[1:].copy())
    u, v, (pu, pv, qu, qv) = best
    order = np.array([u, v, *[i for i in range(n) if i not in (u, v)]], dtype=np.int64)
    c1 = build_fair_classifier(m1, partial={u: pu, v: pv}, order=order)
    c2 = build_fair_classifier(m2, partial={u: qu, v: qv}, order=order)
    so = compose_competitive([c1, c2], tb)
    reports = audit_multiple_task_fairness([m1, m2], so, epsilon)
    return ViolationWitness((u, v), (c1, c2), so, tuple(reports), float(best_obj), (pu, pv, qu, qv))
