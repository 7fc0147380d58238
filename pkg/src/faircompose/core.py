"""Universe, metrics, classifiers, outcomes and the two base auditors."""

from __future__ import annotations

from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field
from typing import Any, Hashable

import numpy as np

DEFAULT_EPSILON = 1e-9
_METRIC_TOL = 1e-12


class FairnessError(Exception):
    """Base class for package errors."""


class InvalidMetricError(FairnessError, ValueError):
    def __init__(self, violations: list[tuple]):
        self.violations = violations
        head = ", ".join(str(v) for v in violations[:5])
        more = f" (+{len(violations) - 5} more)" if len(violations) > 5 else ""
        super().__init__(f"invalid task metric: {head}{more}")


class InfeasibleError(FairnessError):
    """No fair solution exists for the requested problem instance."""


def _frozen(a: Any, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Universe:
    size: int
    labels: tuple[str, ...] | None = None

    def __post_init__(self):
        if self.size < 1:
            raise ValueError("universe must contain at least one element")
        if self.labels is not None and len(self.labels) != self.size:
            raise ValueError("one label per element required")

    @property
    def ids(self) -> np.ndarray:
        return np.arange(self.size)


@dataclass(frozen=True)
class MetricValidation:
    ok: bool
    violations: list[tuple] = field(default_factory=list)


def validate_metric(m: TaskMetric | np.ndarray | Sequence, tol: float = _METRIC_TOL) -> MetricValidation:
    """Check diagonal, range, symmetry and triangle inequality.

    Each violation is a tuple ``(kind, indices...)`` with kind one of
    ``"diagonal"``, ``"range"``, ``"symmetry"``, ``"triangle"``.  Symmetry and
    triangle violations are reported once per unordered index set.
    """
    d = np.asarray(m.dist if isinstance(m, TaskMetric) else m, dtype=float)
    if d.ndim != 2 or d.shape[0] != d.shape[1]:
        raise ValueError(f"metric must be square, got shape {d.shape}")
    n = d.shape[0]
    out: list[tuple] = []
    for u in np.flatnonzero(np.abs(np.diag(d)) > tol):
        out.append(("diagonal", int(u)))
    for u, v in zip(*np.nonzero((d < -tol) | (d > 1 + tol) | ~np.isfinite(d))):
        out.append(("range", int(u), int(v)))
    for u, v in zip(*np.nonzero(np.triu(np.abs(d - d.T) > tol, 1))):
        out.append(("symmetry", int(u), int(v)))
    # d[u, w] <= d[u, v] + d[v, w], one intermediate v at a time
    seen = set()
    for v in range(n):
        bad = d > d[:, v][:, None] + d[v][None, :] + tol
        for u, w in zip(*np.nonzero(bad)):
            key = (min(u, w), v, max(u, w))
            if u != w and key not in seen:
                seen.add(key)
                out.append(("triangle", int(key[0]), int(key[1]), int(key[2])))
    return MetricValidation(ok=not out, violations=out)


@dataclass(frozen=True, eq=False)
class TaskMetric:
    """Pairwise task-specific dissimilarity in [0, 1].

    Construction validates the pseudometric axioms including the triangle
    inequality and raises :class:`InvalidMetricError` on failure.
    """

    dist: np.ndarray

    def __post_init__(self):
        d = _frozen(self.dist)
        res = validate_metric(d)
        if not res.ok:
            raise InvalidMetricError(res.violations)
        object.__setattr__(self, "dist", d)

    @classmethod
    def _unchecked(cls, d: np.ndarray) -> TaskMetric:
        # for constructions that are metrics by design; skips the O(N^3) scan
        obj = object.__new__(cls)
        object.__setattr__(obj, "dist", _frozen(d))
        return obj

    @classmethod
    def abs_diff(cls, values: Sequence[float] | np.ndarray) -> TaskMetric:
        """``|q_u - q_v|``; the values must span an interval of length at most 1."""
        q = np.asarray(values, dtype=float)
        if q.ndim != 1 or not np.all(np.isfinite(q)):
            raise InvalidMetricError([("range",)])
        if q.size and q.max() - q.min() > 1 + _METRIC_TOL:
            raise InvalidMetricError([("range", int(q.argmin()), int(q.argmax()))])
        return cls._unchecked(np.abs(q[:, None] - q[None, :]))

    @classmethod
    def constant(cls, size: int, value: float = 1.0) -> TaskMetric:
        """Every distinct pair at ``value``."""
        if not 0.0 <= value <= 1.0:
            raise InvalidMetricError([("range",)])
        d = np.full((size, size), float(value))
        np.fill_diagonal(d, 0.0)
        return cls._unchecked(d)

    @property
    def size(self) -> int:
        return self.dist.shape[0]

    def __call__(self, u: int, v: int) -> float:
        return float(self.dist[u, v])

    def is_trivial(self) -> bool:
        return bool(np.all((self.dist == 0.0) | (self.dist == 1.0)))

    def restrict(self, ids: Sequence[int]) -> TaskMetric:
        ids = np.asarray(ids, dtype=int)
        return TaskMetric(self.dist[np.ix_(ids, ids)])


def _check_probs(p: np.ndarray, name: str = "probabilities") -> None:
    if p.ndim != 1:
        raise ValueError(f"{name} must be a vector")
    if np.any(~np.isfinite(p)) or np.any(p < 0) or np.any(p > 1):
        raise ValueError(f"{name} must lie in [0, 1]")


@dataclass(frozen=True, eq=False)
class SoftClassifier:
    """Per-element probability of a positive (``1``) outcome."""

    p: np.ndarray

    def __post_init__(self):
        p = _frozen(self.p)
        _check_probs(p)
        object.__setattr__(self, "p", p)

    @property
    def size(self) -> int:
        return self.p.shape[0]

    def __len__(self) -> int:
        return self.size

    def __getitem__(self, u):
        return self.p[u]

    def complement(self) -> SoftClassifier:
        return SoftClassifier(1.0 - self.p)

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        return rng.random(self.size) < self.p


def as_probs(x: SoftClassifier | np.ndarray | Sequence[float]) -> np.ndarray:
    if isinstance(x, SoftClassifier):
        return np.asarray(x.p)
    p = np.asarray(x, dtype=float)
    _check_probs(p)
    return p


@dataclass(frozen=True, eq=False)
class SystemOutcome:
    """``probs[u, i]`` = Pr[task ``i`` is positive for ``u``]."""

    probs: np.ndarray
    single_slot: bool = False

    def __post_init__(self):
        P = _frozen(self.probs)
        if P.ndim != 2:
            raise ValueError("outcome must be an N x k array")
        if np.any(P < -1e-12) or np.any(P > 1 + 1e-12):
            raise ValueError("outcome probabilities must lie in [0, 1]")
        if self.single_slot and np.any(P.sum(axis=1) > 1 + 1e-12):
            raise ValueError("single-slot outcome rows must sum to at most 1")
        object.__setattr__(self, "probs", P)

    @property
    def n_tasks(self) -> int:
        return self.probs.shape[1]

    def task(self, i: int) -> np.ndarray:
        return self.probs[:, i]


@dataclass(frozen=True, eq=False)
class GroupStructure:
    """Protected attribute and stratification labels for one task.

    ``indicators`` holds extra named 0/1 subgroup columns (e.g. ``parent``).
    """

    attribute: np.ndarray
    stratum: np.ndarray
    indicators: Mapping[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        a = _frozen(self.attribute, dtype=object)
        z = _frozen(self.stratum, dtype=object)
        if a.shape != z.shape or a.ndim != 1:
            raise ValueError("attribute and stratum must be equal-length vectors")
        ind = {}
        for k, v in dict(self.indicators).items():
            col = _frozen(v, dtype=bool)
            if col.shape != a.shape:
                raise ValueError(f"indicator {k!r} has wrong length")
            ind[k] = col
        object.__setattr__(self, "attribute", a)
        object.__setattr__(self, "stratum", z)
        object.__setattr__(self, "indicators", ind)

    @property
    def size(self) -> int:
        return self.attribute.shape[0]

    def refine(self, indicator: str) -> GroupStructure:
        """Attribute set extended by one subgroup indicator column."""
        col = self.indicators[indicator]
        a = np.empty(self.size, dtype=object)
        for i in range(self.size):
            a[i] = (self.attribute[i], bool(col[i]))
        return GroupStructure(a, self.stratum, self.indicators)

    def cells(self) -> dict[Hashable, dict[Hashable, np.ndarray]]:
        """``{z: {a: member ids}}`` in first-appearance order."""
        out: dict[Hashable, dict[Hashable, list[int]]] = {}
        for i, (a, z) in enumerate(zip(self.attribute, self.stratum)):
            out.setdefault(z, {}).setdefault(a, []).append(i)
        return {z: {a: np.array(ids) for a, ids in cell.items()} for z, cell in out.items()}


@dataclass(frozen=True)
class Violation:
    key: tuple
    observed: float
    allowed: float

    @property
    def excess(self) -> float:
        return self.observed - self.allowed


@dataclass(frozen=True)
class FairnessReport:
    """Violations found by an audit plus aggregates over all comparisons."""

    violations: tuple[Violation, ...]
    n_compared: int
    epsilon: float
    skipped: tuple[tuple, ...] = ()

    @property
    def fraction_violating(self) -> float:
        return len(self.violations) / self.n_compared if self.n_compared else 0.0

    @property
    def mean_excess(self) -> float:
        if not self.violations:
            return 0.0
        return float(np.mean([v.excess for v in self.violations]))

    @property
    def max_excess(self) -> float:
        if not self.violations:
            return 0.0
        return max(v.excess for v in self.violations)

    @property
    def is_fair(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:  # truthy when violations exist
        return bool(self.violations)

    def summary(self) -> str:
        if not self.violations:
            return f"no violations in {self.n_compared} comparisons (eps={self.epsilon:g})"
        return (
            f"{len(self.violations)}/{self.n_compared} violating "
            f"({100 * self.fraction_violating:.1f}%), mean excess {self.mean_excess:.4g}, "
            f"max excess {self.max_excess:.4g}"
        )


def pairwise_excess(dist: np.ndarray, q: np.ndarray) -> np.ndarray:
    """``|q_u - q_v| - dist(u, v)`` as a full matrix."""
    return np.abs(q[:, None] - q[None, :]) - dist


def audit_individual_fairness(
    m: TaskMetric,
    q: SoftClassifier | np.ndarray | Sequence[float],
    epsilon: float = DEFAULT_EPSILON,
    ids: Sequence[int] | None = None,
) -> FairnessReport:
    """List every pair with ``|q_u - q_v| - D(u, v) > epsilon``.

    ``ids`` restricts the audit to a subset of the universe (subset
    individual fairness); pair keys always use universe ids.
    """
    q = as_probs(q)
    if q.shape[0] != m.size:
        raise ValueError(f"classifier has {q.shape[0]} entries, metric has {m.size}")
    idx = np.arange(m.size) if ids is None else np.asarray(sorted(set(int(i) for i in ids)), dtype=int)
    d = m.dist[np.ix_(idx, idx)]
    qq = q[idx]
    gap = np.abs(qq[:, None] - qq[None, :])
    iu, iv = np.triu_indices(idx.size, 1)
    bad = np.flatnonzero(gap[iu, iv] - d[iu, iv] > epsilon)
    viol = tuple(
        Violation((int(idx[iu[k]]), int(idx[iv[k]])), float(gap[iu[k], iv[k]]), float(d[iu[k], iv[k]]))
        for k in bad
    )
    return FairnessReport(viol, n_compared=iu.size, epsilon=epsilon)


def audit_conditional_parity(
    g: GroupStructure,
    q: SoftClassifier | np.ndarray | Sequence[float],
    epsilon: float = DEFAULT_EPSILON,
) -> FairnessReport:
    """Compare unweighted group means of ``q`` across attribute values per stratum.

    Violation keys are ``(z, a1, a2)``.  Strata with fewer than two non-empty
    attribute cells are recorded in ``skipped`` rather than silently dropped.
    """
    q = as_probs(q)
    if q.shape[0] != g.size:
        raise ValueError("classifier and group structure sizes differ")
    viol: list[Violation] = []
    skipped: list[tuple] = []
    compared = 0
    for z, cell in g.cells().items():
        attrs = list(cell)
        if len(attrs) < 2:
            skipped.append((z, "fewer than two attribute values present"))
            continue
        means = {a: float(q[ids].mean()) for a, ids in cell.items()}
        for i in range(len(attrs)):
            for j in range(i + 1, len(attrs)):
                compared += 1
                gap = abs(means[attrs[i]] - means[attrs[j]])
                if gap > epsilon:
                    viol.append(Violation((z, attrs[i], attrs[j]), gap, 0.0))
    return FairnessReport(tuple(viol), n_compared=compared, epsilon=epsilon, skipped=tuple(skipped))


def group_means(g: GroupStructure, q: np.ndarray) -> dict[Hashable, dict[Hashable, float]]:
    q = as_probs(q)
    return {z: {a: float(q[ids].mean()) for a, ids in cell.items()} for z, cell in g.cells().items()}
