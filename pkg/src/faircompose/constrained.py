"""Cohort selection with a group quota, and classification on random subsets.

Quota feasibility rests on a matching argument: if every element of ``B``
can be paired with an element of ``A`` at distance at most ``gamma`` (with
each ``A`` element used equally often), fair selection rates of the two
groups can differ by at most ``gamma`` on average.
"""

from __future__ import annotations

import math
import warnings
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import maximum_flow

from ._util import SeedLike, as_rng, largest_remainder
from .cohort import SelectionEstimate, permute_then_classify, ptc_selection_probability
from .construct import build_fair_classifier
from .core import (
    DEFAULT_EPSILON,
    FairnessError,
    FairnessReport,
    InfeasibleError,
    SoftClassifier,
    TaskMetric,
    as_probs,
    audit_individual_fairness,
)

# --------------------------------------------------------------------------
# Quota feasibility
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class FeasibilityReport:
    """Outcome of :func:`check_constrained_feasibility`.

    ``feasible`` is ``None`` when no quota fraction was given; ``p_max`` is
    the largest quota fraction the bound allows.
    """

    feasible: bool | None
    slack: float
    p_max: float
    p: float | None = None
    mean_a_lower: float | None = None
    mean_b_upper: float | None = None

    @property
    def gap(self) -> float | None:
        if self.mean_a_lower is None:
            return None
        return self.mean_a_lower - self.mean_b_upper

    def summary(self) -> str:
        head = f"slack={self.slack:.6g}, p_max={self.p_max:.6g}"
        if self.feasible is None:
            return head
        verdict = "feasible" if self.feasible else "INFEASIBLE"
        return f"{verdict}: required rate gap {self.gap:.6g} vs {head}"


def check_constrained_feasibility(
    size_a: int,
    size_b: int,
    n: int,
    p: float | None,
    parts: Sequence[tuple[float, float]],
) -> FeasibilityReport:
    """Necessary condition for a fair cohort with at least ``p * n`` from ``A``.

    ``parts`` lists ``(beta_i, gamma_i)``: the fraction of ``B`` in part ``i``
    and the matching radius of that part.  A fair mechanism needs the mean
    selection rate of ``A`` (at least ``p n / |A|``) to exceed that of ``B``
    (at most ``(1 - p) n / |B|``) by no more than ``sum beta_i gamma_i``.
    """
    if size_a < 1 or size_b < 1:
        raise ValueError("both groups must be nonempty")
    if not 1 <= n <= size_a + size_b:
        raise ValueError("cohort size out of range")
    betas = np.array([b for b, _ in parts], dtype=float)
    gammas = np.array([g for _, g in parts], dtype=float)
    if betas.size == 0 or abs(betas.sum() - 1.0) > 1e-9:
        raise ValueError("part fractions must sum to 1")
    if np.any(betas < 0) or np.any((gammas < 0) | (gammas > 1)):
        raise ValueError("part fractions must be nonnegative and radii in [0, 1]")
    slack = float(np.dot(betas, gammas))
    p_max = (n + size_b * slack) / ((size_b / size_a + 1.0) * n)
    if p is None:
        return FeasibilityReport(None, slack, p_max)
    if not 0.0 <= p <= 1.0:
        raise ValueError("p must lie in [0, 1]")
    if p * n > size_a + 1e-12:
        raise InfeasibleError(f"quota needs {p * n:g} members of A but A has {size_a}")
    if (1.0 - p) * n > size_b + 1e-12:
        raise InfeasibleError(f"quota leaves {(1 - p) * n:g} places for B but B has {size_b}")
    lo_a = p * n / size_a
    hi_b = (1.0 - p) * n / size_b
    return FeasibilityReport(lo_a - hi_b <= slack, slack, p_max, p, lo_a, hi_b)


# --------------------------------------------------------------------------
# Matching witnesses
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class GammaPart:
    """One part of ``B`` with its matching to ``A``.

    ``edges`` are ``(a, b)`` pairs with multiplicity: after duplicating each
    ``b`` ``copies_b`` times, every ``a`` receives ``degree`` copies and
    every copy is matched once.
    """

    members: tuple[int, ...]
    gamma: float
    beta: float
    edges: tuple[tuple[int, int], ...]
    degree: int
    copies_b: int


@dataclass(frozen=True)
class GammaPartition:
    a: tuple[int, ...]
    b: tuple[int, ...]
    parts: tuple[GammaPart, ...]

    @property
    def slack(self) -> float:
        return float(sum(p.beta * p.gamma for p in self.parts))

    def as_pairs(self) -> list[tuple[float, float]]:
        return [(p.beta, p.gamma) for p in self.parts]

    def check(self, m: TaskMetric, tol: float = 1e-12) -> list[str]:
        """Invariant violations (empty when the witness is valid)."""
        problems = []
        covered = sorted(x for p in self.parts for x in p.members)
        if covered != sorted(self.b):
            problems.append("parts do not partition B")
        if abs(sum(p.beta for p in self.parts) - 1.0) > 1e-9:
            problems.append("part fractions do not sum to 1")
        for i, p in enumerate(self.parts):
            out_deg: dict[int, int] = {}
            in_deg: dict[int, int] = {}
            for a, b in p.edges:
                if m(a, b) > p.gamma + tol:
                    problems.append(f"part {i}: edge ({a}, {b}) longer than gamma")
                out_deg[a] = out_deg.get(a, 0) + 1
                in_deg[b] = in_deg.get(b, 0) + 1
            if set(out_deg) != set(self.a) or set(out_deg.values()) != {p.degree}:
                problems.append(f"part {i}: A out-degrees not all {p.degree}")
            if set(in_deg) != set(p.members) or set(in_deg.values()) != {p.copies_b}:
                problems.append(f"part {i}: B copies not each matched once")
        return problems


def _flow_at(sub: np.ndarray, radius: float, degree: int, copies_b: int):
    """Max flow source -> A (cap degree) -> B (edges within radius) -> sink (cap copies_b)."""
    na, nb = sub.shape
    src, sink = na + nb, na + nb + 1
    ai, bj = np.nonzero(sub <= radius)
    rows = np.concatenate([np.full(na, src), ai, na + np.arange(nb)])
    cols = np.concatenate([np.arange(na), na + bj, np.full(nb, sink)])
    caps = np.concatenate([np.full(na, degree), np.full(ai.size, copies_b), np.full(nb, copies_b)])
    graph = csr_matrix((caps.astype(np.int32), (rows, cols)), shape=(na + nb + 2, na + nb + 2))
    return maximum_flow(graph, src, sink)


def _match_part(dist: np.ndarray, a: np.ndarray, members: np.ndarray, beta: float) -> GammaPart:
    """Matching of ``copies_b`` copies of each member onto ``A`` with the smallest longest edge.

    Binary search over candidate radii; each probe is a max-flow feasibility check.
    """
    g = math.gcd(a.size, members.size)
    copies_b = a.size // g
    degree = members.size // g
    sub = dist[np.ix_(a, members)]
    radii = np.unique(sub)
    target = a.size * degree
    lo, hi = 0, radii.size - 1
    while lo < hi:
        mid = (lo + hi) // 2
        if _flow_at(sub, radii[mid], degree, copies_b).flow_value == target:
            hi = mid
        else:
            lo = mid + 1
    flow = _flow_at(sub, radii[lo], degree, copies_b).flow.tocoo()
    na = a.size
    edges: list[tuple[int, int]] = []
    for r, c, f in sorted(zip(flow.row.tolist(), flow.col.tolist(), flow.data.tolist())):
        if r < na and na <= c < na + members.size and f > 0:
            edges.extend([(int(a[r]), int(members[c - na]))] * int(f))
    gamma = max(float(dist[x, y]) for x, y in edges)
    return GammaPart(tuple(int(y) for y in members), gamma, beta, tuple(edges), degree, copies_b)


def estimate_gamma_partition(
    m: TaskMetric,
    a: Sequence[int],
    b: Sequence[int],
    bin_edges: Sequence[float] | None = None,
) -> GammaPartition:
    """Build a matching witness that bounds how far ``B`` sits from ``A``.

    Elements of ``B`` are grouped by their distance to the nearest element
    of ``A``: by deciles of those distances when ``bin_edges`` is ``None``,
    by the given cut points otherwise, or into one part when ``bin_edges``
    is empty.  Within each part, copies are made so that ``|B_i|`` copies
    can be spread evenly over ``A``, and copies are assigned so that the
    longest edge used, ``gamma_i``, is as short as possible.
    """
    a_ids = np.array(sorted(set(int(x) for x in a)), dtype=int)
    b_ids = np.array(sorted(set(int(x) for x in b)), dtype=int)
    if a_ids.size == 0 or b_ids.size == 0:
        raise ValueError("A and B must be nonempty")
    if np.intersect1d(a_ids, b_ids).size:
        raise ValueError("A and B must be disjoint")
    dist = m.dist
    # rounding merges distances that differ only by float noise
    nearest = np.round(dist[np.ix_(b_ids, a_ids)].min(axis=1), 12)
    if bin_edges is None:
        cuts = np.unique(np.quantile(nearest, np.linspace(0.1, 0.9, 9)))
    else:
        cuts = np.unique(np.asarray(bin_edges, dtype=float))
    labels = np.searchsorted(cuts, nearest, side="left")
    parts = []
    for lab in np.unique(labels):
        members = b_ids[labels == lab]
        parts.append(_match_part(dist, a_ids, members, members.size / b_ids.size))
    return GammaPartition(tuple(a_ids.tolist()), tuple(b_ids.tolist()), tuple(parts))


# --------------------------------------------------------------------------
# Per-group selection
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class IntragroupCohort:
    """Selection from running the scan on each group separately.

    Pairs inside ``A`` and pairs inside ``B`` are treated fairly; pairs
    straddling the groups are not protected.
    """

    selected: np.ndarray
    n_a: int
    n_b: int
    intra_group_fair: bool = True
    universally_fair: bool = False


def _group_quotas(size_a: int, size_b: int, n: int, p: float) -> tuple[int, int]:
    q = largest_remainder({"a": p, "b": 1.0 - p}, n) if 0 < p < 1 else {"a": n if p >= 1 else 0, "b": n if p <= 0 else 0}
    if q["a"] > size_a or q["b"] > size_b:
        raise InfeasibleError(f"quotas {q['a']}/{q['b']} exceed group sizes {size_a}/{size_b}")
    return q["a"], q["b"]


def intragroup_ptc(
    c: SoftClassifier | np.ndarray,
    a: Sequence[int],
    b: Sequence[int],
    n: int,
    p: float,
    rng: SeedLike = None,
) -> IntragroupCohort:
    """``round(p n)`` from ``A`` and the rest from ``B``, each by the scan."""
    probs = as_probs(c)
    a_ids, b_ids = np.asarray(a, dtype=int), np.asarray(b, dtype=int)
    n_a, n_b = _group_quotas(a_ids.size, b_ids.size, n, p)
    gen = as_rng(rng)
    picked = []
    for ids, k in ((a_ids, n_a), (b_ids, n_b)):
        if k > 0:
            picked.append(ids[permute_then_classify(probs[ids], k, gen)])
    sel = np.sort(np.concatenate(picked)) if picked else np.array([], dtype=int)
    return IntragroupCohort(sel.astype(np.int64), n_a, n_b)


def intragroup_selection_probability(
    c: SoftClassifier | np.ndarray, a: Sequence[int], b: Sequence[int], n: int, p: float
) -> np.ndarray:
    """Exact per-element selection probability of :func:`intragroup_ptc`."""
    probs = as_probs(c)
    a_ids, b_ids = np.asarray(a, dtype=int), np.asarray(b, dtype=int)
    n_a, n_b = _group_quotas(a_ids.size, b_ids.size, n, p)
    out = np.zeros(probs.size)
    for ids, k in ((a_ids, n_a), (b_ids, n_b)):
        if k > 0:
            out[ids] = ptc_selection_probability(probs[ids], k).probs
    return out


# --------------------------------------------------------------------------
# Universe subsets
# --------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SubsetDistribution:
    """Distribution over which elements reach the classifier.

    Use :meth:`full`, :meth:`explicit` or :meth:`independent`.
    """

    size: int
    kind: str
    subsets: tuple[tuple[int, ...], ...] = ()
    probs: np.ndarray | None = None
    weights: np.ndarray | None = None

    @classmethod
    def full(cls, size: int) -> SubsetDistribution:
        return cls(size, "full")

    @classmethod
    def explicit(cls, size: int, support: Sequence[tuple[Sequence[int], float]]) -> SubsetDistribution:
        subsets = tuple(tuple(sorted(int(x) for x in s)) for s, _ in support)
        pr = np.array([w for _, w in support], dtype=float)
        if np.any(pr < 0) or abs(pr.sum() - 1.0) > 1e-9:
            raise ValueError("subset probabilities must be nonnegative and sum to 1")
        if any(x < 0 or x >= size for s in subsets for x in s):
            raise ValueError("subset contains an id outside the universe")
        return cls(size, "explicit", subsets, pr)

    @classmethod
    def independent(cls, weights: Sequence[float] | np.ndarray) -> SubsetDistribution:
        w = np.array(weights, dtype=float)
        if np.any((w < 0) | (w > 1)):
            raise ValueError("inclusion weights must lie in [0, 1]")
        return cls(w.size, "independent", weights=w)

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        if self.kind == "full":
            return np.arange(self.size)
        if self.kind == "explicit":
            return np.array(self.subsets[rng.choice(len(self.subsets), p=self.probs)], dtype=int)
        return np.flatnonzero(rng.random(self.size) < self.weights)

    def inclusion_probabilities(self) -> np.ndarray:
        if self.kind == "full":
            return np.ones(self.size)
        if self.kind == "independent":
            return self.weights.copy()
        out = np.zeros(self.size)
        for s, w in zip(self.subsets, self.probs):
            out[list(s)] += w
        return out

    def support(self) -> list[tuple[np.ndarray, float]]:
        """Enumerated ``(subset, probability)``; not available for independent inclusion."""
        if self.kind == "full":
            return [(np.arange(self.size), 1.0)]
        if self.kind == "explicit":
            return [(np.array(s, dtype=int), float(w)) for s, w in zip(self.subsets, self.probs)]
        raise ValueError("independent inclusion has no compact support listing")

    def describe(self) -> str:
        if self.kind == "independent":
            return f"independent(weights={np.round(self.weights, 6).tolist()})"
        if self.kind == "explicit":
            return f"explicit({len(self.subsets)} subsets)"
        return f"full({self.size})"


@dataclass(frozen=True, eq=False)
class OrderingDistribution:
    """How the drawn subset is ordered before the system sees it."""

    kind: str = "uniform"
    permutation: np.ndarray | None = None
    generator: Callable[[np.ndarray, np.random.Generator], Sequence[int]] | None = None

    @classmethod
    def uniform(cls) -> OrderingDistribution:
        return cls("uniform")

    @classmethod
    def fixed(cls, permutation: Sequence[int]) -> OrderingDistribution:
        """Universe-wide ranking; a subset keeps the ranking's relative order."""
        return cls("fixed", permutation=np.asarray(permutation, dtype=int))

    @classmethod
    def adversary(cls, fn: Callable[[np.ndarray, np.random.Generator], Sequence[int]]) -> OrderingDistribution:
        return cls("adversary", generator=fn)

    def order(self, subset: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        if self.kind == "uniform":
            return rng.permutation(subset)
        if self.kind == "fixed":
            rank = np.empty(self.permutation.size, dtype=int)
            rank[self.permutation] = np.arange(self.permutation.size)
            return subset[np.argsort(rank[subset], kind="stable")]
        out = np.asarray(self.generator(subset, rng), dtype=int)
        if sorted(out.tolist()) != sorted(subset.tolist()):
            raise ValueError("adversary must return a permutation of the subset")
        return out


System = Callable[[np.ndarray, np.random.Generator], Sequence[int]]


def independent_system(c: SoftClassifier | np.ndarray) -> System:
    """Classify each presented element on its own coin."""
    p = as_probs(c)

    def run(ordered: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        return ordered[rng.random(ordered.size) < p[ordered]]

    return run


def run_subset_experiment(
    system: System,
    y: SubsetDistribution,
    x: OrderingDistribution,
    u: int,
    trials: int = 10_000,
    seed: SeedLike = 0,
    conditional: Callable[[np.ndarray], np.ndarray] | None = None,
) -> SelectionEstimate:
    """Estimate Pr[``u`` ends up selected].

    Each trial draws the subset, then its ordering, then runs ``system``
    with fresh randomness; ``u`` counts as negative when not drawn.  When
    ``conditional`` is given (subset -> per-element selection probability)
    and ``y`` can be enumerated, the result is exact instead.
    """
    if conditional is not None and y.kind != "independent":
        total = 0.0
        for subset, w in y.support():
            if u in subset:
                total += w * float(np.asarray(conditional(subset))[u])
        return SelectionEstimate(np.array([total]), np.zeros(1), None, "exact")
    gen = as_rng(seed)
    hits = 0
    for _ in range(trials):
        subset = y.sample(gen)
        if u not in subset:
            continue
        ordered = x.order(subset, gen)
        if u in set(int(s) for s in system(ordered, gen)):
            hits += 1
    est = hits / trials
    return SelectionEstimate(np.array([est]), np.array([math.sqrt(est * (1 - est) / trials)]), trials, "montecarlo")


class ContextualFairnessWarning(UserWarning):
    """A rescaled classifier is being judged under a subset distribution it was not built for."""


@dataclass(frozen=True, eq=False)
class RescaledClassifier:
    """Classifier thinned so every element is effectively seen equally often.

    An element that is present is classified normally with probability
    ``keep[w] = q_min / q_w`` and otherwise gets the negative default.
    Under the assumed inclusion weights each element's overall positive
    rate is ``q_min * p_w``.
    """

    base: SoftClassifier
    inclusion: np.ndarray
    assumed: str = field(default="")

    @property
    def keep(self) -> np.ndarray:
        return self.inclusion.min() / self.inclusion

    @property
    def accept(self) -> np.ndarray:
        """Pr[positive | present]."""
        return self.keep * self.base.p

    def effective(self, inclusion: np.ndarray | None = None) -> np.ndarray:
        """Overall positive rate given inclusion probabilities (default: assumed)."""
        q = self.inclusion if inclusion is None else np.asarray(inclusion, dtype=float)
        return q * self.accept

    def system(self) -> System:
        return independent_system(self.accept)

    def audit(
        self, m: TaskMetric, y: SubsetDistribution | None = None, epsilon: float = DEFAULT_EPSILON
    ) -> FairnessReport:
        """Audit the overall positive rates, warning if ``y`` differs from the assumed one."""
        q = None
        if y is not None:
            q = y.inclusion_probabilities()
            if not np.allclose(q, self.inclusion, atol=1e-12):
                warnings.warn(
                    f"classifier was rescaled for {self.assumed}, audited under {y.describe()}",
                    ContextualFairnessWarning,
                    stacklevel=2,
                )
        return audit_individual_fairness(m, self.effective(q), epsilon)


def positive_weights_rescale(
    c: SoftClassifier | np.ndarray, q: SubsetDistribution | Sequence[float] | np.ndarray
) -> RescaledClassifier:
    """Thin ``c`` so uneven inclusion odds no longer cause unequal treatment.

    Raises :class:`InfeasibleError` if some element is never included: no
    thinning can compensate for an element the classifier never sees.
    """
    base = c if isinstance(c, SoftClassifier) else SoftClassifier(as_probs(c))
    if isinstance(q, SubsetDistribution):
        weights, label = q.inclusion_probabilities(), q.describe()
    else:
        weights = np.asarray(q, dtype=float)
        label = f"independent(weights={np.round(weights, 6).tolist()})"
    if weights.shape != (base.size,):
        raise ValueError("one inclusion weight per element required")
    if np.any(weights <= 0):
        zero = np.flatnonzero(weights <= 0).tolist()
        raise InfeasibleError(
            f"elements {zero} are never presented to the classifier; their outcome cannot be matched"
        )
    return RescaledClassifier(base, weights, label)


def copy_behavior_extension(
    external: Sequence[float] | np.ndarray,
    m: TaskMetric,
    v: Sequence[int],
    epsilon: float = DEFAULT_EPSILON,
) -> SoftClassifier:
    """Extend an outside classifier on ``U \\ V`` to the whole universe.

    ``external`` is a length-N vector (entries on ``V`` are ignored).  It is
    kept unchanged where defined and ``V`` is filled one element at a time,
    each copying its nearest already-placed neighbour as far as fairness
    allows.  Raises :class:`FairnessError` if ``external`` is not fair on
    ``U \\ V``.
    """
    probs = np.array(external, dtype=float)
    if probs.shape != (m.size,):
        raise ValueError(f"external classifier must have length {m.size}")
    v_ids = np.array(sorted(set(int(x) for x in v)), dtype=int)
    rest = np.setdiff1d(np.arange(m.size), v_ids)
    probs[v_ids] = np.nan
    if np.any(np.isnan(probs[rest])):
        raise ValueError("external classifier must be defined outside V")
    if rest.size:
        report = audit_individual_fairness(m, np.nan_to_num(probs), epsilon, ids=rest)
        if report.violations:
            raise FairnessError(f"external classifier is not fair on U \\ V: {report.summary()}")
    order = np.concatenate([rest, v_ids]).astype(np.int64)
    return build_fair_classifier(m, partial=probs, order=order)
