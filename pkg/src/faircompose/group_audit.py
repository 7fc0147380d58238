"""Conditional parity checks for composed systems.

Covers parity of composed probability vectors, audits refined by subgroup
indicator columns, a test for whether two tasks' group labels are
statistically unrelated, and per-cell parity residuals for two competing
tasks.  Everything here is exact expectation arithmetic over the listed
universe; nothing is sampled.
"""

from __future__ import annotations

import itertools
from collections.abc import Hashable, Sequence
from dataclasses import dataclass

import numpy as np

from .cohort import ptc_selection_probability
from .competitive import TieBreaker, compose_competitive, randomize_then_classify
from .core import (
    DEFAULT_EPSILON,
    FairnessError,
    FairnessReport,
    GroupStructure,
    SoftClassifier,
    SystemOutcome,
    as_probs,
    audit_conditional_parity,
    group_means,
)
from .functional import compose_or

ClassifierLike = SoftClassifier | np.ndarray | Sequence[float]


def audit_parity_under_composition(
    g: GroupStructure, composed: ClassifierLike, epsilon: float = DEFAULT_EPSILON
) -> FairnessReport:
    """Conditional parity audit of an already composed probability vector."""
    return audit_conditional_parity(g, composed, epsilon)


def audit_subgroup_parity(
    g: GroupStructure,
    indicator: str,
    composed: ClassifierLike,
    epsilon: float = DEFAULT_EPSILON,
) -> FairnessReport:
    """Parity over the attribute set extended by the 0/1 column ``indicator``.

    Attribute values become ``(a, flag)`` pairs, so gaps hidden inside a
    coarse group show up as violations.
    """
    if indicator not in g.indicators:
        raise KeyError(f"group structure has no indicator column {indicator!r}")
    return audit_conditional_parity(g.refine(indicator), composed, epsilon)


# --------------------------------------------------------------------------
# Same-task OR composition
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class ParityTrajectory:
    """Group-mean gap of ``OR^n`` of one classifier, for ``n = 1..len``."""

    counts: np.ndarray
    mean_first: np.ndarray
    mean_second: np.ndarray

    @property
    def gaps(self) -> np.ndarray:
        return np.abs(self.mean_second - self.mean_first)


def tiered_population(
    size: int = 100,
    p_high: float = 0.9,
    p_low: float = 0.1,
    high_share_first: float = 0.10,
    high_share_second: float = 0.85,
) -> tuple[GroupStructure, SoftClassifier]:
    """Two groups of ``size`` with different shares of high-tier members.

    Every member sits in one stratum; the classifier gives ``p_high`` to the
    high tier and ``p_low`` to the rest.
    """
    n1 = round(high_share_first * size)
    n2 = round(high_share_second * size)
    tier = np.r_[np.ones(n1), np.zeros(size - n1), np.ones(n2), np.zeros(size - n2)].astype(bool)
    attribute = np.repeat(["a1", "a2"], size)
    g = GroupStructure(attribute, np.zeros(2 * size, dtype=int))
    return g, SoftClassifier(np.where(tier, p_high, p_low))


def or_parity_gap_trajectory(
    g: GroupStructure, c: ClassifierLike, max_count: int = 20
) -> ParityTrajectory:
    """Group means of the OR of ``n`` independent runs of ``c``.

    ``g`` must have one stratum and two attribute values.
    """
    cells = g.cells()
    if len(cells) != 1 or len(next(iter(cells.values()))) != 2:
        raise ValueError("expected one stratum with exactly two attribute values")
    p = as_probs(c)
    counts = np.arange(1, max_count + 1)
    first, second = [], []
    for n in counts:
        q = compose_or([p] * int(n))
        means = list(group_means(g, q).values())[0]
        a, b = means.values()
        first.append(a)
        second.append(b)
    return ParityTrajectory(counts, np.array(first), np.array(second))


def bimodal_population() -> tuple[GroupStructure, SoftClassifier]:
    """One stratum: group A has two medium members, group B one high and one low.

    Probabilities 0.75 / (1, 0.5) give equal group means of 0.75.
    """
    g = GroupStructure(["A", "A", "B", "B"], [0, 0, 0, 0])
    return g, SoftClassifier([0.75, 0.75, 1.0, 0.5])


def ptc_group_counterexample() -> tuple[GroupStructure, SoftClassifier, dict[Hashable, float]]:
    """Three elements where cohort selection of one breaks parity.

    ``a`` has 0.75 and the pair ``b1, b2`` has 1 and 0.5, so the two group
    means agree before selection.  Returns the group means of the exact
    selection probabilities (5/16 vs 11/32).
    """
    g = GroupStructure(["a", "b", "b"], [0, 0, 0])
    c = SoftClassifier([0.75, 1.0, 0.5])
    sel = ptc_selection_probability(c, 1, method="exact").probs
    return g, c, group_means(g, sel)[0]


# --------------------------------------------------------------------------
# Unrelated tasks
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class UnrelatedCheck:
    unrelated: bool
    residual: float
    worst: tuple | None

    def __bool__(self) -> bool:
        return self.unrelated


def _conditional_residual(
    target: np.ndarray, given_a: np.ndarray, given_z: np.ndarray
) -> tuple[float, tuple | None]:
    """max |Pr[target = t | a, z] - Pr[target = t]| over non-empty cells."""
    values = list(dict.fromkeys(target.tolist()))
    overall = {t: float(np.mean(target == t)) for t in values}
    worst, key = 0.0, None
    cells: dict[tuple, list[int]] = {}
    for i, (a, z) in enumerate(zip(given_a.tolist(), given_z.tolist())):
        cells.setdefault((a, z), []).append(i)
    for (a, z), ids in cells.items():
        sub = target[ids]
        for t in values:
            r = abs(float(np.mean(sub == t)) - overall[t])
            if r > worst:
                worst, key = r, (t, a, z)
    return worst, key


def check_unrelated_tasks(
    g1: GroupStructure, g2: GroupStructure, epsilon: float = DEFAULT_EPSILON
) -> UnrelatedCheck:
    """Whether each task's stratum is independent of the other's labels.

    Checks both ``Pr[z | a', z'] = Pr[z]`` and ``Pr[z' | a, z] = Pr[z']``
    using counts over the universe.  ``worst`` names the cell with the
    largest residual as ``(direction, value, a, z)``.
    """
    if g1.size != g2.size:
        raise ValueError("group structures cover different universes")
    r1, k1 = _conditional_residual(g1.stratum, g2.attribute, g2.stratum)
    r2, k2 = _conditional_residual(g2.stratum, g1.attribute, g1.stratum)
    if r1 >= r2:
        res, worst = r1, (("first",) + k1 if k1 else None)
    else:
        res, worst = r2, (("second",) + k2 if k2 else None)
    return UnrelatedCheck(res <= epsilon, res, worst)


# --------------------------------------------------------------------------
# Two competing tasks
# --------------------------------------------------------------------------

def _signed_gaps(g: GroupStructure, q: np.ndarray) -> dict[tuple, float]:
    out = {}
    for z, cell in g.cells().items():
        means = {a: float(q[ids].mean()) for a, ids in cell.items()}
        for a1, a2 in itertools.combinations(means, 2):
            out[(z, a1, a2)] = means[a1] - means[a2]
    return out


@dataclass(frozen=True)
class MultiTaskParity:
    """Signed parity residuals of each composed task.

    ``residuals[i][(z, a1, a2)]`` is mean(a1) - mean(a2) of task ``i``'s
    composed probabilities inside stratum ``z`` of that task's groups.
    """

    outcome: SystemOutcome
    residuals: tuple[dict[tuple, float], ...]
    reports: tuple[FairnessReport, ...]

    @property
    def max_residual(self) -> float:
        vals = [abs(v) for r in self.residuals for v in r.values()]
        return max(vals, default=0.0)

    @property
    def holds(self) -> bool:
        return all(r.is_fair for r in self.reports)


def multi_task_parity_residual(
    classifiers: Sequence[ClassifierLike],
    groups: Sequence[GroupStructure],
    tb: TieBreaker | None = None,
    x: Sequence[float] | np.ndarray | None = None,
    epsilon: float = DEFAULT_EPSILON,
) -> MultiTaskParity:
    """Parity residuals of two tasks after competitive composition.

    Pass a tie-breaker ``tb``, or a task distribution ``x`` to use
    randomize-then-classify instead.
    """
    if len(classifiers) != 2 or len(groups) != 2:
        raise ValueError("exactly two tasks are supported")
    if (tb is None) == (x is None):
        raise ValueError("give exactly one of a tie-breaker or a task distribution")
    so = compose_competitive(classifiers, tb) if tb is not None else randomize_then_classify(classifiers, x)
    residuals = tuple(_signed_gaps(g, so.task(i)) for i, g in enumerate(groups))
    reports = tuple(audit_parity_under_composition(g, so.task(i), epsilon) for i, g in enumerate(groups))
    return MultiTaskParity(so, residuals, reports)


def stratum_constant(g: GroupStructure, values: dict[Hashable, float]) -> SoftClassifier:
    """Classifier giving every member of stratum ``z`` the probability ``values[z]``."""
    return SoftClassifier(np.array([values[z] for z in g.stratum.tolist()], dtype=float))


@dataclass(frozen=True)
class ParityWitness:
    """Two parity-fair classifiers whose competitive composition is not.

    ``cell`` is ``(task, z, a1, a2, z_other)``: the stratum and attribute
    pair of the failing task and the other task's stratum that was shifted
    by ``alpha``.
    """

    classifiers: tuple[SoftClassifier, SoftClassifier]
    alpha: float
    cell: tuple
    base: MultiTaskParity
    result: MultiTaskParity

    @property
    def residual(self) -> float:
        return self.result.max_residual


def _shift_sensitivity(
    g_self: GroupStructure, g_other: GroupStructure, loss: np.ndarray
) -> tuple | None:
    """Find ``(z, a1, a2, z')`` whose mean ``loss`` over ``U_{a,z} ∩ U_{z'}`` differs.

    ``loss[u]`` is the chance that ``u`` loses the tie.  Raising the other
    task's probability on stratum ``z'`` moves the group means of this task
    by ``alpha * p_z`` times these sums, so a difference makes the shift
    visible.
    """
    other = g_other.stratum
    for z, cell in g_self.cells().items():
        attrs = list(cell)
        for z2 in dict.fromkeys(other.tolist()):
            sums = {a: float(loss[ids][other[ids] == z2].sum()) / ids.size for a, ids in cell.items()}
            for a1, a2 in itertools.combinations(attrs, 2):
                if abs(sums[a1] - sums[a2]) > 1e-12:
                    return z, a1, a2, z2
    return None


def alpha_perturbation_witness(
    groups: Sequence[GroupStructure],
    tb: TieBreaker,
    base: float = 0.5,
    alpha: float = 0.25,
    epsilon: float = DEFAULT_EPSILON,
) -> ParityWitness:
    """Build stratum-constant classifiers that break parity once composed.

    Both classifiers start at ``base`` on every stratum, which satisfies
    parity in isolation.  If the composition already fails, that pair is
    returned with ``alpha = 0``.  Otherwise a stratum of the other task whose
    members lose ties unevenly across one task's groups is shifted up by
    ``alpha``, which keeps both classifiers stratum-constant (so still
    parity-fair) and moves the failing group means apart.
    """
    if not 0.0 < base < 1.0 or not 0.0 < alpha <= 1.0 - base:
        raise ValueError("need 0 < base < 1 and 0 < alpha <= 1 - base")
    g1, g2 = groups
    if g1.size != g2.size:
        raise ValueError("group structures cover different universes")
    n = g1.size
    c = [SoftClassifier(np.full(n, base)), SoftClassifier(np.full(n, base))]
    first = multi_task_parity_residual(c, groups, tb=tb, epsilon=epsilon)
    if not first.holds:
        return ParityWitness((c[0], c[1]), 0.0, (), first, first)
    share = tb.both_positive_share(n)
    losses = (1.0 - share, share)
    for task in (0, 1):
        other = 1 - task
        hit = _shift_sensitivity(groups[task], groups[other], losses[task])
        if hit is None:
            continue
        z, a1, a2, z2 = hit
        shifted = as_probs(c[other]).copy()
        shifted[groups[other].stratum == z2] += alpha
        new = list(c)
        new[other] = SoftClassifier(shifted)
        result = multi_task_parity_residual(new, groups, tb=tb, epsilon=epsilon)
        return ParityWitness((new[0], new[1]), alpha, (task, z, a1, a2, z2), first, result)
    raise FairnessError("tie-break losses are balanced across every group and stratum pair")


# --------------------------------------------------------------------------
# Worked populations
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class CompetingScenario:
    """Two tasks over one universe with a fixed tie-breaker.

    ``stages`` maps a stage name to the pair of classifiers in force.
    ``subgroup`` names the indicator column audited on ``groups[audited]``.
    """

    groups: tuple[GroupStructure, GroupStructure]
    stages: dict[str, tuple[SoftClassifier, SoftClassifier]]
    tb: TieBreaker
    audited: int
    subgroup: str

    def outcome(self, stage: str) -> SystemOutcome:
        return compose_competitive(self.stages[stage], self.tb)

    def audit(self, stage: str, epsilon: float = DEFAULT_EPSILON) -> tuple[FairnessReport, FairnessReport]:
        """Coarse and subgroup-refined parity reports for the audited task."""
        q = self.outcome(stage).task(self.audited)
        g = self.groups[self.audited]
        return (
            audit_parity_under_composition(g, q, epsilon),
            audit_subgroup_parity(g, self.subgroup, q, epsilon),
        )


def mothers_scenario(per_cell: int = 2) -> CompetingScenario:
    """Home-goods ads versus job ads, home goods winning every tie.

    Each (gender, qualified, parent) cell holds ``per_cell`` people.  Home
    goods bids 0.9 on mothers and 0.1 on everyone else.  Jobs starts at 0.5
    for qualified and 0.1 for unqualified people; in the ``rebalanced``
    stage it scales its bids on women by 1.8.  That restores gender parity
    among job ads while mothers keep losing to home goods.
    """
    rows = list(itertools.product(["man", "woman"], [True, False], [True, False]))
    gender = np.repeat([r[0] for r in rows], per_cell)
    qualified = np.repeat([r[1] for r in rows], per_cell)
    parent = np.repeat([r[2] for r in rows], per_cell)
    mother = (gender == "woman") & parent
    g_jobs = GroupStructure(gender, qualified, {"parent": parent, "mother": mother})
    g_home = GroupStructure(np.zeros(gender.size, dtype=int), mother)
    home = SoftClassifier(np.where(mother, 0.9, 0.1))
    jobs = np.where(qualified, 0.5, 0.1)
    rebalanced = np.where(gender == "woman", 1.8 * jobs, jobs)
    return CompetingScenario(
        (g_home, g_jobs),
        {"initial": (home, SoftClassifier(jobs)), "rebalanced": (home, SoftClassifier(rebalanced))},
        TieBreaker.strict_order([0, 1]),
        audited=1,
        subgroup="parent",
    )


def psa_scenario(per_cell: int = 1, races: Sequence[str] = ("r1", "r2", "r3")) -> CompetingScenario:
    """Grocery delivery ads versus a screening announcement.

    The universe is the full product race x gender x over-50 with
    ``per_cell`` people per combination.  Groceries target women (0.8 vs
    0.1) with race parity; the announcement targets people over 50 (0.7 vs
    0.05) with race parity; groceries win ties.  The two tasks are
    unrelated, so race parity survives composition, yet women over 50 lose
    the announcement far more often than men over 50.
    """
    rows = list(itertools.product(races, ["man", "woman"], [True, False]))
    race = np.repeat([r[0] for r in rows], per_cell)
    woman = np.repeat([r[1] == "woman" for r in rows], per_cell)
    older = np.repeat([r[2] for r in rows], per_cell)
    g_grocery = GroupStructure(race, woman, {"woman": woman})
    g_psa = GroupStructure(race, older, {"woman": woman})
    grocery = SoftClassifier(np.where(woman, 0.8, 0.1))
    psa = SoftClassifier(np.where(older, 0.7, 0.05))
    return CompetingScenario(
        (g_grocery, g_psa),
        {"initial": (grocery, psa)},
        TieBreaker.strict_order([0, 1]),
        audited=1,
        subgroup="woman",
    )
