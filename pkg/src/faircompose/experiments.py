"""Scenario runner: random universes, fair classifiers, compositions, audits.

Each universe gets its own child seed spawned from the scenario seed, so a
universe's content does not depend on how many workers run or in which
order they finish.  Aggregates are computed in universe order.
"""

from __future__ import annotations

import csv
import re
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .cohort import EXACT_PTC_MAX_N, ptc_selection_probability, ws_selection_probability
from .competitive import TieBreaker, allocation, boosted, compose_competitive, randomize_then_classify
from .constrained import FeasibilityReport, check_constrained_feasibility, estimate_gamma_partition
from .construct import AllocationTarget, optimize_fair_classifier
from .core import (
    FairnessError,
    GroupStructure,
    InfeasibleError,
    SoftClassifier,
    TaskMetric,
    audit_conditional_parity,
    audit_individual_fairness,
    pairwise_excess,
)
from .functional import compose_and, compose_or, compose_threshold, compose_xor_exactly_one
from .plots import TASK_COLORS, write_scatter
from .scenario import (
    CohortComposition,
    CompetitiveComposition,
    Composition,
    ConstrainedComposition,
    ExplicitClassifierSpec,
    ExplicitQualification,
    FunctionalComposition,
    RandomizeComposition,
    Scenario,
    composition_label,
)

REPORT_COLUMNS = ("composition_type", "task", "pct_pairs_violating", "avg_violation", "max_violation")


@dataclass(frozen=True)
class Population:
    qualifications: np.ndarray  # (N, k)
    metrics: tuple[TaskMetric, ...]
    clamped_fraction: float


def generate_population(
    n: int,
    mean: float = 0.5,
    sd: float = 0.25,
    seed: int | np.random.SeedSequence | np.random.Generator | None = 0,
    tasks: int = 2,
) -> Population:
    """Independent clamped normal qualifications and their abs-diff metrics."""
    if n < 1:
        raise ValueError("n must be at least 1")
    if sd <= 0:
        raise ValueError("sd must be positive")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    raw = rng.normal(mean, sd, size=(tasks, n)).T
    q = np.clip(raw, 0.0, 1.0)
    return Population(q, tuple(TaskMetric.abs_diff(q[:, i]) for i in range(tasks)), float(np.mean(q != raw)))


# --------------------------------------------------------------------------
# Per-universe evaluation
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Instance:
    """One generated universe with its fair per-task classifiers."""

    index: int
    qualifications: np.ndarray
    metrics: tuple[TaskMetric, ...]
    classifiers: tuple[SoftClassifier, ...]
    seed: np.random.SeedSequence


def build_instance(sc: Scenario, index: int, seed: np.random.SeedSequence) -> Instance:
    rng = np.random.default_rng(seed)
    n = sc.population.size
    quals, metrics, classifiers = [], [], []
    for t in sc.tasks:
        if isinstance(t.qualification, ExplicitQualification):
            q = np.asarray(t.qualification.values, dtype=float)
        else:
            q = np.clip(rng.normal(t.qualification.mean, t.qualification.sd, size=n), 0.0, 1.0)
        m = TaskMetric.abs_diff(q) if t.metric == "abs_diff" else TaskMetric(np.asarray(t.metric, dtype=float))
        if isinstance(t.classifier, ExplicitClassifierSpec):
            c = SoftClassifier(t.classifier.probs)
        else:
            c = optimize_fair_classifier(m, AllocationTarget(q, t.classifier.cap))
        report = audit_individual_fairness(m, c, sc.epsilon)
        if not report.is_fair:
            worst = max(report.violations, key=lambda v: v.excess)
            raise FairnessError(
                f"universe {index}, task {t.name!r}: classifier fails its own audit "
                f"({report.summary()}; worst pair {worst.key} excess {worst.excess:.3g})"
            )
        quals.append(q)
        metrics.append(m)
        classifiers.append(c)
    return Instance(index, np.column_stack(quals), tuple(metrics), tuple(classifiers), seed)


@dataclass(frozen=True)
class TaskOutcome:
    task: str
    probs: np.ndarray
    metric: TaskMetric
    baseline: np.ndarray | None = None
    utility: np.ndarray | None = None


def _tie_breaker(sc: Scenario, c: CompetitiveComposition, inst: Instance) -> TieBreaker:
    tb = c.tie_break
    if tb.kind == "strict":
        return TieBreaker.strict_order([sc.task_index(t) for t in tb.order])
    if tb.kind == "uniform":
        return TieBreaker.uniform(len(sc.tasks))
    if tb.rho_from is not None:
        return TieBreaker.two_task_value(inst.qualifications[:, sc.task_index(tb.rho_from)])
    return TieBreaker.two_task_value(tb.rho)


_FUNCTIONAL = {"or": compose_or, "and": compose_and, "xor": compose_xor_exactly_one}


def evaluate_composition(sc: Scenario, c: Composition, inst: Instance) -> list[TaskOutcome]:
    """Per-task composed probability vectors for one universe."""
    names = sc.task_names
    P = inst.classifiers
    if isinstance(c, FunctionalComposition):
        parts = [P[sc.task_index(t)] for t in c.tasks]
        q = compose_threshold(parts, c.k) if c.op == "threshold" else _FUNCTIONAL[c.op](parts)
        target = c.audit_task or c.tasks[0]
        return [TaskOutcome(target, q, inst.metrics[sc.task_index(target)])]
    if isinstance(c, CompetitiveComposition):
        so = compose_competitive(P, _tie_breaker(sc, c, inst))
    elif isinstance(c, RandomizeComposition):
        base = [boosted(p, c.boost) for p in P] if c.boost else list(P)
        so = randomize_then_classify(base, c.x)
    elif isinstance(c, CohortComposition):
        i = sc.task_index(c.task)
        if c.mechanism == "ws":
            q = ws_selection_probability(P[i], c.n)
        elif P[i].size <= EXACT_PTC_MAX_N:
            q = ptc_selection_probability(P[i], c.n).probs
        else:
            child = inst.seed.spawn(1)[0]
            q = ptc_selection_probability(P[i], c.n, method="montecarlo", trials=c.trials, seed=child).probs
        return [TaskOutcome(c.task, q, inst.metrics[i])]
    else:
        raise TypeError(f"{type(c).__name__} does not produce outcomes")
    return [
        TaskOutcome(name, so.task(i), inst.metrics[i], P[i].p, inst.qualifications[:, i])
        for i, name in enumerate(names)
    ]


def evaluate_feasibility(sc: Scenario, c: ConstrainedComposition, inst: Instance) -> FeasibilityReport:
    i = sc.task_index(c.task)
    flags = np.asarray(sc.population.columns[c.group], dtype=bool)
    a, b = np.flatnonzero(flags), np.flatnonzero(~flags)
    parts = c.parts if c.parts is not None else estimate_gamma_partition(inst.metrics[i], a, b).as_pairs()
    report = check_constrained_feasibility(a.size, b.size, c.n, c.p, parts)
    if c.fail_if_infeasible and report.feasible is False:
        raise InfeasibleError(f"{composition_label(c)}: {report.summary()}")
    return report


# --------------------------------------------------------------------------
# Records and aggregation
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class UniverseRecord:
    universe: int
    composition_type: str
    task: str
    n_compared: int
    n_violating: int
    mean_excess: float
    max_excess: float
    baseline_allocation: float | None
    allocation: float
    utility_loss: float | None


@dataclass(frozen=True)
class PairRecord:
    universe: int
    composition_type: str
    task: str
    u: int
    v: int
    distance: float
    outcome_gap: float
    excess: float


@dataclass(frozen=True)
class ParityRecord:
    universe: int
    composition_type: str
    task: str
    refined_by: str
    stratum: str
    a1: str
    a2: str
    gap: float
    violates: bool


@dataclass(frozen=True)
class ReportRow:
    composition_type: str
    task: str
    pct_pairs_violating: float
    avg_violation: float
    max_violation: float

    def as_tuple(self) -> tuple:
        return (self.composition_type, self.task, self.pct_pairs_violating, self.avg_violation, self.max_violation)


@dataclass
class ExperimentResult:
    scenario: Scenario
    rows: list[ReportRow] = field(default_factory=list)
    universes: list[UniverseRecord] = field(default_factory=list)
    pairs: list[PairRecord] = field(default_factory=list)
    parity: list[ParityRecord] = field(default_factory=list)
    feasibility: list[tuple[int, str, FeasibilityReport]] = field(default_factory=list)
    first: Instance | None = None
    first_outcomes: dict[str, list[TaskOutcome]] = field(default_factory=dict)

    def row(self, composition_type: str, task: str) -> ReportRow:
        for r in self.rows:
            if r.composition_type == composition_type and r.task == task:
                return r
        raise KeyError((composition_type, task))

    def records(self, composition_type: str, task: str) -> list[UniverseRecord]:
        return [r for r in self.universes if r.composition_type == composition_type and r.task == task]

    def write(self, out_dir: str | Path, plots: bool | None = None) -> list[Path]:
        return write_outputs(self, out_dir, plots)


def group_structures(sc: Scenario) -> dict[str, list[tuple[GroupStructure, list[str]]]]:
    cols = sc.population.columns
    out: dict[str, list[tuple[GroupStructure, list[str]]]] = {}
    for g in sc.groups:
        ind = {name: np.asarray(cols[name], dtype=bool) for name in g.indicators}
        gs = GroupStructure(np.asarray(cols[g.attribute], dtype=object), np.asarray(cols[g.stratum], dtype=object), ind)
        out.setdefault(g.task, []).append((gs, list(g.indicators)))
    return out


def _audit_universe(sc: Scenario, inst: Instance, wanted: list[Composition]):
    groups = group_structures(sc)
    urecs, precs, grecs, feas = [], [], [], []
    outcomes: dict[str, list[TaskOutcome]] = {}
    for c in wanted:
        label = composition_label(c)
        if isinstance(c, ConstrainedComposition):
            feas.append((inst.index, label, evaluate_feasibility(sc, c, inst)))
            continue
        outs = evaluate_composition(sc, c, inst)
        outcomes[label] = outs
        for o in outs:
            exc = pairwise_excess(o.metric.dist, o.probs)
            iu, iv = np.triu_indices(o.probs.size, 1)
            e = exc[iu, iv]
            bad = np.flatnonzero(e > sc.epsilon)
            n_cmp = int(e.size)
            alloc = float(o.probs.sum())
            base_alloc = float(o.baseline.sum()) if o.baseline is not None else None
            loss = None
            if o.baseline is not None and o.utility is not None:
                ub = float(np.dot(o.utility, o.baseline))
                loss = 1.0 - float(np.dot(o.utility, o.probs)) / ub if ub > 0 else 0.0
            urecs.append(
                UniverseRecord(
                    inst.index, label, o.task, n_cmp, int(bad.size),
                    float(e[bad].mean()) if bad.size else 0.0,
                    float(e[bad].max()) if bad.size else 0.0,
                    base_alloc, alloc, loss,
                )
            )
            for j in bad:
                u, v = int(iu[j]), int(iv[j])
                precs.append(
                    PairRecord(inst.index, label, o.task, u, v, float(o.metric.dist[u, v]),
                               float(abs(o.probs[u] - o.probs[v])), float(e[j]))
                )
            for gs, indicators in groups.get(o.task, []):
                for refined in [None, *indicators]:
                    g = gs if refined is None else gs.refine(refined)
                    rep = audit_conditional_parity(g, o.probs, 0.0)
                    for viol in rep.violations:
                        z, a1, a2 = viol.key
                        grecs.append(
                            ParityRecord(inst.index, label, o.task, refined or "", str(z), str(a1), str(a2),
                                         viol.observed, viol.observed > sc.epsilon)
                        )
    return urecs, precs, grecs, feas, outcomes


def run_scenario(sc: Scenario) -> ExperimentResult:
    """Run every composition of ``sc`` over its universes and aggregate."""
    total = sc.universe_count()
    seeds = np.random.SeedSequence(sc.seed).spawn(total)
    wanted = {i: [c for c in sc.compositions if i < (c.universes or sc.universes)] for i in range(total)}

    def job(i: int):
        inst = build_instance(sc, i, seeds[i])
        return inst, _audit_universe(sc, inst, wanted[i])

    if sc.workers > 1 and total > 1:
        with ThreadPoolExecutor(max_workers=sc.workers) as pool:
            results = list(pool.map(job, range(total)))
    else:
        results = [job(i) for i in range(total)]

    res = ExperimentResult(sc)
    for inst, (urecs, precs, grecs, feas, outcomes) in results:
        res.universes.extend(urecs)
        res.pairs.extend(precs)
        res.parity.extend(grecs)
        res.feasibility.extend(feas)
        if inst.index == 0:
            res.first, res.first_outcomes = inst, outcomes
    res.rows = aggregate(res.universes, res.pairs)
    return res


def aggregate(universes: Sequence[UniverseRecord], pairs: Sequence[PairRecord]) -> list[ReportRow]:
    """Table rows from per-universe and per-pair records.

    ``pct_pairs_violating`` is the mean over universes of the violating
    share; ``avg_violation`` is the mean excess over every violating pair
    pooled across universes; ``max_violation`` is the mean over universes
    of each universe's largest excess (zero when it has none).
    """
    keys = list(dict.fromkeys((r.composition_type, r.task) for r in universes))
    excess: dict[tuple[str, str], list[float]] = {}
    for p in pairs:
        excess.setdefault((p.composition_type, p.task), []).append(p.excess)
    rows = []
    for key in keys:
        recs = [r for r in universes if (r.composition_type, r.task) == key]
        pct = 100.0 * float(np.mean([r.n_violating / r.n_compared if r.n_compared else 0.0 for r in recs]))
        pooled = excess.get(key, [])
        avg = float(np.mean(pooled)) if pooled else 0.0
        mx = float(np.mean([r.max_excess for r in recs]))
        rows.append(ReportRow(key[0], key[1], pct, avg, mx))
    return rows


def run_competitive_experiment(sc: Scenario) -> ExperimentResult:
    """Run a two-task scenario; same as :func:`run_scenario` with a task check."""
    if len(sc.tasks) != 2:
        raise ValueError("the competitive study needs exactly two tasks")
    return run_scenario(sc)


# --------------------------------------------------------------------------
# Output
# --------------------------------------------------------------------------

def _slug(s: str) -> str:
    return re.sub(r"[^A-Za-z0-9]+", "_", s).strip("_").lower()


def _write_csv(path: Path, header: Sequence[str], rows: Sequence[Sequence]) -> Path:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow(["" if x is None else x for x in r])
    return path


def write_outputs(res: ExperimentResult, out_dir: str | Path, plots: bool | None = None) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = [
        _write_csv(out / "report.csv", REPORT_COLUMNS, [r.as_tuple() for r in res.rows]),
        _write_csv(
            out / "universes.csv",
            ("universe", "composition_type", "task", "n_compared", "n_violating", "mean_excess",
             "max_excess", "baseline_allocation", "allocation", "utility_loss"),
            [tuple(vars(r).values()) for r in res.universes],
        ),
        _write_csv(
            out / "pairs.csv",
            ("universe", "composition_type", "task", "u", "v", "distance", "outcome_gap", "excess"),
            [tuple(vars(r).values()) for r in res.pairs],
        ),
    ]
    if res.parity:
        written.append(
            _write_csv(
                out / "parity.csv",
                ("universe", "composition_type", "task", "refined_by", "stratum", "a1", "a2", "gap", "violates"),
                [tuple(vars(r).values()) for r in res.parity],
            )
        )
    if res.feasibility:
        written.append(
            _write_csv(
                out / "feasibility.csv",
                ("universe", "composition_type", "feasible", "slack", "p_max", "p", "mean_a_lower", "mean_b_upper"),
                [(i, lab, r.feasible, r.slack, r.p_max, r.p, r.mean_a_lower, r.mean_b_upper)
                 for i, lab, r in res.feasibility],
            )
        )
    if (res.scenario.plots if plots is None else plots) and res.first is not None:
        written.extend(_write_plots(res, out))
    return written


def _write_plots(res: ExperimentResult, out: Path) -> list[Path]:
    sc, inst = res.scenario, res.first
    names = sc.task_names
    q = inst.qualifications
    x = q[:, 0]
    y = q[:, 1] if q.shape[1] > 1 else np.full(q.shape[0], 0.5)
    xl = f"qualification: {names[0]}"
    yl = f"qualification: {names[1]}" if len(names) > 1 else ""
    paths = []
    for i, name in enumerate(names):
        color = TASK_COLORS[i % len(TASK_COLORS)]
        paths.append(write_scatter(out / f"independent_{_slug(name)}.svg", x, y, inst.classifiers[i].p,
                                   f"{name}, classified alone", xl, yl, color))
    for label, outs in res.first_outcomes.items():
        for o in outs:
            color = TASK_COLORS[names.index(o.task) % len(TASK_COLORS)]
            paths.append(write_scatter(out / f"{_slug(label)}__{_slug(o.task)}.svg", x, y, o.probs,
                                       f"{o.task}: {label}", xl, yl, color))
    return paths
