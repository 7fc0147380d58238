"""Small named walkthroughs printed by ``faircompose demo <name>``.

Each demo returns its report as a string so tests can check the numbers.
"""

from __future__ import annotations

from collections.abc import Callable

import numpy as np

from .cohort import (
    CohortMode,
    CohortSpec,
    online_cohort,
    statistical_parity_online,
    ptc_selection_probability,
    ws_pairwise_coefficient,
    ws_set_probabilities,
)
from .competitive import TieBreaker, allocation, find_violation_witness, randomize_then_classify
from .constrained import check_constrained_feasibility
from .core import InfeasibleError, SoftClassifier, TaskMetric, audit_individual_fairness, group_means
from .functional import and_unfairness_witness, compose_or
from .group_audit import audit_parity_under_composition, bimodal_population, mothers_scenario


def or_divergence() -> str:
    m = TaskMetric([[0.0, 0.49], [0.49, 0.0]])
    c = SoftClassifier([0.5, 0.01])
    q = compose_or([c, c])
    rep = audit_individual_fairness(m, q)
    return "\n".join([
        "Same classifier applied twice, positive if either run is positive.",
        f"  single run:   p = {c.p[0]:.4g}, {c.p[1]:.4g}  (gap {abs(c.p[0] - c.p[1]):.4g}, allowed {m(0, 1):.4g})",
        f"  OR of two:    p = {q[0]:.4g}, {q[1]:.4g}  (gap {abs(q[0] - q[1]):.4g}, allowed {m(0, 1):.4g})",
        f"  excess over the allowed distance: {abs(q[0] - q[1]) - m(0, 1):.4g}",
        f"  audit: {rep.summary()}",
        "Result: repeating a fair classifier and taking the OR can stretch a pair beyond its distance.",
    ])


def bimodal_parity() -> str:
    g, c = bimodal_population()
    once = group_means(g, c.p)[0]
    twice_q = compose_or([c, c])
    twice = group_means(g, twice_q)[0]
    rep = audit_parity_under_composition(g, twice_q)
    return "\n".join([
        "Group A: two members at 0.75.  Group B: one at 1.0, one at 0.5.",
        f"  one run:  mean A = {once['A']:.4g}, mean B = {once['B']:.4g}",
        f"  OR of two: mean A = {twice['A']:.4g}, mean B = {twice['B']:.4g}",
        f"  audit: {rep.summary()}",
        "Result: equal group means do not survive OR composition when members are treated unequally.",
    ])


def and_unfairness() -> str:
    m1 = TaskMetric.abs_diff([0.2, 0.5])
    m2 = TaskMetric.abs_diff([0.2, 0.5])
    w = and_unfairness_witness(m1, m2, m1)
    a, b = w.classifiers
    u, v = w.pair
    return "\n".join([
        "Two tasks with the same distance 0.3 between elements 0 and 1; outcome needs both.",
        f"  first task:  p = {a.p[u]:.4g}, {a.p[v]:.4g}",
        f"  second task: p = {b.p[u]:.4g}, {b.p[v]:.4g}",
        f"  AND outcome: p = {w.composed[u]:.4g}, {w.composed[v]:.4g}  (allowed gap {m1(u, v):.4g})",
        f"  excess: {w.pair_excess:.4g}",
        f"  audit: {w.report.summary()}",
        "Result: requiring positives on two fair tasks can be unfair for the combined outcome.",
    ])


def competitive_witness() -> str:
    m1 = TaskMetric.abs_diff([0.1, 0.3, 0.6, 0.9])
    m2 = TaskMetric.abs_diff([0.8, 0.4, 0.5, 0.2])
    tb = TieBreaker.strict_order([1, 0])
    w = find_violation_witness([m1, m2], tb)
    u, v = w.pair
    lines = [
        "Two tasks competing for one slot; the second task always wins ties.",
        f"  pair {w.pair}: distances {m1(u, v):.3g} (first), {m2(u, v):.3g} (second)",
        f"  searched probabilities p_u, p_v, p'_u, p'_v = {tuple(round(float(x), 4) for x in w.pair_probs)}",
        f"  composed first-task probabilities: {w.outcome.task(0)[u]:.4g}, {w.outcome.task(0)[v]:.4g}",
        f"  largest excess: {w.excess:.4g}",
    ]
    for name, r in zip(("first", "second"), w.reports):
        lines.append(f"  {name} task audit: {r.summary()}")
    lines.append("Result: fair classifiers for competing tasks need not give a fair system.")
    return "\n".join(lines)


def ptc_vs_oracle() -> str:
    c = SoftClassifier([0.9, 0.6, 0.3, 0.2, 0.1])
    exact = ptc_selection_probability(c, 2)
    mc = ptc_selection_probability(c, 2, method="montecarlo", trials=100_000, seed=7)
    lines = ["Shuffle then classify, cohort of 2 from 5.", "  id  p     exact     simulated  (stderr)"]
    for u in range(c.size):
        lines.append(f"  {u}   {c.p[u]:.2f}  {exact[u]:.6f}  {mc[u]:.6f}   ({mc.stderr[u]:.4f})")
    lines.append(f"  simulated within 3 standard errors: {mc.within(exact.probs)}")
    return "\n".join(lines)


def ws_closed_form() -> str:
    c = SoftClassifier([0.8, 0.6, 0.5, 0.4, 0.3, 0.1])
    n = 3
    sets = ws_set_probabilities(c, n)
    sel = np.zeros(c.size)
    for s, w in sets.items():
        sel[list(s)] += w
    coef = ws_pairwise_coefficient(c.size, n, float(c.p.sum()))
    ratio = (sel[0] - sel[1]) / (c.p[0] - c.p[1])
    return "\n".join([
        f"Weighted subset sampling of {n} from {c.size}; a set's weight is the sum of its members' probabilities.",
        f"  selection probabilities by enumeration: {np.round(sel, 6).tolist()}",
        f"  coefficient C(N-2, n-1) / (C(N-1, n-1) * sum p) = {coef:.6g}",
        f"  (Pr[0] - Pr[1]) / (p_0 - p_1) from enumeration = {ratio:.6g}",
        "Result: every selection gap is the probability gap scaled by one coefficient.",
    ])


def constrained_infeasible() -> str:
    parts = [(0.4, 0.25), (0.5, 0.1), (0.1, 0.0)]
    rep = check_constrained_feasibility(100, 1000, 550, None, parts)
    lines = [
        "|A| = 100, |B| = 1000, cohort of 550; B split into parts at radii 0.25, 0.1, 0.",
        f"  slack (sum of fraction * radius): {rep.slack:.4g}",
        f"  largest fair share from A: p_max = {rep.p_max:.4f}",
    ]
    try:
        check_constrained_feasibility(100, 1000, 550, 0.25, parts)
    except InfeasibleError as e:
        lines.append(f"  requiring 25% from A: infeasible ({e})")
    lines.append(f"  requiring 10% from A: {check_constrained_feasibility(100, 1000, 550, 0.10, parts).summary()}")
    return "\n".join(lines)


def mothers_subgroup() -> str:
    s = mothers_scenario()
    lines = ["Home goods outbid job ads for mothers; job ads then target women more."]
    for stage in s.stages:
        coarse, sub = s.audit(stage)
        means = group_means(s.groups[1], s.outcome(stage).task(1))
        qualified = {a: round(v, 4) for a, v in means[True].items()}
        lines.append(f"  {stage}: job-ad rate among qualified by gender {qualified}")
        lines.append(f"    gender audit:            {coarse.summary()}")
        lines.append(f"    gender x parent audit:   {sub.summary()}")
    mothers = s.outcome("rebalanced").task(1)[s.groups[1].indicators["mother"] & s.groups[1].stratum.astype(bool)]
    lines.append(f"  qualified mothers still see job ads with probability {mothers.mean():.4g}")
    lines.append("Result: a coarse parity audit can pass while a subgroup is excluded.")
    return "\n".join(lines)


def statistical_parity_adversarial() -> str:
    rng = np.random.default_rng(3)
    quality = np.round(rng.random(20), 2)
    men = list(range(10))
    women = list(range(10, 20))
    # adversarial order: men best first, women worst first
    order = sorted(men, key=lambda u: -quality[u]) + sorted(women, key=lambda u: quality[u])
    stream = [(u, "man" if u < 10 else "woman") for u in order]
    sel = statistical_parity_online(stream, {"man": 0.5, "woman": 0.5}, 6)
    picked_m = [u for u in sel.selected if u < 10]
    picked_w = [u for u in sel.selected if u >= 10]
    lines = [
        "Online quota selection of 6 with known 50/50 proportions.",
        f"  quotas: {sel.quotas}; selected men {len(picked_m)}, women {len(picked_w)}",
        f"  mean quality of selected men {quality[picked_m].mean():.3f}, women {quality[picked_w].mean():.3f}",
        f"  mean quality of all men {quality[men].mean():.3f}, all women {quality[women].mean():.3f}",
    ]
    try:
        online_cohort(CohortSpec(6, CohortMode.ADVERSARIAL_UNKNOWN_LENGTH), SoftClassifier(quality))
    except InfeasibleError as e:
        lines.append(f"  individually fair selection, adversarial order, unknown length: infeasible ({e})")
    lines.append("Result: statistical parity is achievable here, but an adversarial order decides who fills it.")
    return "\n".join(lines)


def rtc_allocation() -> str:
    p1 = SoftClassifier([0.9, 0.7, 0.4, 0.2])
    p2 = SoftClassifier([0.3, 0.8, 0.6, 0.5])
    x = [0.5, 0.5]
    so = randomize_then_classify([p1, p2], x)
    alloc = allocation(so)
    return "\n".join([
        "Pick a task per element with probabilities (0.5, 0.5), then classify for it.",
        f"  allocation alone:    {p1.p.sum():.4g}, {p2.p.sum():.4g}",
        f"  allocation composed: {alloc[0]:.4g}, {alloc[1]:.4g}",
        f"  ratio: {alloc[0] / p1.p.sum():.4g}, {alloc[1] / p2.p.sum():.4g}",
        "Result: every task keeps its ordering and fairness; its allocation is scaled by its share.",
    ])


DEMOS: dict[str, Callable[[], str]] = {
    "or-divergence": or_divergence,
    "bimodal-parity": bimodal_parity,
    "and-unfairness": and_unfairness,
    "competitive-witness": competitive_witness,
    "ptc-vs-oracle": ptc_vs_oracle,
    "ws-closed-form": ws_closed_form,
    "constrained-infeasible": constrained_infeasible,
    "mothers-subgroup": mothers_subgroup,
    "statistical-parity-adversarial": statistical_parity_adversarial,
    "rtc-allocation": rtc_allocation,
}


def run_named_demo(name: str) -> str:
    try:
        fn = DEMOS[name]
    except KeyError:
        raise KeyError(f"unknown demo {name!r}; choose from {', '.join(DEMOS)}") from None
    return fn()
