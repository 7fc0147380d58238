"""Acceptance gate: one PASS/FAIL line per criterion.

Run under pytest (lines appear in the terminal summary) or directly with
``python tests/test_acceptance.py``.
"""

from __future__ import annotations

import itertools
import math
import sys
import time
from collections.abc import Callable
from pathlib import Path

import numpy as np
import pytest
from scipy import stats

sys.path.insert(0, str(Path(__file__).resolve().parent))

from conftest import nontrivial_metric, random_metric  # noqa: E402
from oracles import grid_lp_optimum, threshold_bruteforce, threshold_enumeration, ws_coefficient_bruteforce  # noqa: E402

from faircompose import (  # noqa: E402
    AllocationTarget,
    CohortMode,
    CohortSpec,
    GroupStructure,
    InfeasibleError,
    SoftClassifier,
    TieBreaker,
    and_unfairness_witness,
    audit_conditional_parity,
    audit_individual_fairness,
    build_fair_classifier,
    check_constrained_feasibility,
    check_ws_precondition,
    compose_or,
    compose_threshold,
    copy_behavior_extension,
    find_violation_witness,
    group_means,
    online_cohort,
    optimize_fair_classifier,
    or_different_count_witness,
    or_same_set_witness,
    ptc_selection_probability,
    randomize_then_classify,
    weighted_sampling_many,
    ws_pairwise_coefficient,
    ws_selection_probability,
    ws_set_probabilities,
)
from faircompose.group_audit import (  # noqa: E402
    alpha_perturbation_witness,
    bimodal_population,
    check_unrelated_tasks,
    multi_task_parity_residual,
    ptc_group_counterexample,
    stratum_constant,
)
from faircompose.experiments import run_competitive_experiment  # noqa: E402
from faircompose.scenario import load_scenario  # noqa: E402

ROOT = Path(__file__).resolve().parents[1]
EPS = 1e-9
SUMMARY: list[str] = []

Check = Callable[[], str]


def _run_checks(number: int, title: str, checks: dict[str, Check], budget: float | None = None) -> list[str]:
    """Run every check, record one summary line, return the failures."""
    failures, details = [], []
    start = time.perf_counter()
    for name, fn in checks.items():
        try:
            details.append(f"{name}: {fn()}")
        except AssertionError as e:
            failures.append(f"{name}: {str(e).splitlines()[0]}")
        except Exception as e:  # an unexpected error is a failed check, not a crash
            failures.append(f"{name}: {type(e).__name__}: {e}")
    elapsed = time.perf_counter() - start
    if budget is not None and elapsed > budget:
        failures.append(f"runtime {elapsed:.1f}s over the {budget:.0f}s budget")
    status = "PASS" if not failures else "FAIL"
    line = f"{status} criterion {number}: {title} ({len(checks) - len(failures)}/{len(checks)} checks, {elapsed:.1f}s)"
    SUMMARY.append(line)
    for f in failures:
        SUMMARY.append(f"    failed {f}")
    print(line)
    for d in details:
        print(f"    {d}")
    for f in failures:
        print(f"    failed {f}")
    return failures


def _close(got: float, want: float, tol: float = 1e-9) -> None:
    assert abs(got - want) <= tol, f"{got!r} != {want!r}"


def _timed(fn: Callable[[], str], limit: float = 1.0) -> Check:
    """Warm once (JIT compilation is not part of the budget), then time a run."""
    def run() -> str:
        fn()
        t0 = time.perf_counter()
        out = fn()
        dt = time.perf_counter() - t0
        assert dt < limit, f"took {dt:.3f}s"
        return f"{out} [{dt * 1000:.1f} ms]"
    return run


# --------------------------------------------------------------------------
# 1. exact worked numbers
# --------------------------------------------------------------------------

def _or_divergence() -> str:
    c = SoftClassifier([0.5, 0.01])
    q = compose_or([c, c])
    _close(q[0], 0.75)
    _close(q[1], 0.0199)
    _close(abs(q[0] - q[1]) - 0.49, 0.2401)
    return f"({q[0]:.4f}, {q[1]:.4f}), excess {abs(q[0] - q[1]) - 0.49:.4f}"


def _bimodal() -> str:
    g, c = bimodal_population()
    means = group_means(g, compose_or([c, c]))[0]
    _close(means["A"], 0.9375)
    _close(means["B"], 0.875)
    return f"{means['A']} vs {means['B']}"


def _constrained() -> str:
    rep = check_constrained_feasibility(100, 1000, 550, None, [(0.4, 0.25), (0.5, 0.1), (0.1, 0.0)])
    _close(rep.slack, 0.15)
    _close(rep.p_max, 700 / 6050)
    blow = check_constrained_feasibility(10, 50, 20, 0.5, [(1.0, 0.0)])
    assert blow.feasible is False and blow.gap >= 0.8 - 1e-12, blow
    return f"slack {rep.slack:.2f}, p_max {rep.p_max:.4f}, blow-up gap {blow.gap:.2f}"


def _ptc_groups() -> str:
    _, _, means = ptc_group_counterexample()
    _close(means["a"], 5 / 16)
    _close(means["b"], 11 / 32)
    assert (round(means["a"], 2), round(means["b"], 2)) == (0.31, 0.34)
    return f"{means['a']:.5f} vs {means['b']:.5f}"


def _ws_coefficient() -> str:
    rng = np.random.default_rng(1)
    cases = 0
    for size in range(2, 9):
        for n in range(1, size + 1):
            p = rng.random(size)
            eta = math.comb(size - 1, n - 1) * p.sum()
            want = math.comb(size - 2, n - 1) / eta
            _close(ws_pairwise_coefficient(size, n, float(p.sum())), want, 1e-12)
            _close(ws_coefficient_bruteforce(p, n), want, 1e-9)
            cases += 1
    return f"{cases} (N, n) cases"


def test_criterion_1_exact_numbers():
    failures = _run_checks(
        1,
        "exact worked numbers",
        {
            "OR divergence": _timed(_or_divergence),
            "bimodal parity": _timed(_bimodal),
            "constrained feasibility": _timed(_constrained),
            "cohort group counterexample": _timed(_ptc_groups),
            "sampling coefficient": _timed(_ws_coefficient),
        },
    )
    assert not failures, failures


# --------------------------------------------------------------------------
# 2. oracle equivalence
# --------------------------------------------------------------------------

def _ptc_z_scores() -> np.ndarray:
    """|z| of every simulated selection probability against the exact value."""
    combos = [(size, n) for size in range(1, 7) for n in range(1, min(3, size) + 1)]
    rng = np.random.default_rng(2024)
    trials = 100_000
    zs = []
    for i in range(50):
        size, n = combos[i % len(combos)]
        p = rng.random(size)
        exact = ptc_selection_probability(p, n).probs
        mc = ptc_selection_probability(p, n, method="montecarlo", trials=trials, seed=1000 + i).probs
        sigma = np.sqrt(exact * (1 - exact) / trials)
        degenerate = sigma < 1e-9
        assert np.allclose(mc[degenerate], exact[degenerate], atol=1e-9), f"classifier {i}: certain outcome missed"
        zs.append(np.abs(mc - exact)[~degenerate] / sigma[~degenerate])
    return np.concatenate(zs)


_PTC_Z: list[np.ndarray] = []


def _ptc_z() -> np.ndarray:
    if not _PTC_Z:
        _PTC_Z.append(_ptc_z_scores())
    return _PTC_Z[0]


def _ptc_monte_carlo() -> str:
    z = _ptc_z()
    outside = int((z > 3.0).sum())
    assert outside == 0, f"{outside} of {z.size} simulated probabilities outside 3 sigma (largest {z.max():.2f})"
    return f"50 classifiers, {z.size} probabilities, largest |z| {z.max():.2f}"


def _ptc_calibration() -> str:
    z = _ptc_z()
    pval = float(stats.chi2.sf(float((z**2).sum()), z.size))
    assert pval > 0.001, f"sum of z^2 gives p = {pval:.2g}"
    return f"sum of z^2 over {z.size} probabilities: p = {pval:.3f}"


def _ws_chi_square() -> str:
    rng = np.random.default_rng(77)
    draws = 1_000_000
    tests = 0
    lowest = 1.0
    for size in range(2, 9):
        for n in range(1, size):
            p = rng.random(size)
            target = ws_set_probabilities(p, n)
            sets = weighted_sampling_many(p, n, draws, rng=rng)
            codes = (1 << sets).sum(axis=1)
            keys = np.array([sum(1 << x for x in s) for s in target])
            counts = np.bincount(codes, minlength=1 << size)[keys]
            expected = np.array(list(target.values())) * draws
            keep = expected > 0
            assert counts[~keep].sum() == 0, "zero-weight set was drawn"
            pval = stats.chisquare(counts[keep], expected[keep]).pvalue if keep.sum() > 1 else 1.0
            lowest = min(lowest, pval)
            assert pval > 0.001, f"N={size}, n={n}: p = {pval:.2g}"
            tests += 1
    return f"{tests} (N, n) cases at 10^6 draws, smallest p-value {lowest:.3f}"


def _lp_grid() -> str:
    rng = np.random.default_rng(99)
    worst = 0.0
    for i in range(100):
        n = int(rng.integers(1, 5))
        m = random_metric(rng, n)
        q = rng.random(n)
        cap = float(rng.uniform(0, n))
        got = float(q @ optimize_fair_classifier(m, AllocationTarget(q, cap)).p)
        grid = grid_lp_optimum(m.dist, q, cap, step=0.01)
        worst = max(worst, abs(got - grid))
        assert abs(got - grid) <= 0.02, f"instance {i}: LP {got:.4f} vs grid {grid:.4f}"
    return f"100 instances, largest gap {worst:.4f} (grid step 0.01)"


def _threshold() -> str:
    rng = np.random.default_rng(5)
    worst = 0.0
    for m in (1, 2, 3, 5, 8, 12, 16, 20):
        P = rng.random((m, 2))
        oracle = threshold_bruteforce if m <= 8 else threshold_enumeration
        for k in sorted({1, max(1, m // 2), m}):
            err = float(np.max(np.abs(compose_threshold(P, k) - oracle(P, k))))
            worst = max(worst, err)
            assert err <= 1e-10, f"m={m}, k={k}: error {err}"
    return f"up to 20 classifiers, largest error {worst:.1e}"


def test_criterion_2_oracle_equivalence():
    failures = _run_checks(
        2,
        "oracle equivalence",
        {
            "cohort scan simulation vs enumeration": _ptc_monte_carlo,
            "cohort scan simulation calibration": _ptc_calibration,
            "subset sampler chi-square": _ws_chi_square,
            "fair LP vs grid": _lp_grid,
            "threshold vs enumeration": _threshold,
        },
        budget=60.0,
    )
    assert not failures, failures


# --------------------------------------------------------------------------
# 3. property suites
# --------------------------------------------------------------------------

TRIALS = 1000


def _random_instance(rng, lo=2, hi=9):
    n = int(rng.integers(lo, hi))
    return n, random_metric(rng, n)


def _fair_classifier(rng, m, low=0.0):
    return build_fair_classifier(m, rng.uniform(low, 1.0, m.size), rng.permutation(m.size))


def _build_fair() -> str:
    rng = np.random.default_rng(31)
    for _ in range(TRIALS):
        _, m = _random_instance(rng, 2, 15)
        c = _fair_classifier(rng, m)
        assert audit_individual_fairness(m, c, EPS).is_fair
    return f"{TRIALS} instances"


def _rtc() -> str:
    rng = np.random.default_rng(32)
    for _ in range(TRIALS):
        n, m1 = _random_instance(rng)
        m2 = random_metric(rng, n)
        c1, c2 = _fair_classifier(rng, m1), _fair_classifier(rng, m2)
        so = randomize_then_classify([c1, c2], rng.dirichlet([1.0, 1.0]))
        assert audit_individual_fairness(m1, so.task(0), EPS).is_fair
        assert audit_individual_fairness(m2, so.task(1), EPS).is_fair
    return f"{TRIALS} instances"


def _ptc_bound() -> str:
    rng = np.random.default_rng(33)
    for _ in range(TRIALS):
        size = int(rng.integers(2, 7))
        n = int(rng.integers(1, min(3, size) + 1))
        m = random_metric(rng, size)
        c = _fair_classifier(rng, m)
        sel = ptc_selection_probability(c, n).probs
        assert audit_individual_fairness(m, sel, EPS).is_fair
    return f"{TRIALS} instances (exact enumeration)"


def _ws_fair() -> str:
    rng = np.random.default_rng(34)
    done = 0
    while done < TRIALS:
        size = int(rng.integers(2, 9))
        n = int(rng.integers(1, size + 1))
        m = random_metric(rng, size)
        c = _fair_classifier(rng, m)
        if not check_ws_precondition(c, n):
            continue
        assert audit_individual_fairness(m, ws_selection_probability(c, n), EPS).is_fair
        done += 1
    return f"{TRIALS} instances meeting the precondition"


def _copy_extension() -> str:
    rng = np.random.default_rng(35)
    for _ in range(TRIALS):
        n, m = _random_instance(rng, 3, 12)
        ext = _fair_classifier(rng, m).p
        v = rng.choice(n, int(rng.integers(1, n)), replace=False)
        out = copy_behavior_extension(ext, m, v)
        assert audit_individual_fairness(m, out, EPS).is_fair
    return f"{TRIALS} instances"


def _heavy_or() -> str:
    rng = np.random.default_rng(36)
    for _ in range(TRIALS):
        n, m = _random_instance(rng)
        base = [_fair_classifier(rng, m, low=0.5)]
        extra = [_fair_classifier(rng, m) for _ in range(int(rng.integers(0, 3)))]
        if extra and audit_individual_fairness(m, compose_or(base + extra), EPS).is_fair:
            base += extra
        heavy = compose_or(base)
        assert np.all(heavy >= 0.5) and audit_individual_fairness(m, heavy, EPS).is_fair
        extra_c = _fair_classifier(rng, m, low=0.5)
        assert audit_individual_fairness(m, compose_or(base + [extra_c]), EPS).is_fair
    return f"{TRIALS} instances"


def _or_witnesses() -> str:
    rng = np.random.default_rng(37)
    for _ in range(TRIALS):
        m = nontrivial_metric(rng, int(rng.integers(2, 9)))
        for w in (or_same_set_witness(m), or_different_count_witness(m)):
            assert audit_individual_fairness(m, w.classifiers[0], EPS).is_fair
            assert w.pair_excess > 0 and not w.report.is_fair
    return f"{TRIALS} metrics, both constructions"


def _and_witness() -> str:
    rng = np.random.default_rng(38)
    for _ in range(TRIALS):
        m = nontrivial_metric(rng, int(rng.integers(2, 9)))
        w = and_unfairness_witness(m, m, m)
        for c in w.classifiers:
            assert audit_individual_fairness(m, c, EPS).is_fair
        assert w.pair_excess > 0 and not w.report.is_fair
    return f"{TRIALS} metrics"


def _competitive_witness() -> str:
    rng = np.random.default_rng(39)
    for i in range(TRIALS):
        n = int(rng.integers(2, 6))
        m1, m2 = nontrivial_metric(rng, n), nontrivial_metric(rng, n)
        kind = i % 3
        if kind == 0:
            tb = TieBreaker.strict_order(rng.permutation(2))
        elif kind == 1:
            tb = TieBreaker.two_task_value(float(rng.random()))
        else:
            tb = TieBreaker.two_task_value(rng.random(n))
        w = find_violation_witness([m1, m2], tb)
        assert audit_individual_fairness(m1, w.classifiers[0], EPS).is_fair
        assert audit_individual_fairness(m2, w.classifiers[1], EPS).is_fair
        assert w.excess > 0 and w.violates
    return f"{TRIALS} metric pairs, strict and randomized tie-breaks"


def _product_population(rng):
    first = [(str(rng.integers(2)), int(rng.integers(2))) for _ in range(int(rng.integers(2, 6)))]
    second = [(str(rng.integers(3)), int(rng.integers(2))) for _ in range(int(rng.integers(2, 6)))]
    rows = list(itertools.product(first, second))
    g1 = GroupStructure([r[0][0] for r in rows], [r[0][1] for r in rows])
    g2 = GroupStructure([r[1][0] for r in rows], [r[1][1] for r in rows])
    return g1, g2


def _unrelated_group() -> str:
    rng = np.random.default_rng(40)
    worst = 0.0
    for _ in range(TRIALS):
        g1, g2 = _product_population(rng)
        assert check_unrelated_tasks(g1, g2).unrelated
        c1 = stratum_constant(g1, {z: float(rng.random()) for z in set(g1.stratum.tolist())})
        c2 = stratum_constant(g2, {z: float(rng.random()) for z in set(g2.stratum.tolist())})
        tb = TieBreaker.strict_order(rng.permutation(2)) if rng.random() < 0.5 else TieBreaker.two_task_value(float(rng.random()))
        res = multi_task_parity_residual([c1, c2], [g1, g2], tb=tb)
        worst = max(worst, res.max_residual)
        assert res.max_residual <= 1e-9
    return f"{TRIALS} product populations, largest residual {worst:.1e}"


def _losing_share_differs(g_loser: GroupStructure, g_winner: GroupStructure) -> bool:
    other = g_winner.stratum
    for cell in g_loser.cells().values():
        for z2 in set(other.tolist()):
            fr = {float(np.mean(other[ids] == z2)) for ids in cell.values()}
            if len(fr) > 1:
                return True
    return False


def _alpha_shift() -> str:
    rng = np.random.default_rng(41)
    done = 0
    while done < TRIALS:
        size = int(rng.integers(4, 16))
        g1 = GroupStructure(rng.integers(0, 2, size), rng.integers(0, 2, size))
        g2 = GroupStructure(rng.integers(0, 2, size), rng.integers(0, 2, size))
        tb = TieBreaker.strict_order([0, 1])
        # strict preference: the second task loses every tie, so the hypothesis is
        # that its groups meet the first task's strata in different proportions
        if not _losing_share_differs(g2, g1):
            continue
        w = alpha_perturbation_witness([g1, g2], tb)
        for c, g in zip(w.classifiers, (g1, g2)):
            assert audit_conditional_parity(g, c, EPS).is_fair
        assert w.residual > 1e-9, "no residual"
        done += 1
    return f"{TRIALS} populations with uneven intersections"


def _unknown_length() -> str:
    rng = np.random.default_rng(42)
    for _ in range(TRIALS):
        size = int(rng.integers(1, 10))
        spec = CohortSpec(int(rng.integers(1, size + 1)), CohortMode.ADVERSARIAL_UNKNOWN_LENGTH)
        try:
            online_cohort(spec, rng.random(size), rng=rng)
        except InfeasibleError:
            continue
        raise AssertionError("returned a cohort")
    return f"{TRIALS} streams"


def test_criterion_3_property_suites():
    failures = _run_checks(
        3,
        "property suites",
        {
            "fair construction": _build_fair,
            "randomize-then-classify": _rtc,
            "cohort scan bound": _ptc_bound,
            "weighted subset sampling": _ws_fair,
            "copy-behaviour extension": _copy_extension,
            "heavy OR": _heavy_or,
            "OR witnesses": _or_witnesses,
            "AND witness": _and_witness,
            "competitive witness": _competitive_witness,
            "unrelated groups": _unrelated_group,
            "alpha shift": _alpha_shift,
            "unknown-length stream": _unknown_length,
        },
    )
    assert not failures, failures


# --------------------------------------------------------------------------
# 4. two-task study at full scale
# --------------------------------------------------------------------------

def _in(value: float, lo: float, hi: float, what: str) -> None:
    assert lo <= value <= hi, f"{what} = {value:.4g} outside [{lo}, {hi}]"


@pytest.fixture(scope="module")
def study():
    return run_competitive_experiment(load_scenario(ROOT / "scenarios" / "appendix_study.yaml"))


def _study_checks(res) -> dict[str, Check]:
    def strict(label: str, preferred: str, loser: str) -> Check:
        def run() -> str:
            pref = res.row(label, preferred)
            assert pref.pct_pairs_violating == 0 and pref.max_violation == 0, f"{preferred} has violations"
            row = res.row(label, loser)
            _in(row.pct_pairs_violating, 5, 50, "% violating")
            _in(row.avg_violation, 0.01, 0.15, "mean excess")
            _in(row.max_violation, 0.15, 0.55, "max excess")
            return (f"{loser}: {row.pct_pairs_violating:.1f}% / {row.avg_violation:.3f} / "
                    f"{row.max_violation:.3f} over {len(res.records(label, loser))} universes")
        return run

    def equal_rho() -> str:
        rows = [res.row("value 0.5", t) for t in ("pizza", "seminar")]
        for r in rows:
            assert r.pct_pairs_violating > 0, f"{r.task} has no violations"
        return ", ".join(f"{r.task} {r.pct_pairs_violating:.1f}%" for r in rows)

    def rtc() -> str:
        for task in ("pizza", "seminar"):
            r = res.row("randomize 0.5/0.5", task)
            assert r.pct_pairs_violating == 0 and r.max_violation == 0, f"{task} has violations"
            for rec in res.records("randomize 0.5/0.5", task):
                assert abs(rec.allocation - 0.5 * rec.baseline_allocation) <= 1e-9, rec
        losses = [np.mean([r.utility_loss for r in res.records("randomize 0.5/0.5", t)]) for t in ("pizza", "seminar")]
        return f"allocations exactly halved, utility loss {losses[0]:.3f} / {losses[1]:.3f}"

    def boost() -> str:
        out = []
        for task in ("pizza", "seminar"):
            base = np.mean([r.utility_loss for r in res.records("randomize 0.5/0.5", task)])
            loss = np.mean([r.utility_loss for r in res.records("randomize 0.5/0.5 boost 0.1", task)])
            assert loss < base, f"{task}: boost does not reduce loss"
            _in(loss, 0.30, 0.50, f"{task} loss")
            out.append(f"{task} {loss:.3f}")
        return "loss " + ", ".join(out)

    return {
        "seminar preferred": strict("strict seminar first", "seminar", "pizza"),
        "pizza preferred": strict("strict pizza first", "pizza", "seminar"),
        "equal split tie-break": equal_rho,
        "randomize-then-classify": rtc,
        "boosted randomize-then-classify": boost,
    }


def test_criterion_4_study(study):
    failures = _run_checks(4, "two-task study at 100 x 100", _study_checks(study), budget=600.0)
    assert not failures, failures


if __name__ == "__main__":
    for test in (test_criterion_1_exact_numbers, test_criterion_2_oracle_equivalence, test_criterion_3_property_suites):
        try:
            test()
        except AssertionError:
            pass
    t0 = time.perf_counter()
    res = run_competitive_experiment(load_scenario(ROOT / "scenarios" / "appendix_study.yaml"))
    print(f"study ran in {time.perf_counter() - t0:.1f}s")
    _run_checks(4, "two-task study at 100 x 100", _study_checks(res), budget=600.0)
    print("\nsummary")
    print("\n".join(SUMMARY))
    sys.exit(int(any(line.startswith("FAIL") for line in SUMMARY)))
