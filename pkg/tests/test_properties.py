"""Randomised invariants driven by hypothesis."""

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from faircompose import (
    GroupStructure,
    SoftClassifier,
    TaskMetric,
    TieBreaker,
    audit_conditional_parity,
    audit_individual_fairness,
    build_fair_classifier,
    compose_and,
    compose_competitive,
    compose_or,
    compose_threshold,
    ptc_selection_probability,
    randomize_then_classify,
    ws_selection_probability,
)

probs = st.floats(0.0, 1.0, allow_nan=False)


def prob_vectors(n):
    return arrays(np.float64, n, elements=probs)


@st.composite
def line_metric_and_targets(draw):
    n = draw(st.integers(1, 10))
    points = draw(arrays(np.int64, n, elements=st.integers(0, 1024))) / 1024
    targets = draw(prob_vectors(n))
    order = draw(st.permutations(list(range(n))))
    return TaskMetric.abs_diff(points), targets, order


@given(line_metric_and_targets())
@settings(max_examples=200, deadline=None)
def test_build_is_fair_in_any_order(case):
    m, targets, order = case
    c = build_fair_classifier(m, targets, order)
    assert audit_individual_fairness(m, c, 1e-9).is_fair


@st.composite
def classifier_stack(draw, max_k=5, max_n=6):
    k = draw(st.integers(1, max_k))
    n = draw(st.integers(1, max_n))
    return draw(arrays(np.float64, (k, n), elements=probs))


@given(classifier_stack())
@settings(max_examples=200, deadline=None)
def test_threshold_endpoints_match_or_and(P):
    k = P.shape[0]
    np.testing.assert_allclose(compose_threshold(P, 1), compose_or(P), atol=1e-12)
    np.testing.assert_allclose(compose_threshold(P, k), compose_and(P), atol=1e-12)


@given(classifier_stack())
@settings(max_examples=200, deadline=None)
def test_or_ignores_order_and_dominates_parts(P):
    q = compose_or(P)
    np.testing.assert_allclose(q, compose_or(P[::-1]), atol=1e-12)
    assert np.all(q >= P.max(axis=0) - 1e-12)
    assert np.all(q <= 1.0)


@given(classifier_stack(max_k=3), st.data())
@settings(max_examples=200, deadline=None)
def test_competitive_conserves_any_positive(P, data):
    k = P.shape[0]
    order = data.draw(st.permutations(list(range(k))))
    so = compose_competitive(list(P), TieBreaker.strict_order(order))
    np.testing.assert_allclose(so.probs.sum(axis=1), compose_or(P), atol=1e-12)


@st.composite
def grouped_parity_pair(draw):
    n = draw(st.integers(2, 10))
    attrs = draw(arrays(np.int64, n, elements=st.integers(0, 1)))
    strata = draw(arrays(np.int64, n, elements=st.integers(0, 2)))
    values = draw(st.lists(probs, min_size=3, max_size=3))
    other = draw(prob_vectors(n))
    x = draw(st.floats(0.0, 1.0))
    return GroupStructure(attrs, strata), SoftClassifier([values[z] for z in strata]), SoftClassifier(other), x


@given(grouped_parity_pair())
@settings(max_examples=200, deadline=None)
def test_randomize_then_classify_keeps_group_parity(case):
    g, fair, other, x = case
    assert audit_conditional_parity(g, fair, 1e-9).is_fair
    so = randomize_then_classify([fair, other], [x, 1.0 - x])
    assert audit_conditional_parity(g, so.task(0), 1e-9).is_fair
    np.testing.assert_allclose(so.task(0), x * fair.p, atol=1e-12)


@given(st.integers(1, 6).flatmap(lambda n: st.tuples(prob_vectors(n), st.integers(1, n))))
@settings(max_examples=150, deadline=None)
def test_cohort_scan_fills_exactly_n_and_respects_order(case):
    p, n = case
    sel = ptc_selection_probability(p, n).probs
    assert abs(sel.sum() - n) <= 1e-9
    order = np.argsort(p, kind="stable")
    assert np.all(np.diff(sel[order]) >= -1e-12)


@given(st.integers(1, 8).flatmap(lambda n: st.tuples(
    arrays(np.float64, n, elements=st.floats(0.01, 1.0)), st.integers(1, n))))
@settings(max_examples=150, deadline=None)
def test_weighted_sampling_selects_exactly_n(case):
    p, n = case
    sel = ws_selection_probability(p, n)
    assert abs(sel.sum() - n) <= 1e-9
    # larger probability never means smaller selection chance
    order = np.argsort(p, kind="stable")
    assert np.all(np.diff(sel[order]) >= -1e-12)
