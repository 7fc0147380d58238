"""Choosing exactly ``n`` of ``N`` elements with 1-Lipschitz selection odds.

Two offline mechanisms are provided, each with an exact probability
calculator: a permute-then-classify scan and a weighted subset sampler.
Online variants cover random-order and adversarial streams.

End condition of the scan: before element ``i`` (0-based) of the shuffled
list is classified, if the open slots are at least the number of elements
left including this one, it is taken without a coin flip.  This is what
makes the output size exactly ``n``.
"""

from __future__ import annotations

import itertools
import math
from collections.abc import Hashable, Iterable, Mapping, Sequence
from dataclasses import dataclass
from enum import Enum

import numpy as np

from . import kernels
from ._util import SeedLike, as_rng, chunked_sum, largest_remainder
from .core import InfeasibleError, SoftClassifier, as_probs

EXACT_PTC_MAX_N = 8


def _check_n(n: int, size: int) -> None:
    if not 1 <= n <= size:
        raise ValueError(f"cohort size must be between 1 and {size}")


def _scan(p: np.ndarray, n: int, order: Sequence[int], coins: np.ndarray) -> np.ndarray:
    """One pass of the scan over ``order`` with pre-drawn ``coins``."""
    total = len(order)
    chosen = []
    for i, u in enumerate(order):
        slots = n - len(chosen)
        if slots == 0:
            break
        if slots >= total - i or coins[i] < p[u]:
            chosen.append(int(u))
    return np.array(sorted(chosen), dtype=np.int64)


def permute_then_classify(c: SoftClassifier | np.ndarray, n: int, rng: SeedLike = None) -> np.ndarray:
    """Shuffle, then accept each element with its own probability until full.

    Returns the ``n`` selected ids in ascending order.
    """
    p = as_probs(c)
    _check_n(n, p.size)
    gen = as_rng(rng)
    order = gen.permutation(p.size)
    coins = gen.random(p.size)
    return _scan(p, n, order, coins)


@dataclass(frozen=True)
class SelectionEstimate:
    """Selection probability per element.

    ``stderr`` is zero and ``trials`` is ``None`` for exact results.
    """

    probs: np.ndarray
    stderr: np.ndarray
    trials: int | None
    method: str

    def __getitem__(self, u: int) -> float:
        return float(self.probs[u])

    def within(self, reference: np.ndarray, sigmas: float = 3.0) -> bool:
        """Whether every element lies within ``sigmas`` standard errors."""
        tol = sigmas * np.maximum(self.stderr, 1e-12)
        return bool(np.all(np.abs(self.probs - np.asarray(reference)) <= tol))


def _ptc_mc_chunk(p: np.ndarray, n: int):
    def run(rng: np.random.Generator, size: int) -> np.ndarray:
        orders = np.argsort(rng.random((size, p.size)), axis=1).astype(np.int64)
        coins = rng.random((size, p.size))
        return kernels.ptc_monte_carlo(p, n, orders, coins)

    return run


def ptc_selection_probability(
    c: SoftClassifier | np.ndarray,
    n: int,
    method: str = "exact",
    trials: int = 100_000,
    seed: SeedLike = 0,
    workers: int = 1,
) -> SelectionEstimate:
    """Pr[u selected] for every ``u`` under :func:`permute_then_classify`.

    ``exact`` enumerates every permutation and coin pattern (``N <= 8``);
    ``montecarlo`` simulates ``trials`` runs and reports binomial standard
    errors.
    """
    p = np.ascontiguousarray(as_probs(c), dtype=float)
    _check_n(n, p.size)
    if method == "exact":
        if p.size > EXACT_PTC_MAX_N:
            raise ValueError(f"exact enumeration supports at most {EXACT_PTC_MAX_N} elements")
        # summing N! terms can drift an ulp past 1
        probs = np.clip(kernels.ptc_exact(p, n), 0.0, 1.0)
        return SelectionEstimate(probs, np.zeros_like(probs), None, "exact")
    if method == "montecarlo":
        counts = chunked_sum(_ptc_mc_chunk(p, n), trials, seed, workers)
        est = counts / trials
        se = np.sqrt(est * (1.0 - est) / trials)
        return SelectionEstimate(est, se, trials, "montecarlo")
    raise ValueError(f"unknown method {method!r}")


# --------------------------------------------------------------------------
# Weighted sampling
# --------------------------------------------------------------------------

def _ws_inputs(c: SoftClassifier | np.ndarray, n: int) -> tuple[np.ndarray, float]:
    p = as_probs(c)
    _check_n(n, p.size)
    s = float(p.sum())
    if s <= 0:
        raise ValueError("weighted sampling needs at least one positive probability")
    return p, s


def weighted_sampling(c: SoftClassifier | np.ndarray, n: int, rng: SeedLike = None) -> np.ndarray:
    """Draw an ``n``-subset with probability proportional to its total weight.

    A set's weight is the sum of its members' probabilities.  Sampling an
    anchor ``x`` with odds ``p_x / S`` and then ``n - 1`` others uniformly
    gives each set ``l`` probability
    ``sum_{x in l} p_x / (S * C(N-1, n-1))``, which is exactly its weight
    over the total weight of all sets, so no enumeration is needed.
    """
    p, s = _ws_inputs(c, n)
    gen = as_rng(rng)
    anchor = int(gen.choice(p.size, p=p / s))
    rest = np.delete(np.arange(p.size), anchor)
    others = gen.choice(rest, size=n - 1, replace=False)
    return np.sort(np.concatenate([[anchor], others])).astype(np.int64)


def weighted_sampling_many(
    c: SoftClassifier | np.ndarray, n: int, draws: int, rng: SeedLike = None
) -> np.ndarray:
    """``draws`` independent samples as a ``(draws, n)`` array of sorted ids."""
    p, s = _ws_inputs(c, n)
    gen = as_rng(rng)
    anchors = gen.choice(p.size, size=draws, p=p / s)
    keys = gen.random((draws, p.size))
    # the anchor sorts first, the n-1 smallest other keys follow
    keys[np.arange(draws), anchors] = -1.0
    picked = np.argpartition(keys, n - 1, axis=1)[:, :n] if n < p.size else np.tile(np.arange(p.size), (draws, 1))
    return np.sort(picked, axis=1).astype(np.int64)


def ws_set_probabilities(c: SoftClassifier | np.ndarray, n: int) -> dict[tuple[int, ...], float]:
    """Enumerated ``{subset: weight / total}`` over every ``n``-subset."""
    p, _ = _ws_inputs(c, n)
    sets = list(itertools.combinations(range(p.size), n))
    w = np.array([p[list(s)].sum() for s in sets])
    return dict(zip(sets, (w / w.sum()).tolist()))


def ws_selection_probability(c: SoftClassifier | np.ndarray, n: int) -> np.ndarray:
    """Closed-form Pr[u selected] under :func:`weighted_sampling`.

    A set containing ``u`` either uses ``u``'s own weight (``C(N-1, n-1)``
    such sets) or another member's (each other element shares
    ``C(N-2, n-2)`` sets with ``u``).
    """
    p, s = _ws_inputs(c, n)
    size = p.size
    own = math.comb(size - 1, n - 1)
    shared = math.comb(size - 2, n - 2) if n >= 2 else 0
    return np.clip((own * p + shared * (s - p)) / (own * s), 0.0, 1.0)


def ws_pairwise_coefficient(size: int, n: int, total: float) -> float:
    """Factor ``k`` with ``|Pr[u] - Pr[v]| = k |p_u - p_v|``.

    Equals ``C(N-2, n-1) / eta`` where ``eta = C(N-1, n-1) * S`` is the sum
    of all set weights.
    """
    if total <= 0:
        raise ValueError("total weight must be positive")
    if size < 2:
        return 0.0
    eta = math.comb(size - 1, n - 1) * total
    return math.comb(size - 2, n - 1) / eta


@dataclass(frozen=True)
class WSPrecondition:
    """Sufficient conditions for the weighted sampler to be fair.

    ``statement_form``: mean probability is at least ``1/N``.
    ``proof_form``: mean set weight ``n S / N`` is at least ``n / N``.
    Both reduce to ``S >= 1``.  ``tight`` is the exact condition
    ``S >= (N - n) / (N - 1)``, i.e. pairwise coefficient at most 1.
    """

    statement_form: bool
    proof_form: bool
    tight: bool
    total: float
    mean_probability: float
    mean_set_weight: float
    coefficient: float

    @property
    def forms_agree(self) -> bool:
        return self.statement_form == self.proof_form

    @property
    def ok(self) -> bool:
        return self.statement_form

    def __bool__(self) -> bool:
        return self.ok


_PRECOND_TOL = 1e-12


def check_ws_precondition(c: SoftClassifier | np.ndarray, n: int) -> WSPrecondition:
    p = as_probs(c)
    _check_n(n, p.size)
    size = p.size
    s = float(p.sum())
    mean_p = s / size
    mean_w = n * s / size
    coef = ws_pairwise_coefficient(size, n, s) if s > 0 else math.inf
    return WSPrecondition(
        statement_form=mean_p >= 1.0 / size - _PRECOND_TOL,
        proof_form=mean_w >= n / size - _PRECOND_TOL,
        tight=coef <= 1.0 + _PRECOND_TOL,
        total=s,
        mean_probability=mean_p,
        mean_set_weight=mean_w,
        coefficient=coef,
    )


# --------------------------------------------------------------------------
# Online selection
# --------------------------------------------------------------------------

class CohortMode(str, Enum):
    OFFLINE = "offline"
    RANDOM_ORDER = "online_random_order"
    ADVERSARIAL_KNOWN_LENGTH = "online_adversarial_known_length"
    ADVERSARIAL_UNKNOWN_LENGTH = "online_adversarial_unknown_length"


@dataclass(frozen=True)
class CohortSpec:
    n: int
    mode: CohortMode = CohortMode.OFFLINE

    def __post_init__(self):
        object.__setattr__(self, "mode", CohortMode(self.mode))
        if self.n < 1:
            raise ValueError("cohort size must be positive")


def online_cohort(
    spec: CohortSpec,
    c: SoftClassifier | np.ndarray,
    stream: Iterable[int] | None = None,
    rng: SeedLike = None,
    length: int | None = None,
) -> np.ndarray:
    """Select ``spec.n`` elements, deciding on each as it arrives.

    ``stream`` yields element ids (default ``0..N-1``).  Random-order streams
    run the scan directly on the arrival order, trusting it to be uniformly
    shuffled.  For adversarial streams of known ``length`` every element is
    accepted with probability exactly ``n / length`` via a uniformly random
    weight-``n`` indicator string drawn up front; this is fair but ignores
    the classifier.  Adversarial streams of unknown length have no fair
    solution and raise :class:`InfeasibleError`.
    """
    p = as_probs(c)
    n = spec.n
    gen = as_rng(rng)
    if spec.mode is CohortMode.ADVERSARIAL_UNKNOWN_LENGTH:
        raise InfeasibleError(
            "no online cohort selection rule is individually fair for adversarially "
            "ordered streams of unknown length"
        )
    if spec.mode is CohortMode.OFFLINE:
        return permute_then_classify(p, n, gen)
    items = list(range(p.size) if stream is None else stream)
    total = len(items) if length is None else int(length)
    if total != len(items):
        raise ValueError("stream length does not match the declared length")
    _check_n(n, total)
    if spec.mode is CohortMode.ADVERSARIAL_KNOWN_LENGTH:
        accept = np.zeros(total, dtype=bool)
        accept[gen.choice(total, size=n, replace=False)] = True
        return np.sort(np.array([u for u, a in zip(items, accept) if a], dtype=np.int64))
    coins = gen.random(total)
    return _scan(p, n, items, coins)


@dataclass(frozen=True)
class QuotaSelection:
    """Result of quota-based selection.

    Meets statistical parity by construction.  It is not individually fair:
    an adversary controlling arrival order decides which members of each
    group fill the quota.
    """

    selected: np.ndarray
    quotas: dict[Hashable, int]
    individually_fair: bool = False
    note: str = "quota filled in arrival order; an adversarial order can pick the best of one group and the worst of another"


def statistical_parity_online(
    stream: Iterable[tuple[int, Hashable]], proportions: Mapping[Hashable, float], n: int
) -> QuotaSelection:
    """Take the first arrivals from each group until its quota is met.

    Quotas are ``proportions[a] * n`` rounded by largest remainder so they
    sum to ``n``.  Raises :class:`InfeasibleError` if the stream ends with a
    quota unfilled.
    """
    quotas = largest_remainder(proportions, n)
    taken = {a: 0 for a in quotas}
    chosen: list[int] = []
    for u, a in stream:
        if a in taken and taken[a] < quotas[a]:
            taken[a] += 1
            chosen.append(int(u))
            if len(chosen) == n:
                break
    short = {a: quotas[a] - taken[a] for a in quotas if taken[a] < quotas[a]}
    if short:
        raise InfeasibleError(f"stream ended before quotas were met: {short}")
    return QuotaSelection(np.array(chosen, dtype=np.int64), quotas)
