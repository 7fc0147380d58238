"""Seeding, chunked Monte Carlo and quota rounding shared across modules."""

from __future__ import annotations

from collections.abc import Callable, Hashable, Mapping
from concurrent.futures import ThreadPoolExecutor

import numpy as np

SeedLike = int | np.random.SeedSequence | np.random.Generator | None

CHUNK = 1 << 16


def as_rng(seed: SeedLike) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def _seed_sequence(seed: SeedLike) -> np.random.SeedSequence:
    if isinstance(seed, np.random.SeedSequence):
        return seed
    if isinstance(seed, np.random.Generator):
        # derive a child sequence from the generator's own stream
        return np.random.SeedSequence(seed.integers(0, 2**63 - 1, size=4).tolist())
    return np.random.SeedSequence(seed)


def chunked_sum(
    fn: Callable[[np.random.Generator, int], np.ndarray],
    trials: int,
    seed: SeedLike,
    workers: int = 1,
) -> np.ndarray:
    """Sum ``fn(rng, size)`` over fixed-size chunks with spawned seeds.

    Chunk boundaries and seeds depend only on ``trials`` and ``seed``, and
    the partial results are added in chunk order, so the total does not
    depend on ``workers``.
    """
    sizes = [CHUNK] * (trials // CHUNK)
    if trials % CHUNK:
        sizes.append(trials % CHUNK)
    seeds = _seed_sequence(seed).spawn(len(sizes))
    jobs = [(np.random.default_rng(s), k) for s, k in zip(seeds, sizes)]
    if workers > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda job: fn(*job), jobs))
    else:
        parts = [fn(*job) for job in jobs]
    total = parts[0]
    for p in parts[1:]:
        total = total + p
    return total


def largest_remainder(shares: Mapping[Hashable, float], n: int) -> dict[Hashable, int]:
    """Integer quotas proportional to ``shares`` that sum exactly to ``n``.

    Floors first, then hands the leftover units to the largest fractional
    parts; ties go to the key listed first.
    """
    keys = list(shares)
    w = np.array([float(shares[k]) for k in keys])
    if np.any(w < 0) or w.sum() <= 0:
        raise ValueError("shares must be nonnegative with a positive total")
    raw = w / w.sum() * n
    base = np.floor(raw + 1e-12).astype(int)
    left = n - int(base.sum())
    frac = raw - base
    for i in sorted(range(len(keys)), key=lambda i: (-frac[i], i))[:left]:
        base[i] += 1
    return {k: int(b) for k, b in zip(keys, base)}
