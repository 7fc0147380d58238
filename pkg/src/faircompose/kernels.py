"""Hot inner loops, each in a numba flavour and a numpy flavour.

The public name (``fair_add_scan``, ``ptc_exact`` ...) is bound to one of the
two at import time according to :mod:`faircompose._jit`.  Both flavours take
identical inputs; all randomness is drawn by the caller and passed in as
arrays, so results do not depend on the backend.
"""

from __future__ import annotations

import itertools
import math

import numpy as np

from ._jit import USE_NUMBA, njit

# tie-break rule codes shared with competitive.TieBreaker
RULE_STRICT = 0
RULE_UNIFORM = 1
RULE_RHO = 2

_PAIR_TOL = 1e-12


# --------------------------------------------------------------------------
# FairAdd
# --------------------------------------------------------------------------

_SETTLE_PASSES = 4


@njit
def _settle_nb(dist_row, probs, defined, p_hat):
    # The scan is exact in real arithmetic; in floating point a later clamp
    # can leave an earlier band by an ulp.  Walk back in ulp steps.
    for _ in range(_SETTLE_PASSES):
        moved = False
        for l in range(dist_row.shape[0]):
            if not defined[l]:
                continue
            d = dist_row[l]
            while abs(p_hat - probs[l]) > d:
                p_hat = np.nextafter(p_hat, probs[l])
                moved = True
        if not moved:
            break
    return p_hat


def _settle_np(dist_row, probs, defined, p_hat):
    idx = np.flatnonzero(defined)
    for _ in range(_SETTLE_PASSES):
        moved = False
        for l in idx:
            d = dist_row[l]
            while abs(p_hat - probs[l]) > d:
                p_hat = np.nextafter(p_hat, probs[l])
                moved = True
        if not moved:
            break
    return float(p_hat)


@njit
def _fair_add_scan_nb(dist_row, probs, defined, p_t):
    p_hat = p_t
    for l in range(dist_row.shape[0]):
        if not defined[l]:
            continue
        d = dist_row[l]
        if d < probs[l] - p_hat:
            p_hat = probs[l] - d
        elif d < p_hat - probs[l]:
            p_hat = probs[l] + d
    return _settle_nb(dist_row, probs, defined, p_hat)


def _fair_add_scan_np(dist_row, probs, defined, p_t):
    p_hat = float(p_t)
    for l in np.flatnonzero(defined):
        d = dist_row[l]
        if d < probs[l] - p_hat:
            p_hat = probs[l] - d
        elif d < p_hat - probs[l]:
            p_hat = probs[l] + d
    return _settle_np(dist_row, probs, defined, p_hat)


@njit
def _build_fair_nb(dist, probs, targets, order):
    n = dist.shape[0]
    out = probs.copy()
    defined = np.empty(n, dtype=np.bool_)
    for i in range(n):
        defined[i] = not np.isnan(out[i])
    for x in order:
        if defined[x]:
            continue
        p_t = targets[x]
        if np.isnan(p_t):
            # nearest defined neighbour, lowest id on ties
            best = np.inf
            p_t = 0.0
            for l in range(n):
                if defined[l] and dist[x, l] < best:
                    best = dist[x, l]
                    p_t = out[l]
        out[x] = _fair_add_scan_nb(dist[x], out, defined, p_t)
        defined[x] = True
    return out


def _build_fair_np(dist, probs, targets, order):
    out = probs.copy()
    defined = ~np.isnan(out)
    for x in order:
        if defined[x]:
            continue
        p_t = targets[x]
        if np.isnan(p_t):
            idx = np.flatnonzero(defined)
            p_t = out[idx[np.argmin(dist[x, idx])]] if idx.size else 0.0
        out[x] = _fair_add_scan_np(dist[x], out, defined, p_t)
        defined[x] = True
    return out


# --------------------------------------------------------------------------
# PermuteThenClassify
# --------------------------------------------------------------------------

@njit
def _ptc_exact_nb(p, n_select):
    n = p.shape[0]
    n_masks = 1 << n
    weight = np.ones(n_masks)
    for m in range(n_masks):
        for u in range(n):
            if (m >> u) & 1:
                weight[m] *= p[u]
            else:
                weight[m] *= 1.0 - p[u]
    acc = np.zeros(n)
    perm = np.arange(n)
    n_perm = 0
    while True:
        n_perm += 1
        for m in range(n_masks):
            w = weight[m]
            if w == 0.0:
                continue
            slots = n_select
            for i in range(n):
                u = perm[i]
                if slots >= n - i or (m >> u) & 1:
                    acc[u] += w
                    slots -= 1
                    if slots == 0:
                        break
        # next lexicographic permutation
        i = n - 2
        while i >= 0 and perm[i] >= perm[i + 1]:
            i -= 1
        if i < 0:
            break
        j = n - 1
        while perm[j] <= perm[i]:
            j -= 1
        perm[i], perm[j] = perm[j], perm[i]
        perm[i + 1:] = perm[i + 1:][::-1].copy()
    return acc / n_perm


def _ptc_exact_np(p, n_select):
    n = p.shape[0]
    masks = np.arange(1 << n)
    bits = ((masks[:, None] >> np.arange(n)) & 1).astype(bool)
    weight = np.where(bits, p, 1.0 - p).prod(axis=1)
    acc = np.zeros(n)
    n_perm = 0
    for perm in itertools.permutations(range(n)):
        n_perm += 1
        slots = np.full(masks.size, n_select)
        for i, u in enumerate(perm):
            sel = (slots > 0) & ((slots >= n - i) | bits[:, u])
            acc[u] += weight[sel].sum()
            slots = slots - sel
    return acc / n_perm


@njit
def _ptc_monte_carlo_nb(p, n_select, orders, coins):
    trials, n = orders.shape
    counts = np.zeros(n, dtype=np.int64)
    for t in range(trials):
        slots = n_select
        for i in range(n):
            u = orders[t, i]
            if slots >= n - i or coins[t, i] < p[u]:
                counts[u] += 1
                slots -= 1
                if slots == 0:
                    break
    return counts


def _ptc_monte_carlo_np(p, n_select, orders, coins):
    trials, n = orders.shape
    counts = np.zeros(n, dtype=np.int64)
    slots = np.full(trials, n_select)
    for i in range(n):
        u = orders[:, i]
        sel = (slots > 0) & ((slots >= n - i) | (coins[:, i] < p[u]))
        counts += np.bincount(u[sel], minlength=n)
        slots = slots - sel
    return counts


# --------------------------------------------------------------------------
# Task-competitive composition (built-in tie-break rules)
# --------------------------------------------------------------------------

@njit
def _competitive_nb(P, rule, order, rho):
    n, k = P.shape
    out = np.zeros((n, k))
    for u in range(n):
        for m in range(1, 1 << k):
            w = 1.0
            cnt = 0
            for j in range(k):
                if (m >> j) & 1:
                    w *= P[u, j]
                    cnt += 1
                else:
                    w *= 1.0 - P[u, j]
            if w == 0.0:
                continue
            if rule == 0:
                for r in range(k):
                    j = order[u, r]
                    if (m >> j) & 1:
                        out[u, j] += w
                        break
            elif rule == 1:
                for j in range(k):
                    if (m >> j) & 1:
                        out[u, j] += w / cnt
            else:
                if m == 3:
                    out[u, 0] += w * rho[u]
                    out[u, 1] += w * (1.0 - rho[u])
                elif m == 1:
                    out[u, 0] += w
                else:
                    out[u, 1] += w
    return out


def _competitive_np(P, rule, order, rho):
    n, k = P.shape
    out = np.zeros((n, k))
    for m in range(1, 1 << k):
        bits = np.array([(m >> j) & 1 for j in range(k)], dtype=bool)
        w = np.where(bits, P, 1.0 - P).prod(axis=1)
        if rule == RULE_STRICT:
            # first set bit in each element's ranking
            ranked = bits[order]
            first = order[np.arange(n), ranked.argmax(axis=1)]
            out[np.arange(n), first] += w
        elif rule == RULE_UNIFORM:
            out[:, bits] += (w / bits.sum())[:, None]
        else:
            if m == 3:
                out[:, 0] += w * rho
                out[:, 1] += w * (1.0 - rho)
            elif m == 1:
                out[:, 0] += w
            else:
                out[:, 1] += w
    return out


# --------------------------------------------------------------------------
# Two-task violation witness search for one pair (u, v)
# --------------------------------------------------------------------------

@njit
def _witness_nb(d1, d2, rho_u, rho_v, cand_p, cand_q, task):
    best = -np.inf
    res = np.zeros(5)
    for a in range(cand_p.shape[0]):
        pu = cand_p[a]
        for b in range(cand_p.shape[0]):
            pv = cand_p[b]
            if abs(pu - pv) > d1 + _PAIR_TOL:
                continue
            for c in range(cand_q.shape[0]):
                qu = cand_q[c]
                for e in range(cand_q.shape[0]):
                    qv = cand_q[e]
                    if abs(qu - qv) > d2 + _PAIR_TOL:
                        continue
                    tu = pu * (1.0 - qu) + pu * qu * rho_u
                    tv = pv * (1.0 - qv) + pv * qv * rho_v
                    su = qu * (1.0 - pu) + pu * qu * (1.0 - rho_u)
                    sv = qv * (1.0 - pv) + pv * qv * (1.0 - rho_v)
                    x1 = abs(tu - tv) - d1
                    x2 = abs(su - sv) - d2
                    if task == 0:
                        obj = x1
                    elif task == 1:
                        obj = x2
                    else:
                        obj = max(x1, x2)
                    if obj > best:
                        best = obj
                        res[0] = obj
                        res[1] = pu
                        res[2] = pv
                        res[3] = qu
                        res[4] = qv
    return res


def _witness_np(d1, d2, rho_u, rho_v, cand_p, cand_q, task):
    qu, qv = np.meshgrid(cand_q, cand_q, indexing="ij")
    keep = np.abs(qu - qv) <= d2 + _PAIR_TOL
    qu, qv = qu[keep], qv[keep]
    best = -np.inf
    res = np.zeros(5)
    for pu in cand_p:
        for pv in cand_p:
            if abs(pu - pv) > d1 + _PAIR_TOL:
                continue
            tu = pu * (1.0 - qu) + pu * qu * rho_u
            tv = pv * (1.0 - qv) + pv * qv * rho_v
            su = qu * (1.0 - pu) + pu * qu * (1.0 - rho_u)
            sv = qv * (1.0 - pv) + pv * qv * (1.0 - rho_v)
            x1 = np.abs(tu - tv) - d1
            x2 = np.abs(su - sv) - d2
            obj = x1 if task == 0 else x2 if task == 1 else np.maximum(x1, x2)
            i = int(np.argmax(obj))
            if obj[i] > best:
                best = obj[i]
                res[:] = (obj[i], pu, pv, qu[i], qv[i])
    return res


# --------------------------------------------------------------------------
# Dispatch
# --------------------------------------------------------------------------

NUMBA_IMPLS = {
    "fair_add_scan": _fair_add_scan_nb,
    "build_fair": _build_fair_nb,
    "ptc_exact": _ptc_exact_nb,
    "ptc_monte_carlo": _ptc_monte_carlo_nb,
    "competitive": _competitive_nb,
    "witness": _witness_nb,
}
NUMPY_IMPLS = {
    "fair_add_scan": _fair_add_scan_np,
    "build_fair": _build_fair_np,
    "ptc_exact": _ptc_exact_np,
    "ptc_monte_carlo": _ptc_monte_carlo_np,
    "competitive": _competitive_np,
    "witness": _witness_np,
}
_ACTIVE = NUMBA_IMPLS if USE_NUMBA else NUMPY_IMPLS

fair_add_scan = _ACTIVE["fair_add_scan"]
build_fair = _ACTIVE["build_fair"]
ptc_exact = _ACTIVE["ptc_exact"]
ptc_monte_carlo = _ACTIVE["ptc_monte_carlo"]
competitive = _ACTIVE["competitive"]
witness = _ACTIVE["witness"]


def n_choose(n: int, k: int) -> int:
    if k < 0 or k > n:
        return 0
    return math.comb(n, k)
