"""Hot numeric kernels: numba-compiled loops with pure-numpy fallbacks.

The brute-force trajectory grid searches scan up to millions of candidate
battery paths per scenario, which dominates the runtime of the oracle
test suites and benchmarks. Each kernel exists twice: a scalar-loop
version compiled with ``numba.njit`` and a vectorized numpy version.

Set the environment variable ``STORETRADE_NO_NUMBA=1`` (any non-empty
value) to force the numpy path; it is also selected automatically when
numba is not importable. ``backend()`` reports which path is active.
Both paths resolve grid ties by lowest index, so results are identical.
"""

from __future__ import annotations

import math
import os

import numpy as np

__all__ = [
    "backend",
    "cost_grid_2p",
    "cost_grid_3p",
    "balance_grid_2p",
    "balance_grid_3p",
    "NUMPY_IMPLS",
    "NUMBA_IMPLS",
]

_DISABLED = bool(os.environ.get("STORETRADE_NO_NUMBA"))

try:  # pragma: no cover - exercised via STORETRADE_NO_NUMBA instead
    if _DISABLED:
        raise ImportError("numba disabled by STORETRADE_NO_NUMBA")
    from numba import njit

    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover
    _HAVE_NUMBA = False


def backend() -> str:
    """Name of the active kernel implementation: 'numba' or 'numpy'."""
    return "numba" if _HAVE_NUMBA else "numpy"


# ---------------------------------------------------------------------------
# Scalar-loop kernel bodies (numba-compiled when available). Grids are
# start + i*step for i in range(m), one grid per free charge level;
# infeasible points are skipped; ties keep the lowest-index candidate.
# ---------------------------------------------------------------------------


def _cost_grid_2p(p1, p2, l1, l2, decay, b0, bn, s1, t1, m1):
    best = math.inf
    best_b = math.nan
    for i in range(m1):
        b1 = s1 + i * t1
        c1 = l1 + b1 - b0 * decay
        c2 = l2 + bn - b1 * decay
        if c1 < 0.0 or c2 < 0.0:
            continue
        cost = p1 * c1 + p2 * c2
        if cost < best:
            best = cost
            best_b = b1
    return best, best_b


def _cost_grid_3p(p1, p2, p3, l1, l2, l3, decay, b0, bn, s1, t1, m1, s2, t2, m2):
    best = math.inf
    best_b1 = math.nan
    best_b2 = math.nan
    for i in range(m1):
        b1 = s1 + i * t1
        c1 = l1 + b1 - b0 * decay
        if c1 < 0.0:
            continue
        pc1 = p1 * c1
        for j in range(m2):
            b2 = s2 + j * t2
            c2 = l2 + b2 - b1 * decay
            c3 = l3 + bn - b2 * decay
            if c2 < 0.0 or c3 < 0.0:
                continue
            cost = pc1 + p2 * c2 + p3 * c3
            if cost < best:
                best = cost
                best_b1 = b1
                best_b2 = b2
    return best, best_b1, best_b2


def _balance_grid_2p(
    p1, p2, l1, l2, a1, a2, decay, b0, bn, s1, t1, m1, budget, c_floor
):
    best = -math.inf
    best_b = math.nan
    for i in range(m1):
        b1 = s1 + i * t1
        c1 = l1 + b1 - b0 * decay
        c2 = l2 + bn - b1 * decay
        if c1 < c_floor or c2 < c_floor:
            continue
        if p1 * c1 + p2 * c2 > budget:
            continue
        util = a1 * math.log(c1) + a2 * math.log(c2)
        if util > best:
            best = util
            best_b = b1
    return best, best_b


def _balance_grid_3p(
    p1, p2, p3, l1, l2, l3, a1, a2, a3, decay, b0, bn,
    s1, t1, m1, s2, t2, m2, budget, c_floor,
):
    best = -math.inf
    best_b1 = math.nan
    best_b2 = math.nan
    for i in range(m1):
        b1 = s1 + i * t1
        c1 = l1 + b1 - b0 * decay
        if c1 < c_floor:
            continue
        part1 = p1 * c1
        log1 = a1 * math.log(c1)
        for j in range(m2):
            b2 = s2 + j * t2
            c2 = l2 + b2 - b1 * decay
            c3 = l3 + bn - b2 * decay
            if c2 < c_floor or c3 < c_floor:
                continue
            if part1 + p2 * c2 + p3 * c3 > budget:
                continue
            util = log1 + a2 * math.log(c2) + a3 * math.log(c3)
            if util > best:
                best = util
                best_b1 = b1
                best_b2 = b2
    return best, best_b1, best_b2


# ---------------------------------------------------------------------------
# Vectorized numpy fallbacks. Same semantics; argmin/argmax keep the
# first index, matching the strict comparisons above.
# ---------------------------------------------------------------------------


def _cost_grid_2p_numpy(p1, p2, l1, l2, decay, b0, bn, s1, t1, m1):
    b1 = s1 + t1 * np.arange(m1)
    c1 = l1 + b1 - b0 * decay
    c2 = l2 + bn - b1 * decay
    cost = np.where((c1 >= 0.0) & (c2 >= 0.0), p1 * c1 + p2 * c2, np.inf)
    k = int(np.argmin(cost))
    if not np.isfinite(cost[k]):
        return math.inf, math.nan
    return float(cost[k]), float(b1[k])


def _cost_grid_3p_numpy(p1, p2, p3, l1, l2, l3, decay, b0, bn, s1, t1, m1, s2, t2, m2):
    b1 = s1 + t1 * np.arange(m1)
    b2 = s2 + t2 * np.arange(m2)
    c1 = l1 + b1 - b0 * decay
    c2 = l2 + b2[None, :] - b1[:, None] * decay  # rows: b1, cols: b2
    c3 = l3 + bn - b2 * decay
    cost = p1 * c1[:, None] + p2 * c2 + p3 * c3[None, :]
    bad = (c1[:, None] < 0.0) | (c2 < 0.0) | (c3[None, :] < 0.0)
    cost = np.where(bad, np.inf, cost)
    k = int(np.argmin(cost))
    i, j = divmod(k, m2)
    if not np.isfinite(cost[i, j]):
        return math.inf, math.nan, math.nan
    return float(cost[i, j]), float(b1[i]), float(b2[j])


def _balance_grid_2p_numpy(
    p1, p2, l1, l2, a1, a2, decay, b0, bn, s1, t1, m1, budget, c_floor
):
    b1 = s1 + t1 * np.arange(m1)
    c1 = l1 + b1 - b0 * decay
    c2 = l2 + bn - b1 * decay
    ok = (c1 >= c_floor) & (c2 >= c_floor)
    ok &= p1 * c1 + p2 * c2 <= budget
    util = np.where(
        ok,
        a1 * np.log(np.maximum(c1, c_floor)) + a2 * np.log(np.maximum(c2, c_floor)),
        -np.inf,
    )
    k = int(np.argmax(util))
    if not np.isfinite(util[k]):
        return -math.inf, math.nan
    return float(util[k]), float(b1[k])


def _balance_grid_3p_numpy(
    p1, p2, p3, l1, l2, l3, a1, a2, a3, decay, b0, bn,
    s1, t1, m1, s2, t2, m2, budget, c_floor,
):
    b1 = s1 + t1 * np.arange(m1)
    b2 = s2 + t2 * np.arange(m2)
    c1 = l1 + b1 - b0 * decay
    c2 = l2 + b2[None, :] - b1[:, None] * decay
    c3 = l3 + bn - b2 * decay
    ok = (c1[:, None] >= c_floor) & (c2 >= c_floor) & (c3[None, :] >= c_floor)
    ok &= p1 * c1[:, None] + p2 * c2 + p3 * c3[None, :] <= budget
    util = (
        a1 * np.log(np.maximum(c1[:, None], c_floor))
        + a2 * np.log(np.maximum(c2, c_floor))
        + a3 * np.log(np.maximum(c3[None, :], c_floor))
    )
    util = np.where(ok, util, -np.inf)
    k = int(np.argmax(util))
    i, j = divmod(k, m2)
    if not np.isfinite(util[i, j]):
        return -math.inf, math.nan, math.nan
    return float(util[i, j]), float(b1[i]), float(b2[j])


NUMPY_IMPLS = {
    "cost_grid_2p": _cost_grid_2p_numpy,
    "cost_grid_3p": _cost_grid_3p_numpy,
    "balance_grid_2p": _balance_grid_2p_numpy,
    "balance_grid_3p": _balance_grid_3p_numpy,
}

if _HAVE_NUMBA:
    NUMBA_IMPLS = {
        "cost_grid_2p": njit(cache=True)(_cost_grid_2p),
        "cost_grid_3p": njit(cache=True)(_cost_grid_3p),
        "balance_grid_2p": njit(cache=True)(_balance_grid_2p),
        "balance_grid_3p": njit(cache=True)(_balance_grid_3p),
    }
    _ACTIVE = NUMBA_IMPLS
else:
    NUMBA_IMPLS = {}
    _ACTIVE = NUMPY_IMPLS

cost_grid_2p = _ACTIVE["cost_grid_2p"]
cost_grid_3p = _ACTIVE["cost_grid_3p"]
balance_grid_2p = _ACTIVE["balance_grid_2p"]
balance_grid_3p = _ACTIVE["balance_grid_3p"]
