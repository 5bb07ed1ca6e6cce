"""Brute-force reference optimizers over battery-trajectory grids.

These deliberately avoid the solver machinery: feasible battery paths are
enumerated on a uniform grid over the usable charge window (one free
level for N=2, two for N=3), consumption follows directly from the charge
recursion, and the best candidate is refined once on a finer local grid.
Slow but trustworthy; used as the independent ground truth by the test
suite and as the benchmark workload.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .domain import ScenarioInput, effective_soc_bounds

__all__ = ["OracleResult", "oracle_cost_min", "oracle_balance"]

_C_FLOOR = 1e-12  # positivity floor for log-utility evaluation


@dataclass(frozen=True)
class OracleResult:
    """Best grid point found: objective, consumption, charge trajectory."""

    objective: float
    consumption: np.ndarray
    trajectory: np.ndarray


def _grid(lo: float, hi: float, step_rel: float) -> tuple[float, float, int]:
    width = hi - lo
    if width <= 0.0:
        return lo, 1.0, 1
    m = int(np.ceil(1.0 / step_rel)) + 1
    return lo, width / (m - 1), m


def _refined(lo: float, hi: float, center: float, coarse_step: float) -> tuple[float, float, int]:
    lo_f = max(lo, center - coarse_step)
    hi_f = min(hi, center + coarse_step)
    if hi_f <= lo_f:
        return lo_f, 1.0, 1
    m = 201
    return lo_f, (hi_f - lo_f) / (m - 1), m


def _consumption(s: ScenarioInput, levels: np.ndarray) -> np.ndarray:
    decay = 1.0 - s.battery.loss_rate
    prev = np.concatenate(([s.battery.initial_charge_kwh], levels[:-1]))
    return s.loads + levels - prev * decay


def oracle_cost_min(s: ScenarioInput, step_rel: float = 1e-3) -> OracleResult:
    """Exhaustive cost minimization for N in {2, 3}.

    Scans end-of-period charge levels over the usable window with relative
    step ``step_rel``, keeps candidates with nonnegative consumption, and
    refines once around the best coarse point.
    """
    n = s.n_periods
    if n not in (2, 3):
        raise ValueError(f"grid oracle supports N in {{2, 3}}, got {n}")
    decay = 1.0 - s.battery.loss_rate
    b_lo, b_hi = effective_soc_bounds(s.battery)
    b0 = s.battery.initial_charge_kwh
    bn = s.battery.final_charge_kwh
    p, l = s.prices, s.loads
    coarse = _grid(b_lo, b_hi, step_rel)

    if n == 2:
        cost, b1 = _kernels.cost_grid_2p(
            p[0], p[1], l[0], l[1], decay, b0, bn, *coarse
        )
        if np.isfinite(cost):
            cost, b1 = _kernels.cost_grid_2p(
                p[0], p[1], l[0], l[1], decay, b0, bn,
                *_refined(b_lo, b_hi, b1, coarse[1]),
            )
        levels = np.array([b1, bn])
    else:
        cost, b1, b2 = _kernels.cost_grid_3p(
            p[0], p[1], p[2], l[0], l[1], l[2], decay, b0, bn, *coarse, *coarse
        )
        if np.isfinite(cost):
            cost, b1, b2 = _kernels.cost_grid_3p(
                p[0], p[1], p[2], l[0], l[1], l[2], decay, b0, bn,
                *_refined(b_lo, b_hi, b1, coarse[1]),
                *_refined(b_lo, b_hi, b2, coarse[1]),
            )
        levels = np.array([b1, b2, bn])

    if not np.isfinite(cost):
        raise ValueError("no feasible trajectory on the oracle grid")
    return OracleResult(float(cost), _consumption(s, levels), levels)


def _balance_alphas(s: ScenarioInput) -> np.ndarray:
    pl = s.prices * s.loads
    total = float(pl.sum())
    return (total - pl) / ((s.n_periods - 1) * total)


def oracle_balance(s: ScenarioInput, step_rel: float = 1e-3) -> OracleResult:
    """Exhaustive consumption balancing for N in {2, 3}.

    Maximizes the weighted log-utility sum over the trajectory grid,
    subject to positive consumption and the no-extra-cost savings
    constraint. The reported objective is the weighted product utility.
    """
    n = s.n_periods
    if n not in (2, 3):
        raise ValueError(f"grid oracle supports N in {{2, 3}}, got {n}")
    decay = 1.0 - s.battery.loss_rate
    b_lo, b_hi = effective_soc_bounds(s.battery)
    b0 = s.battery.initial_charge_kwh
    bn = s.battery.final_charge_kwh
    p, l = s.prices, s.loads
    alphas = _balance_alphas(s)
    budget = float(p @ l) * (1.0 + 1e-12)
    coarse = _grid(b_lo, b_hi, step_rel)

    if n == 2:
        util, b1 = _kernels.balance_grid_2p(
            p[0], p[1], l[0], l[1], alphas[0], alphas[1],
            decay, b0, bn, *coarse, budget, _C_FLOOR,
        )
        if np.isfinite(util):
            util, b1 = _kernels.balance_grid_2p(
                p[0], p[1], l[0], l[1], alphas[0], alphas[1],
                decay, b0, bn, *_refined(b_lo, b_hi, b1, coarse[1]),
                budget, _C_FLOOR,
            )
        levels = np.array([b1, bn])
    else:
        util, b1, b2 = _kernels.balance_grid_3p(
            p[0], p[1], p[2], l[0], l[1], l[2],
            alphas[0], alphas[1], alphas[2],
            decay, b0, bn, *coarse, *coarse, budget, _C_FLOOR,
        )
        if np.isfinite(util):
            util, b1, b2 = _kernels.balance_grid_3p(
                p[0], p[1], p[2], l[0], l[1], l[2],
                alphas[0], alphas[1], alphas[2],
                decay, b0, bn,
                *_refined(b_lo, b_hi, b1, coarse[1]),
                *_refined(b_lo, b_hi, b2, coarse[1]),
                budget, _C_FLOOR,
            )
        levels = np.array([b1, b2, bn])

    if not np.isfinite(util):
        raise ValueError("no feasible trajectory on the oracle grid")
    return OracleResult(float(np.exp(util)), _consumption(s, levels), levels)
