"""Post-solve analysis: trajectories, metrics, storage profitability.

Everything here is a pure function of a scenario plus a consumption
vector or charge path; nothing depends on how the solution was obtained.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .domain import BoundaryMismatch, ScenarioInput, Scheme

__all__ = [
    "ReportMetrics",
    "ArbitrageFlag",
    "recover_trajectory",
    "compute_metrics",
    "arbitrage_conditions",
    "savings_decomposition",
]


@dataclass(frozen=True)
class ReportMetrics:
    """Uniformity and savings summary of a consumption profile.

    ``par`` is peak over arithmetic mean (1 for a perfectly uniform
    profile), ``variance`` the population variance in kWh^2, and
    ``savings_pct`` the percent cost reduction against the do-nothing
    baseline p.l. A zero-mean profile is reported as PAR 1 with the
    ``degenerate`` flag set.
    """

    par: float
    variance: float
    baseline_cost: float
    optimized_cost: float
    savings_pct: float
    scheme: Scheme | None = None
    degenerate: bool = False


@dataclass(frozen=True)
class ArbitrageFlag:
    """Profitability test for storing in one period to use in a later one.

    Storage carried from ``from_period`` to ``to_period`` (1-based) pays
    off exactly when the price ratio does not exceed the compounded
    storage efficiency threshold.
    """

    from_period: int
    to_period: int
    price_ratio: float
    threshold: float
    beneficial: bool


def recover_trajectory(s: ScenarioInput, c) -> np.ndarray:
    """End-of-period charge levels b_1..b_N implied by a consumption plan.

    Applies b_i = c_i - l_i + b_{i-1} (1-r) from the configured initial
    charge. Bounds are not enforced here; validate with check_feasible.
    """
    c = np.asarray(c, dtype=float)
    if c.shape != (s.n_periods,):
        raise ValueError(f"consumption must have shape ({s.n_periods},), got {c.shape}")
    decay = 1.0 - s.battery.loss_rate
    levels = np.empty(s.n_periods)
    prev = s.battery.initial_charge_kwh
    for i in range(s.n_periods):
        prev = c[i] - s.loads[i] + prev * decay
        levels[i] = prev
    return levels


def compute_metrics(
    s: ScenarioInput, c, scheme: Scheme | None = None
) -> ReportMetrics:
    """PAR, variance and cost savings of a consumption profile."""
    c = np.asarray(c, dtype=float)
    mean = float(c.mean())
    degenerate = mean <= 0.0
    par = 1.0 if degenerate else float(c.max()) / mean
    variance = float(np.mean((c - mean) ** 2))
    baseline = float(s.prices @ s.loads)
    optimized = float(s.prices @ c)
    if baseline > 0.0:
        savings_pct = 100.0 * (1.0 - optimized / baseline)
    else:
        savings_pct = 0.0
        degenerate = True
    return ReportMetrics(
        par=par,
        variance=variance,
        baseline_cost=baseline,
        optimized_cost=optimized,
        savings_pct=savings_pct,
        scheme=scheme,
        degenerate=degenerate,
    )


def arbitrage_conditions(s: ScenarioInput) -> list[ArbitrageFlag]:
    """Profitability flags for every (store, use) period pair.

    Carrying energy from period i to period i+k is beneficial iff
    p_i / p_{i+k} <= (1-r)^k. A zero use-period price makes the ratio
    infinite unless the store-period price is also zero.
    """
    p = s.prices
    decay = 1.0 - s.battery.loss_rate
    flags = []
    n = s.n_periods
    for i in range(n - 1):
        for k in range(1, n - i):
            j = i + k
            if p[j] > 0.0:
                ratio = float(p[i] / p[j])
            else:
                ratio = 0.0 if p[i] == 0.0 else float("inf")
            threshold = decay**k
            flags.append(
                ArbitrageFlag(
                    from_period=i + 1,
                    to_period=j + 1,
                    price_ratio=ratio,
                    threshold=threshold,
                    beneficial=ratio <= threshold,
                )
            )
    return flags


def savings_decomposition(s: ScenarioInput, b) -> tuple[np.ndarray, float]:
    """Per-period marginal storage values m_i = b_i (p_{i+1}(1-r) - p_i).

    Valid only for zero boundary charges, where the telescoped cost
    saving equals the price-weighted consumption reduction; the identity
    against p.(l - c) is checked internally before returning.

    Returns the N-1 marginal terms and their sum S.
    """
    if s.battery.initial_charge_kwh != 0.0 or s.battery.final_charge_kwh != 0.0:
        raise BoundaryMismatch(
            "savings decomposition requires zero initial and final charges"
        )
    b = np.asarray(b, dtype=float)
    if b.shape != (s.n_periods,):
        raise ValueError(f"trajectory must have shape ({s.n_periods},), got {b.shape}")
    decay = 1.0 - s.battery.loss_rate
    p = s.prices
    terms = b[:-1] * (p[1:] * decay - p[:-1])
    total = float(terms.sum())

    # With b_0 = 0 the telescoped sum equals p.(l - c) + p_N b_N exactly;
    # b_N carries at most solver-sized residue here.
    prev = np.concatenate(([0.0], b[:-1]))
    c = s.loads + b - prev * decay
    direct = float(p @ (s.loads - c)) + float(p[-1] * b[-1])
    scale = 1.0 + abs(direct) + abs(total)
    if abs(total - direct) > 1e-10 * scale:
        raise AssertionError(
            f"savings identity violated: telescoped {total} vs direct {direct}"
        )
    return terms, total
