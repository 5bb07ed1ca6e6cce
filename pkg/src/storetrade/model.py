"""Constraint-system assembly and feasibility checking.

Builds, from a validated scenario, the pieces both optimizers consume:
the discounted budget hyperplane, per-period consumption box bounds, the
cumulative-loss storage system ``a <= R c <= d``, the balancing weights,
and the posynomial (monomial/sum-of-monomial) constraint list used by the
geometric-programming path. A feasibility checker validates candidate
consumption vectors against the exact linear system.

Boundary charges generalize beyond the default zero/zero case: the budget
right-hand side gains ``-b0*(1-r) + bN/(1-r)^(N-1)`` and every storage
bound is shifted by the decayed initial charge. With zero boundaries and
the full state-of-charge window all formulas reduce to the classic forms.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .domain import (
    DegenerateWeights,
    InfeasibleBoundary,
    ScenarioInput,
    Scheme,
    effective_soc_bounds,
)

__all__ = [
    "EPSILON_KWH",
    "DiscountVector",
    "ObjectiveSpec",
    "ProblemInstance",
    "PosynomialConstraint",
    "FeasibilityReport",
    "build_budget",
    "build_box_bounds",
    "build_storage_system",
    "build_alphas",
    "build_posynomial_constraints",
    "build_instance",
    "check_feasible",
]

# Stand-in for the "epsilon tending to zero" floor in monomial constraints:
# far below meter resolution, keeps log-space variables finite.
EPSILON_KWH = 1e-9


@dataclass(frozen=True)
class DiscountVector:
    """Budget coefficients d_k = 1/(1-r)^(k-1), k = 1..N.

    d_1 is exactly 1 and the sequence is strictly increasing for r > 0:
    later consumption is worth more in period-1 energy terms because
    storing toward it leaks.
    """

    factors: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.factors, dtype=float).copy()
        arr.setflags(write=False)
        object.__setattr__(self, "factors", arr)

    def __len__(self) -> int:
        return len(self.factors)


@dataclass(frozen=True)
class ObjectiveSpec:
    """Objective description: price weights (cost) or alphas (balance)."""

    kind: Scheme
    weights: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.weights, dtype=float).copy()
        arr.setflags(write=False)
        object.__setattr__(self, "weights", arr)
        if self.kind is Scheme.BALANCE:
            if np.any(arr <= 0.0):
                raise DegenerateWeights("balancing weights must be positive")
            if abs(float(arr.sum()) - 1.0) > 1e-12:
                raise DegenerateWeights(
                    f"balancing weights sum to {arr.sum()!r}, expected 1"
                )


@dataclass(frozen=True)
class PosynomialConstraint:
    """One constraint ``sum_t coef_t * c[var_t]^expo_t <= 1``.

    Terms are single-variable monomials; ``family`` and ``period`` give
    each constraint a stable identity for diagnostics.
    """

    family: str
    period: int  # 1-based
    coefs: np.ndarray
    var_idx: np.ndarray
    expos: np.ndarray

    def __post_init__(self) -> None:
        for name, dtype in (("coefs", float), ("var_idx", int), ("expos", float)):
            arr = np.asarray(getattr(self, name), dtype=dtype).copy()
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def value(self, c: np.ndarray) -> float:
        """Evaluate the posynomial at a positive consumption vector."""
        return float(np.sum(self.coefs * np.asarray(c)[self.var_idx] ** self.expos))


@dataclass(frozen=True)
class ProblemInstance:
    """Fully assembled constraint system for one scenario and scheme.

    The savings row (prices and baseline cost) is attached only for the
    balancing scheme, where spending more than the do-nothing profile is
    disallowed.
    """

    scenario: ScenarioInput
    budget_lhs: DiscountVector
    budget_rhs: float
    box_lower: np.ndarray
    box_upper: np.ndarray
    storage_matrix: np.ndarray
    storage_lower: np.ndarray
    storage_upper: np.ndarray
    objective: ObjectiveSpec
    savings_weights: np.ndarray | None = None
    savings_bound: float | None = None

    def __post_init__(self) -> None:
        for name in (
            "box_lower",
            "box_upper",
            "storage_matrix",
            "storage_lower",
            "storage_upper",
        ):
            arr = np.asarray(getattr(self, name), dtype=float).copy()
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    @property
    def n(self) -> int:
        return len(self.budget_lhs)


def build_budget(s: ScenarioInput) -> tuple[DiscountVector, float]:
    """Budget hyperplane: sum_k d_k c_k = sum_k d_k l_k - b0(1-r) + bN d_N.

    The boundary terms follow from telescoping the charge recursion
    b_i = c_i - l_i + b_{i-1}(1-r); they vanish for zero boundaries.
    """
    r = s.battery.loss_rate
    n = s.n_periods
    d = (1.0 - r) ** -np.arange(n, dtype=float)
    b0 = s.battery.initial_charge_kwh
    bn = s.battery.final_charge_kwh
    rhs = float(d @ s.loads) - b0 * (1.0 - r) + bn * d[-1]
    return DiscountVector(d), rhs


def build_box_bounds(s: ScenarioInput) -> tuple[np.ndarray, np.ndarray]:
    """Per-period consumption envelope implied by one charge transition.

    lb_i = max(l_i + b_lo - b_hi(1-r), 0), ub_i = l_i + b_hi - b_lo(1-r):
    the extreme consumptions reachable by swinging the charge level
    across the usable window in a single period. Equals the classic
    ``[max(l - b_max(1-r), 0), l + b_max]`` box for the full window.
    """
    r = s.battery.loss_rate
    b_lo, b_hi = effective_soc_bounds(s.battery)
    lb = np.maximum(s.loads + b_lo - b_hi * (1.0 - r), 0.0)
    ub = s.loads + b_hi - b_lo * (1.0 - r)
    return lb, ub


def _cumulative_load(s: ScenarioInput) -> np.ndarray:
    """base_i = sum_{j<=i} l_j (1-r)^(i-j) - b0 (1-r)^i, i = 1..N."""
    r = s.battery.loss_rate
    n = s.n_periods
    decay = 1.0 - r
    base = np.empty(n)
    acc = -s.battery.initial_charge_kwh
    for i in range(n):
        acc = acc * decay + s.loads[i]
        base[i] = acc
    return base


def build_storage_system(
    s: ScenarioInput,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Cumulative storage system ``a <= R c <= d`` encoding charge bounds.

    R is lower triangular with R[i][j] = (1-r)^(i-j); row i of the system
    is the charge-window constraint b_lo <= b_{i+1} <= b_hi rewritten in
    consumption terms, with the final lower bound raised to the required
    final charge.

    Raises InfeasibleBoundary when no nonnegative consumption plan can
    drain the initial charge down to the final one (detected by forward
    interval propagation of reachable charge levels).
    """
    r = s.battery.loss_rate
    n = s.n_periods
    decay = 1.0 - r
    b_lo, b_hi = effective_soc_bounds(s.battery)
    b0 = s.battery.initial_charge_kwh
    bn = s.battery.final_charge_kwh

    idx = np.arange(n)
    expo = idx[:, None] - idx[None, :]
    R = np.where(expo >= 0, decay ** np.maximum(expo, 0), 0.0)

    base = _cumulative_load(s)
    a = base + b_lo
    a[-1] = base[-1] + max(b_lo, bn)
    d = base + b_hi

    # Reachability: lowest end-of-period charge attainable with c >= 0.
    lo = b0
    for i in range(n):
        lo = max(b_lo, lo * decay - s.loads[i])
    if lo > bn + 1e-12 * (1.0 + b_hi):
        raise InfeasibleBoundary(
            f"final charge {bn} unreachable: minimum attainable is {lo}"
        )
    return R, a, d


def build_alphas(s: ScenarioInput) -> np.ndarray:
    """Balancing weights: alpha_i = sum_{j != i} p_j l_j / ((N-1) sum_j p_j l_j).

    Each period's weight is the normalized cost of consumption in all
    other periods, so expensive periods are de-emphasized and peaks
    flatten. Weights sum to one by construction.
    """
    pl = s.prices * s.loads
    total = float(pl.sum())
    if total <= 0.0:
        raise DegenerateWeights("sum of p_i * l_i is zero; balancing weights undefined")
    n = s.n_periods
    return (total - pl) / ((n - 1) * total)


def build_posynomial_constraints(
    s: ScenarioInput, pi: ProblemInstance
) -> list[PosynomialConstraint]:
    """Posynomial form of the balancing constraints, in canonical order.

    Families, each indexed by period: consumption lower bounds (monomial),
    consumption upper bounds (monomial), storage lower bounds with the
    cumulative-capacity relaxation (monomial), storage upper bounds
    (posynomial), then the single savings constraint p.c / p.l <= 1.
    Coefficients that would be nonpositive are floored at EPSILON_KWH.
    """
    eps = EPSILON_KWH
    n = s.n_periods
    r = s.battery.loss_rate
    decay = 1.0 - r
    b_lo, b_hi = effective_soc_bounds(s.battery)
    b0 = s.battery.initial_charge_kwh
    out: list[PosynomialConstraint] = []

    one = np.ones(1)
    for i in range(n):
        coef = max(pi.box_lower[i], eps)
        out.append(
            PosynomialConstraint("cons_lower", i + 1, coef * one, [i], -one)
        )
    for i in range(n):
        denom = max(pi.box_upper[i], eps)
        out.append(
            PosynomialConstraint("cons_upper", i + 1, one / denom, [i], one)
        )
    # Storage lower bounds, relaxed against the cumulative carryable charge.
    carry = b0 * decay
    for i in range(n):
        coef = max(s.loads[i] + b_lo - carry, eps)
        out.append(
            PosynomialConstraint("storage_lower", i + 1, coef * one, [i], -one)
        )
        carry = carry * decay + b_hi * decay
    for i in range(n):
        denom = max(pi.storage_upper[i], eps)
        coefs = decay ** np.arange(i, -1, -1) / denom
        out.append(
            PosynomialConstraint(
                "storage_upper", i + 1, coefs, np.arange(i + 1), np.ones(i + 1)
            )
        )
    baseline = float(s.prices @ s.loads)
    if baseline <= 0.0:
        raise DegenerateWeights("baseline cost p.l is zero; savings constraint undefined")
    out.append(
        PosynomialConstraint(
            "savings", 0, s.prices / baseline, np.arange(n), np.ones(n)
        )
    )
    return out


def build_instance(s: ScenarioInput, scheme: Scheme) -> ProblemInstance:
    """Assemble the full constraint system for a scenario and scheme."""
    budget_lhs, budget_rhs = build_budget(s)
    lb, ub = build_box_bounds(s)
    R, a, d = build_storage_system(s)
    if scheme is Scheme.COST_MIN:
        objective = ObjectiveSpec(Scheme.COST_MIN, s.prices)
        savings_w, savings_b = None, None
    else:
        # A period carrying the entire cost gets weight zero; floor it to
        # keep the log-space objective finite (shifts the optimum by far
        # less than the solver tolerance).
        alphas = np.maximum(build_alphas(s), 1e-12)
        objective = ObjectiveSpec(Scheme.BALANCE, alphas / alphas.sum())
        savings_w = s.prices
        savings_b = float(s.prices @ s.loads)
    return ProblemInstance(
        scenario=s,
        budget_lhs=budget_lhs,
        budget_rhs=budget_rhs,
        box_lower=lb,
        box_upper=ub,
        storage_matrix=R,
        storage_lower=a,
        storage_upper=d,
        objective=objective,
        savings_weights=savings_w,
        savings_bound=savings_b,
    )


@dataclass(frozen=True)
class FeasibilityReport:
    """Normalized constraint violations of a candidate consumption vector.

    ``violations`` maps family name to its worst violation divided by
    ``1 + |bound|``; negative values mean slack. ``feasible`` is true when
    every family's worst normalized violation is at most ``tol``.
    """

    feasible: bool
    tol: float
    violations: dict[str, float]
    worst_family: str
    worst_period: int
    max_violation: float


def check_feasible(
    s: ScenarioInput,
    c,
    tol: float = 1e-8,
    scheme: Scheme | None = None,
) -> FeasibilityReport:
    """Check a consumption vector against the exact linear system.

    Validates the budget equality, box bounds and cumulative storage
    bounds; for the balancing scheme also the savings constraint. Returns
    a report rather than raising, so callers can decide severity.
    """
    c = np.asarray(c, dtype=float)
    n = s.n_periods
    pi = build_instance(s, Scheme.COST_MIN)

    def _family(values: np.ndarray, bounds: np.ndarray) -> tuple[float, int]:
        normalized = values / (1.0 + np.abs(bounds))
        k = int(np.argmax(normalized))
        return float(normalized[k]), k + 1

    rc = pi.storage_matrix @ c
    budget_gap = abs(float(pi.budget_lhs.factors @ c) - pi.budget_rhs)
    families: dict[str, tuple[float, int]] = {
        "budget": (budget_gap / (1.0 + abs(pi.budget_rhs)), 0),
        "box_lower": _family(pi.box_lower - c, pi.box_lower),
        "box_upper": _family(c - pi.box_upper, pi.box_upper),
        "storage_lower": _family(pi.storage_lower - rc, pi.storage_lower),
        "storage_upper": _family(rc - pi.storage_upper, pi.storage_upper),
        "nonneg": _family(-c, np.zeros(n)),
    }
    if scheme is Scheme.BALANCE:
        baseline = float(s.prices @ s.loads)
        cost = float(s.prices @ c)
        families["savings"] = ((cost - baseline) / (1.0 + abs(baseline)), 0)

    violations = {name: v for name, (v, _) in families.items()}
    worst_family = max(families, key=lambda k: families[k][0])
    worst_violation, worst_period = families[worst_family]
    return FeasibilityReport(
        feasible=worst_violation <= tol,
        tol=tol,
        violations=violations,
        worst_family=worst_family,
        worst_period=worst_period,
        max_violation=worst_violation,
    )
