"""Constraint assembly: budget, boxes, storage system, alphas, posynomials.

Derived expectations are computed in-test with exact rational arithmetic
(fractions.Fraction) so they are independent of the float implementation
under test.
"""

from fractions import Fraction

import numpy as np
import pytest

from storetrade import (
    BatterySpec,
    DegenerateWeights,
    InfeasibleBoundary,
    Scheme,
    build_alphas,
    build_box_bounds,
    build_budget,
    build_instance,
    build_posynomial_constraints,
    build_storage_system,
    check_feasible,
    new_scenario,
)
from storetrade.model import EPSILON_KWH


def scenario(p, l, r=0.0, bmax=0.0, b0=0.0, bn=0.0, soc=(0.0, 1.0)):
    return new_scenario(
        p,
        l,
        BatterySpec(
            loss_rate=r,
            capacity_kwh=bmax,
            initial_charge_kwh=b0,
            final_charge_kwh=bn,
            soc_min_frac=soc[0],
            soc_max_frac=soc[1],
        ),
    )


# ---------------------------------------------------------------------------
# Budget hyperplane
# ---------------------------------------------------------------------------


def test_budget_lossless_two_periods():
    coeffs, rhs = build_budget(scenario([1, 1], [2, 3]))
    assert np.allclose(coeffs.factors, [1.0, 1.0])
    assert rhs == pytest.approx(5.0)


def test_budget_half_loss_two_periods():
    coeffs, rhs = build_budget(scenario([1, 1], [2, 3], r=0.5))
    assert np.allclose(coeffs.factors, [1.0, 2.0])
    assert rhs == pytest.approx(8.0)


def test_budget_three_periods_small_loss_exact_rational():
    # Oracle: evaluate the discounted sum with exact fractions.
    r = Fraction(1, 1000)
    one = Fraction(1) - r
    expected = Fraction(1) + Fraction(1) / one + Fraction(1) / one**2
    coeffs, rhs = build_budget(scenario([1, 1, 1], [1, 1, 1], r=0.001))
    assert rhs == pytest.approx(float(expected), rel=1e-14)
    assert coeffs.factors[0] == 1.0
    assert np.all(np.diff(coeffs.factors) > 0)


def test_budget_boundary_charges_follow_recursion():
    # Oracle: any in-window trajectory ending at the configured final
    # charge must satisfy the built equality (telescoped recursion).
    s = scenario([1, 1, 1], [2.0, 3.0, 1.5], r=0.2, bmax=2.0, b0=1.0, bn=0.5)
    coeffs, rhs = build_budget(s)
    decay = 0.8
    for levels in ([1.0, 2.0, 0.5], [0.0, 1.3, 0.5], [2.0, 0.0, 0.5]):
        prev = [1.0] + levels[:-1]
        c = [s.loads[i] + levels[i] - prev[i] * decay for i in range(3)]
        assert float(coeffs.factors @ c) == pytest.approx(rhs, rel=1e-12)


# ---------------------------------------------------------------------------
# Consumption box bounds
# ---------------------------------------------------------------------------


def test_box_bounds_unit_battery():
    lb, ub = build_box_bounds(scenario([1, 1], [1, 1], r=0.0, bmax=1.0))
    assert np.allclose(lb, [0.0, 0.0])
    assert np.allclose(ub, [2.0, 2.0])


def test_box_bounds_asymmetric_load():
    lb, ub = build_box_bounds(scenario([1, 1], [6, 1], r=0.01, bmax=5.0))
    assert np.allclose(lb, [6 - 4.95, 0.0])
    assert np.allclose(ub, [11.0, 6.0])


def test_box_bounds_zero_capacity_pins_consumption():
    lb, ub = build_box_bounds(scenario([1, 1], [1.5, 2.5]))
    assert np.allclose(lb, [1.5, 2.5])
    assert np.allclose(ub, [1.5, 2.5])


def test_box_bounds_cover_every_single_step_transition():
    # Oracle: extreme consumption from swinging the charge across the
    # usable window in one period; the box must contain all of it.
    s = scenario([1, 1], [2, 2], r=0.3, bmax=4.0, b0=2.0, bn=2.0, soc=(0.25, 0.75))
    lb, ub = build_box_bounds(s)
    b_lo, b_hi = 1.0, 3.0
    decay = 0.7
    for prev in np.linspace(b_lo, b_hi, 7):
        for cur in np.linspace(b_lo, b_hi, 7):
            c = 2.0 + cur - prev * decay
            if c >= 0:
                assert lb[0] - 1e-12 <= c <= ub[0] + 1e-12


# ---------------------------------------------------------------------------
# Storage system
# ---------------------------------------------------------------------------


def test_storage_system_lossless():
    R, a, d = build_storage_system(scenario([1, 1], [1, 1], r=0.0, bmax=1.0))
    assert np.allclose(R, [[1, 0], [1, 1]])
    assert np.allclose(a, [1, 2])
    assert np.allclose(d, [2, 3])


def test_storage_system_half_loss():
    R, a, d = build_storage_system(scenario([1, 1], [1, 1], r=0.5, bmax=2.0))
    assert np.allclose(R, [[1, 0], [0.5, 1]])
    assert np.allclose(a, [1, 1.5])
    assert np.allclose(d, [3.0, 3.5])


def test_storage_system_three_periods_rational_oracle():
    # Oracle: expand the cumulative-loss rows with exact fractions.
    one = Fraction(999, 1000)
    l = [Fraction(2), Fraction(0), Fraction(2)]
    expected = [
        l[0],
        l[0] * one + l[1],
        l[0] * one**2 + l[1] * one + l[2],
    ]
    R, a, d = build_storage_system(scenario([1, 1, 1], [2, 0, 2], r=0.001, bmax=5.0))
    assert np.allclose(a, [float(e) for e in expected], rtol=1e-14)
    assert np.allclose(d, [float(e) + 5.0 for e in expected], rtol=1e-14)
    assert np.allclose(np.diag(R), 1.0)
    assert R[0, 1] == 0.0 and R[0, 2] == 0.0 and R[1, 2] == 0.0


def test_storage_system_unreachable_final_charge():
    s = scenario([1, 1], [0, 0], r=0.0, bmax=1.0, b0=1.0, bn=0.0)
    with pytest.raises(InfeasibleBoundary):
        build_storage_system(s)


# ---------------------------------------------------------------------------
# Balancing weights
# ---------------------------------------------------------------------------


def test_alphas_symmetric_terms():
    assert np.allclose(build_alphas(scenario([1, 2], [2, 1])), [0.5, 0.5])


def test_alphas_two_period_closed_form():
    # alpha_1 = p2 l2 / (p1 l1 + p2 l2) for N = 2.
    alphas = build_alphas(scenario([1, 3], [1, 1]))
    assert np.allclose(alphas, [0.75, 0.25])


def test_alphas_three_periods():
    alphas = build_alphas(scenario([1, 1, 1], [1, 2, 3]))
    assert np.allclose(alphas, [5 / 12, 4 / 12, 3 / 12])


def test_alphas_degenerate_weights():
    with pytest.raises(DegenerateWeights):
        build_alphas(scenario([0, 0], [1, 1]))
    with pytest.raises(DegenerateWeights):
        build_alphas(scenario([1, 1], [0, 0]))


def test_alphas_sum_to_one():
    rng = np.random.default_rng(3)
    for _ in range(50):
        n = int(rng.integers(2, 9))
        s = scenario(rng.uniform(0.1, 10, n), rng.uniform(0.1, 10, n))
        assert abs(build_alphas(s).sum() - 1.0) <= 1e-12


# ---------------------------------------------------------------------------
# Posynomial constraints
# ---------------------------------------------------------------------------


def _posy(s):
    pi = build_instance(s, Scheme.BALANCE)
    return pi, build_posynomial_constraints(s, pi)


def test_posynomial_canonical_order_and_count():
    s = scenario([1, 2], [1, 1], r=0.0, bmax=1.0)
    _, cons = _posy(s)
    families = [c.family for c in cons]
    assert families == (
        ["cons_lower"] * 2 + ["cons_upper"] * 2
        + ["storage_lower"] * 2 + ["storage_upper"] * 2 + ["savings"]
    )
    assert [c.period for c in cons[:8]] == [1, 2, 1, 2, 1, 2, 1, 2]


def test_posynomial_storage_upper_row_two():
    # Second cumulative row with r=0: (c1 + c2) / (l1 + l2 + bmax) <= 1.
    s = scenario([1, 1], [1, 1], r=0.0, bmax=1.0)
    _, cons = _posy(s)
    row = [c for c in cons if c.family == "storage_upper" and c.period == 2][0]
    assert np.allclose(row.coefs, [1 / 3, 1 / 3])
    assert list(row.var_idx) == [0, 1]
    assert np.allclose(row.expos, [1.0, 1.0])
    assert row.value(np.array([1.0, 2.0])) == pytest.approx(1.0)


def test_posynomial_zero_load_floors_at_epsilon():
    s = scenario([1, 1], [0, 2], r=0.0, bmax=1.0)
    _, cons = _posy(s)
    low = [c for c in cons if c.family == "cons_lower" and c.period == 1][0]
    assert low.coefs[0] == pytest.approx(EPSILON_KWH)
    assert low.expos[0] == -1.0


def test_posynomial_savings_row():
    s = scenario([1, 2], [1, 1], r=0.0, bmax=1.0)
    _, cons = _posy(s)
    savings = cons[-1]
    assert savings.family == "savings"
    assert np.allclose(savings.coefs, [1 / 3, 2 / 3])
    assert savings.value(np.array([1.0, 1.0])) == pytest.approx(1.0)


def test_posynomial_storage_lower_cumulative_relaxation():
    # Row i floor: l_i - sum_{k<i} bmax (1-r)^k, floored at epsilon.
    s = scenario([1, 1, 1], [5, 5, 5], r=0.1, bmax=2.0)
    _, cons = _posy(s)
    rows = [c for c in cons if c.family == "storage_lower"]
    assert rows[0].coefs[0] == pytest.approx(5.0)
    assert rows[1].coefs[0] == pytest.approx(5.0 - 2.0 * 0.9)
    assert rows[2].coefs[0] == pytest.approx(5.0 - 2.0 * 0.9 - 2.0 * 0.9**2)


# ---------------------------------------------------------------------------
# Feasibility checker
# ---------------------------------------------------------------------------


def test_idle_consumption_is_feasible():
    rng = np.random.default_rng(11)
    for _ in range(20):
        n = int(rng.integers(2, 7))
        s = scenario(
            rng.uniform(0.1, 5, n), rng.uniform(0.0, 5, n),
            r=float(rng.uniform(0, 0.2)), bmax=float(rng.uniform(0, 4)),
        )
        report = check_feasible(s, s.loads, 1e-9)
        assert report.feasible, report


def test_checker_accepts_stored_transfer():
    s = scenario([1, 2], [1, 1], r=0.0, bmax=1.0)
    report = check_feasible(s, [2.0, 0.0], 1e-9)
    assert report.feasible


def test_checker_rejects_capacity_violation():
    s = scenario([1, 2], [1, 1], r=0.0, bmax=1.0)
    report = check_feasible(s, [3.0, 0.0], 1e-9)
    assert not report.feasible
    assert report.violations["storage_upper"] > 0
    # The violated family is the binding one: b_1 = 2 > b_max = 1.
    assert report.worst_family in ("storage_upper", "box_upper", "budget")


def test_checker_reports_savings_only_for_balance():
    s = scenario([1, 2], [1, 1], r=0.0, bmax=1.0)
    expensive = [0.0, 1.99999999999]  # roughly budget-feasible, costlier
    without = check_feasible(s, expensive, 1e-6)
    with_savings = check_feasible(s, expensive, 1e-6, scheme=Scheme.BALANCE)
    assert "savings" not in without.violations
    assert with_savings.violations["savings"] > 0
