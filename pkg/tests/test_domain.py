"""Domain type construction, validation and immutability."""

import numpy as np
import pytest

from storetrade import (
    BatterySpec,
    InvalidBattery,
    LengthMismatch,
    NegativeEntry,
    TimeGrid,
    effective_soc_bounds,
    new_scenario,
)


def test_new_scenario_accepts_valid_input():
    s = new_scenario([1, 2], [1, 1], BatterySpec(loss_rate=0.0, capacity_kwh=1.0))
    assert s.n_periods == 2
    assert np.array_equal(s.prices, [1.0, 2.0])
    assert np.array_equal(s.loads, [1.0, 1.0])


def test_new_scenario_length_mismatch():
    with pytest.raises(LengthMismatch):
        new_scenario([1, 2, 3], [1, 1], BatterySpec())


def test_loss_rate_one_rejected():
    with pytest.raises(InvalidBattery):
        BatterySpec(loss_rate=1.0, capacity_kwh=1.0)


@pytest.mark.parametrize("loss_rate", [-0.1, float("nan"), float("inf"), 2.0])
def test_bad_loss_rates_rejected(loss_rate):
    with pytest.raises(InvalidBattery):
        BatterySpec(loss_rate=loss_rate)


def test_negative_entries_rejected():
    with pytest.raises(NegativeEntry):
        new_scenario([1, -2], [1, 1], BatterySpec())
    with pytest.raises(NegativeEntry):
        new_scenario([1, 2], [1, float("nan")], BatterySpec())


def test_single_period_grid_rejected():
    with pytest.raises(LengthMismatch):
        TimeGrid(1)
    with pytest.raises(LengthMismatch):
        new_scenario([1.0], [1.0], BatterySpec())


def test_soc_window_ordering_enforced():
    with pytest.raises(InvalidBattery):
        BatterySpec(capacity_kwh=5.0, soc_min_frac=0.8, soc_max_frac=0.4)
    with pytest.raises(InvalidBattery):
        BatterySpec(capacity_kwh=5.0, soc_max_frac=1.5)


def test_boundary_charges_must_sit_in_window():
    with pytest.raises(InvalidBattery):
        BatterySpec(capacity_kwh=5.0, initial_charge_kwh=6.0)
    with pytest.raises(InvalidBattery):
        BatterySpec(
            capacity_kwh=5.0,
            initial_charge_kwh=0.5,
            soc_min_frac=0.4,
            soc_max_frac=0.8,
        )
    # Degenerate zero-capacity battery forces zero boundaries.
    BatterySpec(capacity_kwh=0.0)
    with pytest.raises(InvalidBattery):
        BatterySpec(capacity_kwh=0.0, final_charge_kwh=0.1)


def test_effective_soc_bounds_identity_window():
    assert effective_soc_bounds(BatterySpec(capacity_kwh=5.0)) == (0.0, 5.0)


def test_effective_soc_bounds_prius_pack():
    # A 4.4 kWh pack operated between 40% and 80% of capacity.
    lo, hi = effective_soc_bounds(
        BatterySpec(capacity_kwh=4.4, initial_charge_kwh=2.0, final_charge_kwh=2.0,
                    soc_min_frac=0.4, soc_max_frac=0.8)
    )
    assert lo == pytest.approx(1.76, abs=1e-12)
    assert hi == pytest.approx(3.52, abs=1e-12)


def test_effective_soc_bounds_no_battery():
    assert effective_soc_bounds(BatterySpec(capacity_kwh=0.0)) == (0.0, 0.0)


def test_scenario_arrays_immutable():
    s = new_scenario([1, 2], [1, 1], BatterySpec())
    with pytest.raises(ValueError):
        s.prices[0] = 9.0
    with pytest.raises(ValueError):
        s.loads[0] = 9.0


def test_scenario_equality_elementwise():
    bat = BatterySpec(loss_rate=0.1, capacity_kwh=2.0)
    a = new_scenario([1, 2], [3, 4], bat)
    b = new_scenario([1, 2], [3, 4], bat)
    c = new_scenario([1, 2], [3, 5], bat)
    assert a == b
    assert a != c
    assert hash(a) == hash(b)


def test_scenario_defensive_copy():
    prices = np.array([1.0, 2.0])
    s = new_scenario(prices, [1, 1], BatterySpec())
    prices[0] = 99.0
    assert s.prices[0] == 1.0
