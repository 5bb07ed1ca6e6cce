"""Core domain types: time grid, battery physics, scenario data, solutions.

Units are fixed across the package: energy in kWh, prices in currency
units per kWh. All types are immutable after construction and validate
their invariants eagerly, so downstream code never re-checks them.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "StoretradeError",
    "LengthMismatch",
    "NegativeEntry",
    "InvalidBattery",
    "DegenerateWeights",
    "InfeasibleBoundary",
    "BoundaryMismatch",
    "Scheme",
    "TimeGrid",
    "BatterySpec",
    "ScenarioInput",
    "Solution",
    "new_scenario",
    "effective_soc_bounds",
]


class StoretradeError(ValueError):
    """Base class for all validation and modeling errors."""


class LengthMismatch(StoretradeError):
    """Paired vectors do not share a common length."""


class NegativeEntry(StoretradeError):
    """A price or load entry is negative or non-finite."""


class InvalidBattery(StoretradeError):
    """A battery parameter violates its physical range."""


class DegenerateWeights(StoretradeError):
    """All price-weighted loads are zero; balancing weights undefined."""


class InfeasibleBoundary(StoretradeError):
    """The required final charge cannot be reached from the initial charge."""


class BoundaryMismatch(StoretradeError):
    """An operation requiring zero boundary charges was given nonzero ones."""


class Scheme(enum.Enum):
    """Which notion of optimality a solution targets."""

    COST_MIN = "cost"
    BALANCE = "balance"


@dataclass(frozen=True)
class TimeGrid:
    """An N-period day-ahead horizon, periods indexed 1..N.

    At least two periods are required: trading consumption across time
    is meaningless on a single period.
    """

    n_periods: int
    period_labels: tuple[str, ...] | None = None

    def __post_init__(self) -> None:
        if self.n_periods < 2:
            raise LengthMismatch(
                f"horizon needs at least 2 periods, got {self.n_periods}"
            )
        if self.period_labels is not None and len(self.period_labels) != self.n_periods:
            raise LengthMismatch(
                f"{len(self.period_labels)} labels for {self.n_periods} periods"
            )


@dataclass(frozen=True)
class BatterySpec:
    """Physical battery parameters.

    ``loss_rate`` is the per-period fraction of stored energy lost, so
    ``1 - loss_rate`` is the per-period storage efficiency. The usable
    window is ``[soc_min_frac, soc_max_frac] * capacity_kwh``; boundary
    charges must sit inside it.
    """

    loss_rate: float = 0.0
    capacity_kwh: float = 0.0
    initial_charge_kwh: float = 0.0
    final_charge_kwh: float = 0.0
    soc_min_frac: float = 0.0
    soc_max_frac: float = 1.0

    def __post_init__(self) -> None:
        r = self.loss_rate
        if not np.isfinite(r) or r < 0.0 or r >= 1.0:
            raise InvalidBattery(f"loss_rate must be in [0, 1), got {r}")
        if not np.isfinite(self.capacity_kwh) or self.capacity_kwh < 0.0:
            raise InvalidBattery(f"capacity_kwh must be >= 0, got {self.capacity_kwh}")
        if not (0.0 <= self.soc_min_frac <= self.soc_max_frac <= 1.0):
            raise InvalidBattery(
                "soc window must satisfy 0 <= soc_min <= soc_max <= 1, got "
                f"[{self.soc_min_frac}, {self.soc_max_frac}]"
            )
        b_lo, b_hi = effective_soc_bounds(self)
        for name, value in (
            ("initial_charge_kwh", self.initial_charge_kwh),
            ("final_charge_kwh", self.final_charge_kwh),
        ):
            if not np.isfinite(value) or value < 0.0:
                raise InvalidBattery(f"{name} must be >= 0, got {value}")
            if value < b_lo - 1e-12 or value > b_hi + 1e-12:
                raise InvalidBattery(
                    f"{name}={value} outside usable window [{b_lo}, {b_hi}]"
                )


def effective_soc_bounds(battery: BatterySpec) -> tuple[float, float]:
    """Usable charge window in kWh.

    Returns ``(soc_min_frac * capacity, soc_max_frac * capacity)``. All
    storage constraints use this window in place of the literal
    ``[0, capacity]`` range, which it equals for the default window.
    """
    return (
        battery.soc_min_frac * battery.capacity_kwh,
        battery.soc_max_frac * battery.capacity_kwh,
    )


def _as_checked_vector(name: str, values, n: int | None) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1:
        raise LengthMismatch(f"{name} must be a 1-D vector, got shape {arr.shape}")
    if n is not None and arr.shape[0] != n:
        raise LengthMismatch(f"{name} has length {arr.shape[0]}, expected {n}")
    if not np.all(np.isfinite(arr)):
        bad = int(np.flatnonzero(~np.isfinite(arr))[0])
        raise NegativeEntry(f"{name}[{bad}] is not finite")
    if np.any(arr < 0.0):
        bad = int(np.flatnonzero(arr < 0.0)[0])
        raise NegativeEntry(f"{name}[{bad}] = {arr[bad]} is negative")
    return arr


@dataclass(frozen=True, eq=False)
class ScenarioInput:
    """Validated problem data: paired price/load vectors plus the battery.

    Arrays are defensively copied and marked read-only, so a scenario can
    be shared freely between threads.
    """

    grid: TimeGrid
    prices: np.ndarray
    loads: np.ndarray
    battery: BatterySpec

    def __post_init__(self) -> None:
        n = self.grid.n_periods
        prices = _as_checked_vector("prices", self.prices, n)
        loads = _as_checked_vector("loads", self.loads, n)
        for name, arr in (("prices", prices), ("loads", loads)):
            copy = arr.copy()
            copy.setflags(write=False)
            object.__setattr__(self, name, copy)

    @property
    def n_periods(self) -> int:
        return self.grid.n_periods

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, ScenarioInput):
            return NotImplemented
        return (
            self.grid == other.grid
            and self.battery == other.battery
            and np.array_equal(self.prices, other.prices)
            and np.array_equal(self.loads, other.loads)
        )

    def __hash__(self) -> int:
        return hash(
            (self.grid, self.battery, self.prices.tobytes(), self.loads.tobytes())
        )


def new_scenario(prices, loads, battery: BatterySpec) -> ScenarioInput:
    """Build a validated scenario from raw price/load vectors.

    Raises LengthMismatch, NegativeEntry or InvalidBattery; on success the
    returned value is immutable.
    """
    prices = _as_checked_vector("prices", prices, None)
    loads = _as_checked_vector("loads", loads, len(prices))
    if not isinstance(battery, BatterySpec):
        raise InvalidBattery(f"expected BatterySpec, got {type(battery).__name__}")
    return ScenarioInput(TimeGrid(len(prices)), prices, loads, battery)


@dataclass(frozen=True)
class Solution:
    """Optimizer output: consumption, recovered trajectory, diagnostics.

    ``battery_trajectory`` holds end-of-period charge levels b_1..b_N.
    ``objective_value`` is the billed cost for cost minimization and the
    weighted-product utility for balancing.
    """

    consumption: np.ndarray
    battery_trajectory: np.ndarray
    objective_value: float
    scheme: Scheme
    diagnostics: "SolveDiagnostics" = field(repr=False, default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        for name in ("consumption", "battery_trajectory"):
            arr = np.asarray(getattr(self, name), dtype=float).copy()
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
