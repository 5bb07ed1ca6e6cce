"""Scenario ingestion, synthetic loads, aggregation and parameter sweeps.

File formats are deliberately plain: two-column CSVs for prices and
loads, and a ``key = value`` text file for battery parameters. The
synthetic load generator uses a fixed, documented pseudo-random scheme
so fixtures are bit-identical across platforms and runs.
"""

from __future__ import annotations

import concurrent.futures
import dataclasses
import enum
import math
import os
import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .analysis import compute_metrics
from .domain import (
    BatterySpec,
    ScenarioInput,
    Scheme,
    StoretradeError,
    TimeGrid,
    new_scenario,
)
from .model import build_instance
from .solver import SolveStatus, SolverConfig, solve_balance, solve_cost_min

__all__ = [
    "ParseError",
    "InvalidAggregation",
    "LoadProfile",
    "SweepAxis",
    "SweepSpec",
    "SweepRow",
    "AggregatedScenario",
    "load_series_csv",
    "load_scenario_csv",
    "load_battery_config",
    "generate_synthetic_load",
    "aggregate",
    "run_sweep",
    "sweep_threads",
]


class ParseError(StoretradeError):
    """A data file is malformed; the message names the line and column."""


class InvalidAggregation(StoretradeError):
    """The requested block count does not evenly divide the horizon."""


class LoadProfile(enum.Enum):
    WEEKDAY = "weekday"
    WEEKEND = "weekend"


def load_series_csv(path, expected_header: tuple[str, str]) -> np.ndarray:
    """Read one ``period,<value>`` CSV into a float vector.

    Periods must be the 1-based integers 1..N in order; values must be
    finite decimals. Accepts LF or CRLF line endings and a UTF-8 BOM.
    """
    path = Path(path)
    values: list[float] = []
    with open(path, encoding="utf-8-sig", newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ParseError(f"{path.name}: empty file")
        header = tuple(col.strip().lower() for col in header)
        if header != expected_header:
            raise ParseError(
                f"{path.name} line 1: header must be "
                f"'{','.join(expected_header)}', got '{','.join(header)}'"
            )
        for lineno, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != 2:
                raise ParseError(f"{path.name} line {lineno}: expected 2 columns, got {len(row)}")
            try:
                period = int(row[0].strip())
            except ValueError:
                raise ParseError(
                    f"{path.name} line {lineno} column 1: '{row[0]}' is not an integer"
                ) from None
            if period != len(values) + 1:
                raise ParseError(
                    f"{path.name} line {lineno}: period {period} out of order, expected {len(values) + 1}"
                )
            try:
                value = float(row[1].strip())
            except ValueError:
                raise ParseError(
                    f"{path.name} line {lineno} column 2: '{row[1]}' is not a number"
                ) from None
            if not math.isfinite(value):
                raise ParseError(f"{path.name} line {lineno} column 2: value is not finite")
            values.append(value)
    if not values:
        raise ParseError(f"{path.name}: no data rows")
    return np.array(values)


def load_scenario_csv(prices_path, loads_path, battery: BatterySpec) -> ScenarioInput:
    """Build a scenario from a price CSV and a load CSV."""
    prices = load_series_csv(prices_path, ("period", "price"))
    loads = load_series_csv(loads_path, ("period", "load_kwh"))
    return new_scenario(prices, loads, battery)


_BATTERY_KEYS = {
    "loss_rate": "loss_rate",
    "capacity_kwh": "capacity_kwh",
    "initial_charge_kwh": "initial_charge_kwh",
    "final_charge_kwh": "final_charge_kwh",
    "soc_min": "soc_min_frac",
    "soc_max": "soc_max_frac",
}


def load_battery_config(path) -> BatterySpec:
    """Parse a ``key = value`` battery description file.

    Recognized keys: loss_rate, capacity_kwh, initial_charge_kwh,
    final_charge_kwh, soc_min, soc_max. Missing keys take the BatterySpec
    defaults; unknown keys are rejected by name. Lines starting with '#'
    and blank lines are ignored.
    """
    path = Path(path)
    kwargs: dict[str, float] = {}
    with open(path, encoding="utf-8-sig") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ParseError(f"{path.name} line {lineno}: expected 'key = value'")
            key, _, value = line.partition("=")
            key = key.strip()
            if key not in _BATTERY_KEYS:
                raise ParseError(f"{path.name} line {lineno}: unknown key '{key}'")
            try:
                kwargs[_BATTERY_KEYS[key]] = float(value.strip())
            except ValueError:
                raise ParseError(
                    f"{path.name} line {lineno}: value for '{key}' is not a number"
                ) from None
    return BatterySpec(**kwargs)


# ---------------------------------------------------------------------------
# Synthetic household loads
# ---------------------------------------------------------------------------

_LCG_MULT = 6364136223846793005
_LCG_INC = 1442695040888963407
_LCG_MASK = (1 << 64) - 1


def _lcg_stream(seed: int):
    """64-bit linear congruential generator (Knuth MMIX constants).

    state' = state * 6364136223846793005 + 1442695040888963407 mod 2^64;
    each draw yields a float in [0, 1) from the top 53 bits.
    """
    state = (seed * _LCG_MULT + _LCG_INC) & _LCG_MASK
    while True:
        state = (state * _LCG_MULT + _LCG_INC) & _LCG_MASK
        yield (state >> 11) / float(1 << 53)


def _gauss_pair(u1: float, u2: float) -> float:
    """Box-Muller transform; u1 shifted away from zero for the log."""
    u1 = max(u1, 2.0**-53)
    return math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)


def _bump(hour: np.ndarray, center: float, width: float, amp: float) -> np.ndarray:
    return amp * np.exp(-0.5 * ((hour - center) / width) ** 2)


def generate_synthetic_load(
    seed: int, n_periods: int, profile: LoadProfile = LoadProfile.WEEKDAY
) -> np.ndarray:
    """Deterministic synthetic household load in kWh per period.

    A smooth hour-of-day shape (overnight base, morning and evening
    peaks on weekdays; a flatter midday-weighted shape on weekends) is
    multiplied by lognormal noise exp(0.2 z) with z standard normal.
    Randomness comes from the documented LCG + Box-Muller combination,
    so output is identical for identical seeds everywhere. This is a
    simplified stand-in for occupancy-simulation load models, not a
    faithful reproduction of any of them.
    """
    if n_periods < 2:
        raise ValueError("n_periods must be at least 2")
    if isinstance(profile, str):
        profile = LoadProfile(profile.lower())
    hours = 24.0 * (np.arange(n_periods) + 0.5) / n_periods
    if profile is LoadProfile.WEEKDAY:
        shape = (
            0.30
            + _bump(hours, 7.5, 1.4, 0.75)
            + _bump(hours, 13.0, 3.0, 0.20)
            + _bump(hours, 19.2, 2.0, 1.50)
        )
    else:
        shape = (
            0.35
            + _bump(hours, 13.0, 3.5, 0.95)
            + _bump(hours, 19.5, 2.2, 0.85)
        )
    stream = _lcg_stream(seed)
    noise = np.empty(n_periods)
    for i in range(n_periods):
        u1 = next(stream)
        u2 = next(stream)
        noise[i] = math.exp(0.2 * _gauss_pair(u1, u2))
    return shape * noise


# ---------------------------------------------------------------------------
# Aggregation to coarser grids
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class AggregatedScenario:
    """A scenario re-sampled onto M equal contiguous blocks.

    Block prices are means of member prices, block loads are sums of
    member loads (energy is conserved), and the loss rate is compounded
    so one block decays exactly as its member periods would.
    """

    source: ScenarioInput
    target_periods: int
    prices: np.ndarray
    loads: np.ndarray
    battery: BatterySpec

    @property
    def scenario(self) -> ScenarioInput:
        labels = tuple(
            f"block {k + 1} (source periods {k * self._block + 1}-{(k + 1) * self._block})"
            for k in range(self.target_periods)
        )
        return ScenarioInput(
            TimeGrid(self.target_periods, labels), self.prices, self.loads, self.battery
        )

    @property
    def _block(self) -> int:
        return self.source.n_periods // self.target_periods


def aggregate(
    s: ScenarioInput, m: int, loss_rate_override: float | None = None
) -> AggregatedScenario:
    """Aggregate an N-period scenario onto m equal contiguous blocks.

    Requires 2 <= m <= N with m dividing N. The per-block loss rate is
    re-based to 1 - (1-r)^(N/m) so stored energy decays identically on
    both grids; pass ``loss_rate_override`` to set it explicitly instead.
    """
    n = s.n_periods
    if m < 2 or m > n or n % m != 0:
        raise InvalidAggregation(f"cannot aggregate {n} periods into {m} equal blocks")
    block = n // m
    prices = s.prices.reshape(m, block).mean(axis=1)
    loads = s.loads.reshape(m, block).sum(axis=1)
    if loss_rate_override is None:
        r_block = 1.0 - (1.0 - s.battery.loss_rate) ** block
    else:
        r_block = loss_rate_override
    battery = dataclasses.replace(s.battery, loss_rate=r_block)
    return AggregatedScenario(s, m, prices, loads, battery)


# ---------------------------------------------------------------------------
# Parameter sweeps
# ---------------------------------------------------------------------------


class SweepAxis(enum.Enum):
    LOSS_RATE = "loss"
    CAPACITY = "capacity"


@dataclass(frozen=True)
class SweepSpec:
    """A one-axis sweep: which parameter varies, over which sorted values."""

    base: ScenarioInput
    axis: SweepAxis
    values: tuple[float, ...]
    schemes: tuple[Scheme, ...] = (Scheme.COST_MIN, Scheme.BALANCE)

    def __post_init__(self) -> None:
        vals = tuple(float(v) for v in self.values)
        object.__setattr__(self, "values", vals)
        if not vals:
            raise ValueError("sweep needs at least one value")
        if any(b >= a for a, b in zip(vals[1:], vals)):
            raise ValueError("sweep values must be strictly increasing")
        if self.axis is SweepAxis.LOSS_RATE and (vals[0] < 0.0 or vals[-1] >= 1.0):
            raise ValueError("loss rates must lie in [0, 1)")
        if self.axis is SweepAxis.CAPACITY and vals[0] < 0.0:
            raise ValueError("capacities must be nonnegative")
        if not self.schemes:
            raise ValueError("sweep needs at least one scheme")


@dataclass(frozen=True)
class SweepRow:
    axis_value: float
    scheme: Scheme
    savings_pct: float
    par: float
    variance: float
    status: str


def sweep_threads() -> int:
    """Worker cap for sweep evaluation: STORETRADE_THREADS or CPU count."""
    raw = os.environ.get("STORETRADE_THREADS", "").strip()
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            raise StoretradeError(f"STORETRADE_THREADS is not an integer: '{raw}'") from None
    return max(1, os.cpu_count() or 1)


def _sweep_battery(base: BatterySpec, axis: SweepAxis, value: float) -> BatterySpec:
    if axis is SweepAxis.LOSS_RATE:
        return dataclasses.replace(base, loss_rate=value)
    return dataclasses.replace(base, capacity_kwh=value)


def _sweep_cell(
    spec: SweepSpec, cfg: SolverConfig, value: float, scheme: Scheme
) -> SweepRow:
    base = spec.base
    try:
        battery = _sweep_battery(base.battery, spec.axis, value)
        scenario = new_scenario(base.prices, base.loads, battery)
        pi = build_instance(scenario, scheme)
        if scheme is Scheme.COST_MIN:
            solution = solve_cost_min(pi, cfg)
        else:
            solution = solve_balance(pi, scenario, cfg)
    except StoretradeError as exc:
        return SweepRow(value, scheme, math.nan, math.nan, math.nan, f"error: {exc}")
    metrics = compute_metrics(scenario, solution.consumption, scheme)
    status = solution.diagnostics.status
    if status is not SolveStatus.OPTIMAL:
        return SweepRow(value, scheme, math.nan, math.nan, math.nan, status.value)
    return SweepRow(
        value, scheme, metrics.savings_pct, metrics.par, metrics.variance, status.value
    )


def run_sweep(spec: SweepSpec, cfg: SolverConfig = SolverConfig()) -> list[SweepRow]:
    """Evaluate every (axis value, scheme) cell; failures stay in-row.

    Cells are independent and may be evaluated concurrently (capped by
    STORETRADE_THREADS); the returned order is always values-major,
    schemes-minor, regardless of scheduling.
    """
    cells = [(v, scheme) for v in spec.values for scheme in spec.schemes]
    workers = min(sweep_threads(), len(cells))
    if workers <= 1:
        return [_sweep_cell(spec, cfg, v, scheme) for v, scheme in cells]
    with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(_sweep_cell, spec, cfg, v, sch) for v, sch in cells]
        return [f.result() for f in futures]
