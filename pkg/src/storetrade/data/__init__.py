"""Bundled 24-period example dataset.

``prices_24.csv`` is a representative winter-weekday hourly price curve
(overnight trough, morning shoulder, evening peak) in currency units per
kWh; it is shaped like published day-ahead curves but is not any
utility's actual series. ``loads_24.csv`` is the synthetic weekday load
``generate_synthetic_load(seed=7, n_periods=24)`` frozen to disk.
"""

from __future__ import annotations

import importlib.resources
from pathlib import Path

from ..domain import BatterySpec, ScenarioInput
from ..scenario import load_scenario_csv

__all__ = ["bundled_paths", "bundled_scenario", "BUNDLED_LOAD_SEED"]

BUNDLED_LOAD_SEED = 7


def bundled_paths() -> tuple[Path, Path]:
    """Filesystem paths of the bundled price and load CSVs."""
    root = importlib.resources.files(__name__)
    return Path(str(root / "prices_24.csv")), Path(str(root / "loads_24.csv"))


def bundled_scenario(battery: BatterySpec | None = None) -> ScenarioInput:
    """The bundled 24-period scenario with the given (or default) battery."""
    if battery is None:
        battery = BatterySpec(loss_rate=0.001, capacity_kwh=5.0)
    prices_path, loads_path = bundled_paths()
    return load_scenario_csv(prices_path, loads_path, battery)
