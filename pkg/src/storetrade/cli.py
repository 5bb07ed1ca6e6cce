"""Command-line interface: optimize, sweep and report workflows.

All outputs are CSV plus a JSON manifest recording the command line,
input hashes, solver configuration and tool version, so any result file
can be traced back to its inputs. Numeric output uses 9 significant
digits. Exit codes: 0 success, 1 parse/validation error, 2 infeasible,
3 solver failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import sys
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (
    arbitrage_conditions,
    compute_metrics,
    recover_trajectory,
    savings_decomposition,
)
from .domain import Scheme, StoretradeError
from .model import build_instance, check_feasible
from .scenario import (
    SweepAxis,
    SweepSpec,
    aggregate,
    load_battery_config,
    load_scenario_csv,
    load_series_csv,
    run_sweep,
)
from .solver import SolveStatus, SolverConfig, solve_balance, solve_cost_min

__all__ = ["main"]

_EXIT_OK = 0
_EXIT_INPUT = 1
_EXIT_INFEASIBLE = 2
_EXIT_SOLVER = 3


def _fmt(x: float) -> str:
    return f"{x:.9g}"


def _sha256(path: Path) -> str:
    digest = hashlib.sha256()
    digest.update(path.read_bytes())
    return digest.hexdigest()


def _write_manifest(out_dir: Path, args: argparse.Namespace, inputs: list[Path], cfg: SolverConfig) -> None:
    manifest = {
        "command": sys.argv[1:] if sys.argv[1:] else [args.command],
        "inputs": {p.name: _sha256(p) for p in inputs},
        "solver_config": dataclasses.asdict(cfg),
        "timestamp": datetime.now(timezone.utc).isoformat(),
        "version": __version__,
    }
    with open(out_dir / "manifest.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _solver_config(args: argparse.Namespace) -> SolverConfig:
    tol = getattr(args, "tol", None)
    if tol is None:
        return SolverConfig()
    return SolverConfig(tol_opt=tol, tol_feas=min(1e-8, tol))


def _load_inputs(args: argparse.Namespace):
    battery = load_battery_config(Path(args.battery))
    scenario = load_scenario_csv(Path(args.prices), Path(args.loads), battery)
    return scenario


def _status_exit(status: SolveStatus) -> int:
    if status is SolveStatus.OPTIMAL:
        return _EXIT_OK
    if status is SolveStatus.INFEASIBLE:
        return _EXIT_INFEASIBLE
    return _EXIT_SOLVER


def _solve(scenario, scheme: Scheme, cfg: SolverConfig):
    pi = build_instance(scenario, scheme)
    if scheme is Scheme.COST_MIN:
        return solve_cost_min(pi, cfg)
    return solve_balance(pi, scenario, cfg)


def _cmd_optimize(args: argparse.Namespace) -> int:
    scenario = _load_inputs(args)
    cfg = _solver_config(args)
    scheme = Scheme.COST_MIN if args.scheme == "cost" else Scheme.BALANCE
    solution = _solve(scenario, scheme, cfg)
    status = solution.diagnostics.status
    if status is not SolveStatus.OPTIMAL:
        print(
            f"solve failed: {status.value} "
            f"(max violation {_fmt(solution.diagnostics.max_violation)})",
            file=sys.stderr,
        )
        return _status_exit(status)

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    metrics = compute_metrics(scenario, solution.consumption, scheme)
    with open(out_dir / "solution.csv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write("period,price,load_kwh,consumption_kwh,battery_end_kwh\n")
        for i in range(scenario.n_periods):
            fh.write(
                f"{i + 1},{_fmt(scenario.prices[i])},{_fmt(scenario.loads[i])},"
                f"{_fmt(solution.consumption[i])},{_fmt(solution.battery_trajectory[i])}\n"
            )
    with open(out_dir / "metrics.csv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write("scheme,par,variance,baseline_cost,optimized_cost,savings_pct\n")
        fh.write(
            f"{scheme.value},{_fmt(metrics.par)},{_fmt(metrics.variance)},"
            f"{_fmt(metrics.baseline_cost)},{_fmt(metrics.optimized_cost)},"
            f"{_fmt(metrics.savings_pct)}\n"
        )
    _write_manifest(out_dir, args, [Path(args.prices), Path(args.loads), Path(args.battery)], cfg)
    print(
        f"{scheme.value}: cost {_fmt(metrics.optimized_cost)} "
        f"(baseline {_fmt(metrics.baseline_cost)}, savings {_fmt(metrics.savings_pct)}%), "
        f"PAR {_fmt(metrics.par)}"
    )
    return _EXIT_OK


def _cmd_sweep(args: argparse.Namespace) -> int:
    scenario = _load_inputs(args)
    cfg = _solver_config(args)
    if args.aggregate is not None:
        scenario = aggregate(
            scenario, args.aggregate, loss_rate_override=args.aggregate_loss_rate
        ).scenario
    try:
        values = tuple(float(v) for v in args.values.split(","))
    except ValueError:
        raise StoretradeError(f"--values is not a comma-separated number list: '{args.values}'") from None
    axis = SweepAxis.LOSS_RATE if args.axis == "loss" else SweepAxis.CAPACITY
    schemes = {
        "cost": (Scheme.COST_MIN,),
        "balance": (Scheme.BALANCE,),
        "both": (Scheme.COST_MIN, Scheme.BALANCE),
    }[args.scheme]
    try:
        spec = SweepSpec(base=scenario, axis=axis, values=values, schemes=schemes)
    except ValueError as exc:
        raise StoretradeError(str(exc)) from None
    rows = run_sweep(spec, cfg)

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "sweep.csv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write("axis_value,scheme,savings_pct,par,variance,status\n")
        for row in rows:
            fh.write(
                f"{_fmt(row.axis_value)},{row.scheme.value},{_fmt(row.savings_pct)},"
                f"{_fmt(row.par)},{_fmt(row.variance)},{row.status}\n"
            )
    _write_manifest(out_dir, args, [Path(args.prices), Path(args.loads), Path(args.battery)], cfg)
    succeeded = sum(1 for row in rows if row.status == SolveStatus.OPTIMAL.value)
    print(f"sweep: {succeeded}/{len(rows)} cells optimal -> {out_dir / 'sweep.csv'}")
    if succeeded == 0:
        print("sweep: no cell solved to optimality", file=sys.stderr)
        return _EXIT_SOLVER
    return _EXIT_OK


def _cmd_report(args: argparse.Namespace) -> int:
    scenario = _load_inputs(args)
    cfg = _solver_config(args)
    consumption = load_series_csv(Path(args.solution), ("period", "consumption_kwh")) \
        if args.solution_format == "series" else _read_solution_csv(Path(args.solution))
    if len(consumption) != scenario.n_periods:
        raise StoretradeError(
            f"solution has {len(consumption)} periods, scenario has {scenario.n_periods}"
        )
    report = check_feasible(scenario, consumption, tol=1e-6)
    if not report.feasible:
        print(
            f"solution infeasible: {report.worst_family} period {report.worst_period} "
            f"violated by {_fmt(report.max_violation)} (relative)",
            file=sys.stderr,
        )
        return _EXIT_INPUT

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    flags = arbitrage_conditions(scenario)
    with open(out_dir / "arbitrage.csv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write("from,to,ratio,threshold,beneficial\n")
        for f in flags:
            fh.write(
                f"{f.from_period},{f.to_period},{_fmt(f.price_ratio)},"
                f"{_fmt(f.threshold)},{str(f.beneficial).lower()}\n"
            )
    trajectory = recover_trajectory(scenario, consumption)
    terms, total = savings_decomposition(scenario, trajectory)
    with open(out_dir / "decomposition.csv", "w", encoding="utf-8", newline="\n") as fh:
        fh.write("period,marginal_value\n")
        for i, term in enumerate(terms, start=1):
            fh.write(f"{i},{_fmt(term)}\n")
    _write_manifest(
        out_dir,
        args,
        [Path(args.solution), Path(args.prices), Path(args.loads), Path(args.battery)],
        cfg,
    )
    beneficial = sum(1 for f in flags if f.beneficial)
    direct = float(scenario.prices @ (scenario.loads - consumption))
    print(
        f"report: {beneficial}/{len(flags)} beneficial storage pairs, "
        f"decomposed savings {_fmt(total)} (direct {_fmt(direct)})"
    )
    return _EXIT_OK


def _read_solution_csv(path: Path) -> np.ndarray:
    """Extract the consumption column from an optimize-format solution.csv."""
    import csv as _csv

    from .scenario import ParseError

    with open(path, encoding="utf-8-sig", newline="") as fh:
        reader = _csv.reader(fh)
        header = next(reader, None)
        if header is None:
            raise ParseError(f"{path.name}: empty file")
        header = [col.strip().lower() for col in header]
        try:
            col = header.index("consumption_kwh")
        except ValueError:
            raise ParseError(
                f"{path.name} line 1: no 'consumption_kwh' column"
            ) from None
        values = []
        for lineno, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            try:
                values.append(float(row[col].strip()))
            except (ValueError, IndexError):
                raise ParseError(
                    f"{path.name} line {lineno} column {col + 1}: bad consumption value"
                ) from None
    if not values:
        raise ParseError(f"{path.name}: no data rows")
    return np.array(values)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="storetrade",
        description="Optimal day-ahead household consumption with battery storage.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p: argparse.ArgumentParser) -> None:
        p.add_argument("--prices", required=True, help="price CSV (period,price)")
        p.add_argument("--loads", required=True, help="load CSV (period,load_kwh)")
        p.add_argument("--battery", required=True, help="battery key=value file")
        p.add_argument("--out", default=".", help="output directory (default: .)")
        p.add_argument("--tol", type=float, default=None, help="optimality tolerance")

    p_opt = sub.add_parser("optimize", help="solve one scenario")
    add_common(p_opt)
    p_opt.add_argument("--scheme", choices=["cost", "balance"], required=True)
    p_opt.set_defaults(func=_cmd_optimize)

    p_sweep = sub.add_parser("sweep", help="sweep loss rate or capacity")
    add_common(p_sweep)
    p_sweep.add_argument("--axis", choices=["loss", "capacity"], required=True)
    p_sweep.add_argument("--values", required=True, help="comma-separated axis values")
    p_sweep.add_argument("--scheme", choices=["cost", "balance", "both"], default="both")
    p_sweep.add_argument("--aggregate", type=int, default=None, help="aggregate to M blocks")
    p_sweep.add_argument(
        "--aggregate-loss-rate",
        type=float,
        default=None,
        help="override the re-based block loss rate",
    )
    p_sweep.set_defaults(func=_cmd_sweep)

    p_rep = sub.add_parser("report", help="analyze an existing solution")
    add_common(p_rep)
    p_rep.add_argument("--solution", required=True, help="solution.csv from optimize")
    p_rep.add_argument(
        "--solution-format",
        dest="solution_format",
        choices=["optimize", "series"],
        default="optimize",
        help="optimize-format CSV or bare period,consumption_kwh series",
    )
    p_rep.set_defaults(func=_cmd_report)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 0 for --help and 2 for usage errors; usage
        # mistakes are input errors here.
        return _EXIT_OK if exc.code in (0, None) else _EXIT_INPUT
    try:
        return args.func(args)
    except StoretradeError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _EXIT_INPUT
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
