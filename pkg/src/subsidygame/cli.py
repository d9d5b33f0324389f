"""Command-line front end: scenario solves, sweeps, and report comparison.

Verbs::

    subsidygame solve    SCENARIO [--override k=v ...] [--output DIR]
    subsidygame sweep    SCENARIO [--override k=v ...] [--output DIR] [--workers N]
    subsidygame compare  BASELINE.json NEW.json [--tolerance REL]
    subsidygame validate SCENARIO [--override k=v ...]

A solve writes ``trajectory.csv``, ``coefficients.csv``, ``report.json``
and, when the dynamic program ran, ``policy.csv``.  A sweep writes one
subdirectory per sweep value plus a ``summary.csv``; sweep points may run
in parallel worker processes, but a single collector writes all files so
identical inputs give byte-identical artifacts.

Exit codes: 0 success, 1 comparison beyond tolerance, 2 parse/validation
error, 3 infeasible program, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from .dynamics import NonInteriorPriceError, payoffs
from .equilibrium import (
    GridExtrapolationError,
    GridSpec,
    PolicyTable,
    ProgramInfeasibleError,
    SolveReport,
    dp_solve,
    enumerate_schedules,
)
from .model import SubsidyGameError, validate
from .riccati import RiccatiBlowUpError, solve_coefficients
from .scenario import (
    Scenario,
    ScenarioError,
    load_scenario,
    scenario_for_sweep_value,
    serialize_scenario,
)

SCHEMA_VERSION = 1

EXIT_OK = 0
EXIT_DIFF = 1
EXIT_INVALID = 2
EXIT_INFEASIBLE = 3
EXIT_NUMERICAL = 4


def _g(value: float) -> str:
    return f"{value:.12g}"


def _trajectory_csv(scenario: Scenario, report: SolveReport) -> str:
    traj = report.best_outcome.trajectory
    p = scenario.params
    rows = ["t,x,producer_price,consumer_price,subsidy,demand_rate,unit_cost"]
    unit_cost = p.b1 - p.b2 * traj.x
    for i in range(len(traj.times)):
        rows.append(
            ",".join(
                _g(v)
                for v in (
                    traj.times[i],
                    traj.x[i],
                    traj.producer_price[i],
                    traj.consumer_price[i],
                    traj.subsidy[i],
                    traj.demand_rate[i],
                    unit_cost[i],
                )
            )
        )
    return "\n".join(rows) + "\n"


def _coefficients_csv(scenario: Scenario, report: SolveReport) -> str:
    coeffs = solve_coefficients(
        scenario.params, scenario.program, report.best_schedule, scenario.numerics.step
    )
    rows = ["t,k2,k1,k0,segment_index"]
    for index, seg in enumerate(coeffs.segments):
        # interior breakpoints are printed once, with the segment opening there
        last = len(seg.times) - 1 if index == len(coeffs.segments) - 1 else len(seg.times) - 2
        for i in range(last + 1):
            rows.append(
                f"{_g(seg.times[i])},{_g(seg.k2[i])},{_g(seg.k1[i])},{_g(seg.k0[i])},{index}"
            )
    return "\n".join(rows) + "\n"


def _policy_csv(table: PolicyTable) -> str:
    rows = ["tau,s,x,eta,value"]
    for d, tau in enumerate(table.dates):
        for i, level in enumerate(table.levels):
            for m, x in enumerate(table.grid):
                rows.append(
                    f"{_g(tau)},{_g(level)},{_g(x)},"
                    f"{_g(table.eta[d, i, m])},{_g(table.value[d, i, m])}"
                )
    return "\n".join(rows) + "\n"


def _report_entry(scenario: Scenario, report: SolveReport) -> dict:
    outcome = report.best_outcome
    pay = payoffs(scenario.params, scenario.program, report.best_schedule, outcome.trajectory)
    entry = {
        "solver": report.solver,
        "schedule": list(report.best_schedule.levels),
        "adjustments": list(report.best_schedule.adjustments),
        "government_cost": outcome.government_cost,
        "subsidy_expenditure": pay.subsidy_expenditure,
        "fixed_costs": pay.fixed_costs,
        "firm_profit": outcome.firm_profit,
        "feasible": outcome.feasible,
        "x_end": outcome.trajectory.value_at(scenario.program.end_date),
    }
    if report.all_candidates is not None:
        entry["candidates"] = [
            {
                "levels": list(row.levels),
                "government_cost": row.government_cost,
                "firm_profit": row.firm_profit,
                "x_end": row.x_end,
                "feasible": row.feasible,
            }
            for row in report.all_candidates
        ]
    if report.dp_value is not None:
        entry["dp_value"] = report.dp_value
    return entry


def _scenario_block(scenario: Scenario) -> dict:
    p, g = scenario.params, scenario.program
    return {
        "parameters": {k: getattr(p, k) for k in
                       ("alpha1", "alpha2", "beta", "p_a", "x0", "b1", "b2", "rho", "T")},
        "program": {
            "decision_dates": list(g.decision_dates),
            "end_date": g.end_date,
            "subsidy_set": list(g.subsidy_set),
            "fixed_cost": g.fixed_cost,
            "target": g.target,
            "initial_subsidy": g.initial_subsidy,
        },
        "numerics": {
            "step": scenario.numerics.step,
            "grid_nodes": scenario.numerics.grid_nodes,
        },
        "solver": scenario.solver,
    }


@dataclass
class RunResult:
    """One solved scenario with its rendered artifacts."""

    scenario: Scenario
    files: dict[str, str]
    report: dict
    exit_code: int
    headline: str

    @property
    def ok(self) -> bool:
        return self.exit_code == EXIT_OK


def run_single(scenario: Scenario) -> RunResult:
    """Solve one scenario and render its artifact files in memory."""
    report_doc: dict = {"schema_version": SCHEMA_VERSION, "scenario": _scenario_block(scenario)}
    files: dict[str, str] = {}
    try:
        results: dict[str, dict] = {}
        primary: SolveReport | None = None
        table: PolicyTable | None = None
        if scenario.solver in ("enumeration", "both"):
            enum_report = enumerate_schedules(
                scenario.params, scenario.program, scenario.numerics.step
            )
            results["enumeration"] = _report_entry(scenario, enum_report)
            primary = enum_report
        if scenario.solver in ("dp", "both"):
            table, dp_report = dp_solve(
                scenario.params,
                scenario.program,
                GridSpec(nodes=scenario.numerics.grid_nodes),
                scenario.numerics.step,
            )
            results["dp"] = _report_entry(scenario, dp_report)
            if primary is None:
                primary = dp_report
        if scenario.solver == "both":
            a, b = results["enumeration"], results["dp"]
            denom = max(abs(a["government_cost"]), abs(b["government_cost"]), 1e-300)
            results["agreement"] = {
                "same_schedule": a["schedule"] == b["schedule"],
                "cost_relative_difference": abs(a["government_cost"] - b["government_cost"])
                / denom,
            }
        report_doc["results"] = results
        files["trajectory.csv"] = _trajectory_csv(scenario, primary)
        files["coefficients.csv"] = _coefficients_csv(scenario, primary)
        if table is not None:
            files["policy.csv"] = _policy_csv(table)
        entry = results.get("enumeration", results.get("dp"))
        headline = (
            f"schedule={entry['schedule']} government_cost={entry['government_cost']:.6g} "
            f"firm_profit={entry['firm_profit']:.6g} feasible={entry['feasible']}"
        )
        exit_code = EXIT_OK
    except ProgramInfeasibleError as exc:
        report_doc["error"] = {"type": "infeasible", "message": str(exc)}
        headline = "infeasible: no admissible schedule reaches the target"
        exit_code = EXIT_INFEASIBLE
    except (RiccatiBlowUpError, NonInteriorPriceError, GridExtrapolationError) as exc:
        report_doc["error"] = {"type": "numerical", "message": str(exc)}
        headline = f"numerical failure: {exc}"
        exit_code = EXIT_NUMERICAL
    files["report.json"] = json.dumps(report_doc, indent=2, sort_keys=True) + "\n"
    return RunResult(
        scenario=scenario, files=files, report=report_doc, exit_code=exit_code, headline=headline
    )


def _write_files(directory: Path, files: dict[str, str]) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    for name, content in sorted(files.items()):
        (directory / name).write_text(content)


def _summary_row(value: float, result: RunResult) -> str:
    entry = None
    if "results" in result.report:
        entry = result.report["results"].get(
            "enumeration", result.report["results"].get("dp")
        )
    if entry is None:
        return f"{value!r},inf,,," + "False"
    schedule = ";".join(f"{lvl:g}" for lvl in entry["schedule"])
    return (
        f"{value!r},{entry['government_cost']!r},{entry['firm_profit']!r},"
        f"{schedule},{entry['feasible']}"
    )


def _run_sweep_point(payload: tuple[Scenario, float]) -> RunResult:
    scenario, value = payload
    return run_single(scenario_for_sweep_value(scenario, value))


def run_sweep(scenario: Scenario, output: Path, workers: int = 1) -> int:
    """Run every sweep point and collect artifacts deterministically."""
    if scenario.sweep is None:
        raise ScenarioError("scenario has no [sweep] section; use the solve verb")
    values = scenario.sweep.values
    jobs = [(scenario, v) for v in values]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_run_sweep_point, jobs))
    else:
        results = [_run_sweep_point(job) for job in jobs]

    rows = ["value,government_cost,firm_profit,schedule,feasible"]
    exit_code = EXIT_OK
    for value, result in zip(values, results):
        name = f"{scenario.sweep.parameter}_{value:g}"
        _write_files(output / name, result.files)
        rows.append(_summary_row(value, result))
        print(f"{name}: {result.headline}")
        exit_code = max(exit_code, result.exit_code)
    output.mkdir(parents=True, exist_ok=True)
    (output / "summary.csv").write_text("\n".join(rows) + "\n")
    return exit_code


class CompareMismatch(SubsidyGameError):
    """The two reports do not have the same shape."""


def compare_reports(baseline, new, tolerance: float, path: str = "") -> list[tuple[str, float]]:
    """Field-by-field relative differences beyond tolerance.

    Numbers compare by relative difference, everything else by equality;
    mismatched structure raises :class:`CompareMismatch`.
    """
    diffs: list[tuple[str, float]] = []
    if isinstance(baseline, dict) and isinstance(new, dict):
        if set(baseline) != set(new):
            extra = set(baseline) ^ set(new)
            raise CompareMismatch(f"shape mismatch at {path or '.'}: keys {sorted(extra)}")
        for key in sorted(baseline):
            diffs += compare_reports(baseline[key], new[key], tolerance, f"{path}.{key}")
    elif isinstance(baseline, list) and isinstance(new, list):
        if len(baseline) != len(new):
            raise CompareMismatch(f"shape mismatch at {path}: lengths {len(baseline)} != {len(new)}")
        for i, (a, b) in enumerate(zip(baseline, new)):
            diffs += compare_reports(a, b, tolerance, f"{path}[{i}]")
    elif isinstance(baseline, bool) or isinstance(new, bool):
        if baseline is not new:
            diffs.append((path, math.inf))
    elif isinstance(baseline, (int, float)) and isinstance(new, (int, float)):
        if baseline != new:
            rel = abs(baseline - new) / max(abs(baseline), abs(new))
            if rel > tolerance:
                diffs.append((path, rel))
    else:
        if baseline != new:
            diffs.append((path, math.inf))
    return diffs


def _load_scenario_file(path: str, overrides: tuple[str, ...]) -> Scenario:
    return load_scenario(Path(path).read_text(), overrides)


def _cmd_solve(args) -> int:
    scenario = _load_scenario_file(args.scenario, tuple(args.override))
    if scenario.sweep is not None:
        raise ScenarioError("scenario has a [sweep] section; use the sweep verb")
    output = Path(args.output or scenario.output_dir or "out")
    result = run_single(scenario)
    _write_files(output, result.files)
    print(result.headline)
    return result.exit_code


def _cmd_sweep(args) -> int:
    scenario = _load_scenario_file(args.scenario, tuple(args.override))
    output = Path(args.output or scenario.output_dir or "out")
    return run_sweep(scenario, output, workers=args.workers)


def _cmd_compare(args) -> int:
    baseline = json.loads(Path(args.baseline).read_text())
    new = json.loads(Path(args.new).read_text())
    diffs = compare_reports(baseline, new, args.tolerance)
    if not diffs:
        print("reports agree within tolerance")
        return EXIT_OK
    for path, rel in diffs:
        print(f"{path}: relative difference {rel:.3g}")
    return EXIT_DIFF


def _cmd_validate(args) -> int:
    sections_text = Path(args.scenario).read_text()
    scenario = load_scenario(sections_text, tuple(args.override))
    diagnostics = validate(scenario.params, scenario.program)
    for diag in diagnostics:
        print(diag)
    if any(d.severity == "error" for d in diagnostics):
        return EXIT_INVALID
    print("scenario valid")
    return EXIT_OK


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="subsidygame", description=__doc__)
    sub = parser.add_subparsers(dest="verb", required=True)

    def add_common(p):
        p.add_argument("scenario", help="scenario file path")
        p.add_argument(
            "--override",
            action="append",
            default=[],
            metavar="KEY=VALUE",
            help="override a scenario key (repeatable)",
        )

    p_solve = sub.add_parser("solve", help="solve a single scenario")
    add_common(p_solve)
    p_solve.add_argument("--output", help="artifact directory (default: out)")
    p_solve.set_defaults(func=_cmd_solve)

    p_sweep = sub.add_parser("sweep", help="run a scenario's parameter sweep")
    add_common(p_sweep)
    p_sweep.add_argument("--output", help="artifact directory (default: out)")
    p_sweep.add_argument("--workers", type=int, default=1, help="parallel sweep workers")
    p_sweep.set_defaults(func=_cmd_sweep)

    p_cmp = sub.add_parser("compare", help="diff two report.json files")
    p_cmp.add_argument("baseline")
    p_cmp.add_argument("new")
    p_cmp.add_argument("--tolerance", type=float, default=1e-9, help="relative tolerance")
    p_cmp.set_defaults(func=_cmd_compare)

    p_val = sub.add_parser("validate", help="validate a scenario file")
    add_common(p_val)
    p_val.set_defaults(func=_cmd_validate)
    return parser


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        return args.func(args)
    except (ScenarioError, CompareMismatch, json.JSONDecodeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except ProgramInfeasibleError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (RiccatiBlowUpError, NonInteriorPriceError, GridExtrapolationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL


if __name__ == "__main__":  # pragma: no cover
    raise SystemExit(main())
