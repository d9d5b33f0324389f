"""Scenario files: a small sectioned key-value format.

A scenario fixes the market parameters, the subsidy program, the solver
selection and numerics, and optionally a one-parameter sweep::

    [parameters]
    alpha1 = 6
    alpha2 = 0.01
    beta = 0.1
    p_a = 1
    x0 = 10
    b1 = 50
    b2 = 0.8
    rho = 0.1
    T = 18

    [program]
    decision_dates = 0, 5
    end_date = 10
    subsidy_set = 0, 5, 10, 15
    fixed_cost = 10
    target = 40
    initial_subsidy = 0

    [numerics]
    step = 0.001
    grid_nodes = 200
    solver = both

    [sweep]
    parameter = target
    values = 36, 38, 42, 44

Blank lines and lines starting with ``#`` are ignored.  Unknown sections or
keys are errors, not warnings: a typo must never silently fall back to a
default.  Values are parsed with ``float`` (lists are comma-separated), and
``serialize_scenario`` emits ``repr`` floats so a round trip is exact.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

from .model import GameParameters, SubsidyGameError, SubsidyProgram, validate

__all__ = [
    "Numerics",
    "SweepSpec",
    "Scenario",
    "ScenarioError",
    "load_scenario",
    "serialize_scenario",
    "scenario_for_sweep_value",
]

SOLVERS = ("enumeration", "dp", "both")
SWEEP_PARAMETERS = ("target", "b2", "alpha2", "num_dates")

_PARAM_KEYS = ("alpha1", "alpha2", "beta", "p_a", "x0", "b1", "b2", "rho", "T")
_PROGRAM_KEYS = (
    "decision_dates",
    "end_date",
    "subsidy_set",
    "fixed_cost",
    "target",
    "initial_subsidy",
)
_NUMERICS_KEYS = ("step", "grid_nodes", "solver", "output_dir")
_SWEEP_KEYS = ("parameter", "values")
_SECTIONS = {
    "parameters": _PARAM_KEYS,
    "program": _PROGRAM_KEYS,
    "numerics": _NUMERICS_KEYS,
    "sweep": _SWEEP_KEYS,
}
_KEY_SECTION = {key: sec for sec, keys in _SECTIONS.items() for key in keys}


class ScenarioError(SubsidyGameError):
    """A scenario file failed to parse or validate."""


@dataclass(frozen=True)
class Numerics:
    step: float = 1e-3
    grid_nodes: int = 200


@dataclass(frozen=True)
class SweepSpec:
    parameter: str
    values: tuple[float, ...]


@dataclass(frozen=True)
class Scenario:
    params: GameParameters
    program: SubsidyProgram
    solver: str = "both"
    numerics: Numerics = field(default_factory=Numerics)
    sweep: SweepSpec | None = None
    output_dir: str | None = None


def _parse_sections(text: str) -> dict[str, dict[str, tuple[str, int]]]:
    sections: dict[str, dict[str, tuple[str, int]]] = {}
    current: str | None = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if line.startswith("[") and line.endswith("]"):
            name = line[1:-1].strip()
            if name not in _SECTIONS:
                raise ScenarioError(f"line {lineno}: unknown section [{name}]")
            if name in sections:
                raise ScenarioError(f"line {lineno}: duplicate section [{name}]")
            sections[name] = {}
            current = name
            continue
        if "=" not in line:
            raise ScenarioError(f"line {lineno}: expected 'key = value'")
        if current is None:
            raise ScenarioError(f"line {lineno}: key outside any section")
        key, _, value = line.partition("=")
        key = key.strip()
        value = value.strip()
        if key not in _SECTIONS[current]:
            raise ScenarioError(f"line {lineno}: unknown key {key}")
        if key in sections[current]:
            raise ScenarioError(f"line {lineno}: duplicate key {key}")
        sections[current][key] = (value, lineno)
    return sections


def _float(entry: tuple[str, int], key: str) -> float:
    value, lineno = entry
    try:
        return float(value)
    except ValueError:
        raise ScenarioError(f"line {lineno}: {key} is not a number: {value!r}") from None


def _float_list(entry: tuple[str, int], key: str) -> tuple[float, ...]:
    value, lineno = entry
    items = [v.strip() for v in value.split(",") if v.strip()]
    return tuple(_float((v, lineno), key) for v in items)


def apply_overrides(
    sections: dict[str, dict[str, tuple[str, int]]], overrides: tuple[str, ...]
) -> None:
    """Merge ``key=value`` strings into parsed sections (key decides the section)."""
    for item in overrides:
        if "=" not in item:
            raise ScenarioError(f"override {item!r} is not of the form key=value")
        key, _, value = item.partition("=")
        key = key.strip()
        if key not in _KEY_SECTION:
            raise ScenarioError(f"unknown key {key}")
        sections.setdefault(_KEY_SECTION[key], {})[key] = (value.strip(), 0)


def _build(sections: dict[str, dict[str, tuple[str, int]]]) -> Scenario:
    for required in ("parameters", "program"):
        if required not in sections:
            raise ScenarioError(f"missing section [{required}]")

    def need(section: str, key: str) -> tuple[str, int]:
        try:
            return sections[section][key]
        except KeyError:
            raise ScenarioError(f"missing key {key} in [{section}]") from None

    pvals = {key: _float(need("parameters", key), key) for key in _PARAM_KEYS}
    params = GameParameters(**pvals)

    prog = sections["program"]
    program = SubsidyProgram(
        decision_dates=_float_list(need("program", "decision_dates"), "decision_dates"),
        end_date=_float(need("program", "end_date"), "end_date"),
        subsidy_set=_float_list(need("program", "subsidy_set"), "subsidy_set"),
        fixed_cost=_float(need("program", "fixed_cost"), "fixed_cost"),
        target=_float(need("program", "target"), "target"),
        initial_subsidy=(
            _float(prog["initial_subsidy"], "initial_subsidy")
            if "initial_subsidy" in prog
            else 0.0
        ),
    )

    num = sections.get("numerics", {})
    numerics = Numerics(
        step=_float(num["step"], "step") if "step" in num else 1e-3,
        grid_nodes=(
            int(_float(num["grid_nodes"], "grid_nodes")) if "grid_nodes" in num else 200
        ),
    )
    solver = num["solver"][0] if "solver" in num else "both"
    if solver not in SOLVERS:
        raise ScenarioError(f"solver must be one of {', '.join(SOLVERS)}: got {solver!r}")
    output_dir = num["output_dir"][0] if "output_dir" in num else None

    sweep = None
    if "sweep" in sections:
        parameter, _ = need("sweep", "parameter")
        if parameter not in SWEEP_PARAMETERS:
            raise ScenarioError(
                f"sweep parameter must be one of {', '.join(SWEEP_PARAMETERS)}: got {parameter!r}"
            )
        values = _float_list(need("sweep", "values"), "values")
        if not values:
            raise ScenarioError("sweep values must be nonempty")
        if parameter == "num_dates" and any(v != int(v) or v < 1 for v in values):
            raise ScenarioError("num_dates sweep values must be positive integers")
        sweep = SweepSpec(parameter=parameter, values=values)

    if numerics.step <= 0:
        raise ScenarioError("step must be positive")
    if numerics.grid_nodes < 2:
        raise ScenarioError("grid_nodes must be at least 2")

    diagnostics = validate(params, program)
    errors = [d for d in diagnostics if d.severity == "error"]
    if errors:
        raise ScenarioError("; ".join(f"{d.field}: {d.message}" for d in errors))

    return Scenario(
        params=params,
        program=program,
        solver=solver,
        numerics=numerics,
        sweep=sweep,
        output_dir=output_dir,
    )


def load_scenario(text: str, overrides: tuple[str, ...] = ()) -> Scenario:
    """Parse and validate a scenario, applying ``key=value`` overrides."""
    sections = _parse_sections(text)
    if overrides:
        apply_overrides(sections, tuple(overrides))
    return _build(sections)


def _fmt(value: float) -> str:
    return repr(float(value))


def _fmt_list(values) -> str:
    return ", ".join(_fmt(v) for v in values)


def serialize_scenario(scenario: Scenario) -> str:
    """Render a scenario back to file text; the round trip is exact."""
    p = scenario.params
    g = scenario.program
    lines = ["[parameters]"]
    lines += [f"{key} = {_fmt(getattr(p, key))}" for key in _PARAM_KEYS]
    lines += [
        "",
        "[program]",
        f"decision_dates = {_fmt_list(g.decision_dates)}",
        f"end_date = {_fmt(g.end_date)}",
        f"subsidy_set = {_fmt_list(g.subsidy_set)}",
        f"fixed_cost = {_fmt(g.fixed_cost)}",
        f"target = {_fmt(g.target)}",
        f"initial_subsidy = {_fmt(g.initial_subsidy)}",
        "",
        "[numerics]",
        f"step = {_fmt(scenario.numerics.step)}",
        f"grid_nodes = {scenario.numerics.grid_nodes}",
        f"solver = {scenario.solver}",
    ]
    if scenario.output_dir is not None:
        lines.append(f"output_dir = {scenario.output_dir}")
    if scenario.sweep is not None:
        lines += [
            "",
            "[sweep]",
            f"parameter = {scenario.sweep.parameter}",
            f"values = {_fmt_list(scenario.sweep.values)}",
        ]
    return "\n".join(lines) + "\n"


def scenario_for_sweep_value(scenario: Scenario, value: float) -> Scenario:
    """The single-run scenario obtained by pinning one sweep value.

    ``num_dates`` regenerates equally spaced decision dates on
    [0, end_date): date i is i * end_date / N for i = 0..N-1.
    """
    if scenario.sweep is None:
        raise ValueError("scenario has no sweep")
    parameter = scenario.sweep.parameter
    base = replace(scenario, sweep=None)
    if parameter == "target":
        return replace(base, program=replace(scenario.program, target=float(value)))
    if parameter == "b2":
        return replace(base, params=replace(scenario.params, b2=float(value)))
    if parameter == "alpha2":
        return replace(base, params=replace(scenario.params, alpha2=float(value)))
    if parameter == "num_dates":
        n = int(value)
        end = scenario.program.end_date
        dates = tuple(i * end / n for i in range(n))
        return replace(base, program=replace(scenario.program, decision_dates=dates))
    raise ValueError(f"unknown sweep parameter {parameter!r}")
