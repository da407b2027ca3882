"""Seeded multi-run experiments reproducing the runtime/objective table protocol.

For every formulation, farm size and seed the harness builds the problem
(wind rose, region, random feasible start), times the solver call alone,
and records one row. Rows go to ``results.csv``; full reports go to
``reports/<formulation>_n<N>_w<W>_s<seed>.json`` and per-cell aggregates
to ``summary.csv``.
"""

from __future__ import annotations

import csv
import dataclasses
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .admm import AdmmConfig, admm_solve
from .mlr import JointProblem, SolveReport, SolverConfig, solve_joint, solve_mlr
from .params import PhysicalParams, annual_energy_gwh, default_params, parse_key_values
from .sampling import farm_region_for, random_feasible_layout, sample_wind_rose

log = logging.getLogger(__name__)

CSV_HEADER = ["formulation", "n_turbines", "w", "seed", "runtime_s", "objective_gwh",
              "converged", "inner_evals", "warm_savings"]
SUMMARY_HEADER = ["formulation", "n_turbines", "w", "runs", "runtime_mean", "runtime_min",
                  "runtime_max", "objective_mean", "objective_min", "objective_max",
                  "converged_runs"]
FORMULATIONS = ("MLR", "JOINT", "ADMM")
DESK_LIMIT = 49


@dataclass
class ExperimentConfig:
    turbine_counts: list = field(default_factory=lambda: [25])
    scenarios: int = 36
    seeds: list = field(default_factory=lambda: list(range(10)))
    formulations: list = field(default_factory=lambda: ["MLR", "JOINT"])
    budget_s: float = 3600.0
    output_dir: Path = Path("results")
    overrides: dict = field(default_factory=dict)
    allow_large: bool = False
    concurrent: bool = False
    params: PhysicalParams = field(default_factory=default_params)

    def __post_init__(self):
        self.output_dir = Path(self.output_dir)
        self.formulations = [f.upper() for f in self.formulations]
        if not self.turbine_counts or min(self.turbine_counts) < 1:
            raise ValueError("turbine counts must be positive")
        if self.scenarios < 1:
            raise ValueError("need at least one scenario")
        if not self.seeds:
            raise ValueError("need at least one seed")
        if not self.budget_s > 0:
            raise ValueError("budget must be positive")
        unknown = set(self.formulations) - set(FORMULATIONS)
        if unknown:
            raise ValueError(f"unknown formulations {sorted(unknown)}")
        big = [n for n in self.turbine_counts if n > DESK_LIMIT]
        if big and not self.allow_large:
            raise ValueError(f"turbine counts {big} exceed the desk-scale limit {DESK_LIMIT};"
                             " set allow_large to run them")
        solver_config(self.overrides)  # fail early on bad keys


_OVERRIDES = {
    "inner_pg_tol": ("inner", "pg_tol", float),
    "inner_f_tol": ("inner", "f_tol", float),
    "inner_max_iter": ("inner", "max_iter", int),
    "inner_keep_history": ("inner", "keep_history", lambda s: _parse_bool(s)),
    "outer_pg_tol": ("sub", "pg_tol", float),
    "outer_f_tol": ("sub", "f_tol", float),
    "al_max_outer": ("al", "max_outer", int),
    "al_max_sub_iter": ("al", "max_sub_iter", int),
    "al_initial_penalty": ("al", "initial_penalty", float),
    "al_objective_rtol": ("al", "objective_rtol", float),
    "al_violation_tol": ("al", "violation_tol", float),
    "jump_guard_deg": ("config", "jump_guard_deg", float),
    "guard_halvings": ("config", "guard_halvings", int),
}


def _parse_bool(text) -> bool:
    if isinstance(text, bool):
        return text
    value = str(text).strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def solver_config(overrides: dict, budget: float | None = None) -> SolverConfig:
    """Default solver settings with named overrides applied."""
    cfg = SolverConfig(time_budget=budget)
    for key, raw in overrides.items():
        if key not in _OVERRIDES:
            raise ValueError(f"unknown solver override {key!r}")
        part, attr, conv = _OVERRIDES[key]
        value = conv(raw)
        if part == "inner":
            cfg.inner = dataclasses.replace(cfg.inner, **{attr: value})
        elif part == "sub":
            cfg.al.sub_tol = dataclasses.replace(cfg.al.sub_tol, **{attr: value})
        elif part == "al":
            setattr(cfg.al, attr, value)
        else:
            setattr(cfg, attr, value)
    return cfg


def _int_list(text: str) -> list[int]:
    """``"0-3, 7"`` -> ``[0, 1, 2, 3, 7]``."""
    out = []
    for part in text.replace(" ", "").split(","):
        if not part:
            continue
        if "-" in part[1:]:
            lo, hi = part.split("-", 1)
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(int(part))
    return out


def config_from_text(text: str, base_dir: Path | None = None) -> ExperimentConfig:
    """Build a config from a flat key-value document.

    Recognized keys: ``turbines``, ``scenarios``, ``seeds``, ``formulations``,
    ``budget``, ``output``, ``allow_large``, ``concurrent`` and any solver
    override name; physical parameters may be overridden with a
    ``param.`` prefix (``param.freestream_speed = 9``).
    """
    values = parse_key_values(text)
    kw = {}
    overrides = {}
    params = {}
    for key, value in values.items():
        if key == "turbines":
            kw["turbine_counts"] = _int_list(value)
        elif key == "scenarios":
            kw["scenarios"] = int(value)
        elif key == "seeds":
            kw["seeds"] = _int_list(value)
        elif key == "formulations":
            kw["formulations"] = [s.strip() for s in value.split(",") if s.strip()]
        elif key == "budget":
            kw["budget_s"] = float(value)
        elif key == "output":
            path = Path(value)
            kw["output_dir"] = path if path.is_absolute() or base_dir is None else base_dir / path
        elif key in ("allow_large", "concurrent"):
            kw[key] = _parse_bool(value)
        elif key.startswith("param."):
            params[key[len("param."):]] = float(value)
        elif key in _OVERRIDES:
            overrides[key] = value
        else:
            raise ValueError(f"unknown config key {key!r}")
    if params:
        kw["params"] = default_params().replace(**params)
    return ExperimentConfig(overrides=overrides, **kw)


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    return config_from_text(path.read_text(), base_dir=path.parent)


@dataclass
class ResultRecord:
    formulation: str
    n_turbines: int
    w: int
    seed: int
    runtime_s: float
    objective_gwh: float
    converged: bool
    inner_evals: int
    warm_savings: float

    def row(self) -> list[str]:
        def num(v):
            return "nan" if isinstance(v, float) and math.isnan(v) else repr(v)
        return [self.formulation, str(self.n_turbines), str(self.w), str(self.seed),
                num(float(self.runtime_s)), num(float(self.objective_gwh)),
                "true" if self.converged else "false", str(int(self.inner_evals)),
                num(float(self.warm_savings))]


def build_problem(n_turbines: int, scenarios: int, seed: int,
                  params: PhysicalParams | None = None):
    """Problem and random feasible start for one (size, seed) cell."""
    params = params or default_params()
    region = farm_region_for(n_turbines, params)
    problem = JointProblem(params, region, sample_wind_rose(scenarios, seed), n_turbines)
    return problem, random_feasible_layout(region, n_turbines, seed)


def run_one(formulation: str, problem: JointProblem, start, config: SolverConfig) -> SolveReport:
    formulation = formulation.upper()
    if formulation == "MLR":
        return solve_mlr(problem, start, config)
    if formulation == "JOINT":
        return solve_joint(problem, start, config=config)
    if formulation == "ADMM":
        return admm_solve(problem, start, AdmmConfig(solver=config))
    raise ValueError(f"unknown formulation {formulation!r}")


def report_name(formulation: str, n: int, w: int, seed: int) -> str:
    return f"{formulation.lower()}_n{n}_w{w}_s{seed}.json"


def _task(args):
    formulation, n, seed, config = args
    problem, start = build_problem(n, config.scenarios, seed, config.params)
    solver = solver_config(config.overrides, config.budget_s)
    try:
        report = run_one(formulation, problem, start, solver)
    except Exception as exc:  # a failed run becomes a row, never aborts the batch
        log.exception("run %s n=%d seed=%d failed", formulation, n, seed)
        return ResultRecord(formulation, n, config.scenarios, seed, math.nan, math.nan, False,
                            0, math.nan), None, f"{type(exc).__name__}: {exc}"
    record = ResultRecord(formulation, n, problem.n_scenarios, seed, report.runtime_s,
                          report.objective_gwh, report.converged, report.inner_evaluations,
                          report.stats.get("warm_savings", math.nan))
    return record, report, None


def write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\r\n")  # RFC 4180
        writer.writerow(header)
        writer.writerows(rows)


def summarize(records) -> list[list[str]]:
    """One row per (formulation, N, W) cell with mean/min/max runtime and objective."""
    cells = {}
    for r in records:
        cells.setdefault((r.formulation, r.n_turbines, r.w), []).append(r)
    rows = []
    for (form, n, w), rs in sorted(cells.items()):
        rt = np.array([r.runtime_s for r in rs], dtype=float)
        obj = np.array([r.objective_gwh for r in rs], dtype=float)
        ok = ~np.isnan(obj)

        def stat(fn, a):
            return repr(float(fn(a[ok]))) if ok.any() else "nan"

        rows.append([form, str(n), str(w), str(len(rs)), stat(np.mean, rt), stat(np.min, rt),
                     stat(np.max, rt), stat(np.mean, obj), stat(np.min, obj), stat(np.max, obj),
                     str(sum(r.converged for r in rs))])
    return rows


def run_experiments(config: ExperimentConfig) -> list[ResultRecord]:
    """Run every (formulation, size, seed) cell and write the result files."""
    out = config.output_dir
    (out / "reports").mkdir(parents=True, exist_ok=True)
    tasks = [(f, n, s, config) for n in config.turbine_counts for f in config.formulations
             for s in config.seeds]
    if config.concurrent:
        log.warning("concurrent runs share the CPU; runtimes are not comparable")
        with ProcessPoolExecutor() as pool:
            results = list(pool.map(_task, tasks))
    else:
        results = [_task(t) for t in tasks]

    records = []
    for (formulation, n, seed, _), (record, report, error) in zip(tasks, results):
        records.append(record)
        name = out / "reports" / report_name(formulation, n, config.scenarios, seed)
        if report is not None:
            name.write_text(report.to_json(indent=1))
        else:
            name.with_suffix(".error.txt").write_text(error + "\n")
    write_csv(out / "results.csv", CSV_HEADER, [r.row() for r in records])
    write_csv(out / "summary.csv", SUMMARY_HEADER, summarize(records))
    return records


def validate_report(report: SolveReport, rtol: float = 1e-9) -> bool:
    """Whether a stored report's objective matches a fresh forward evaluation."""
    fresh = annual_energy_gwh(report.recompute_expected_power())
    return abs(fresh - report.objective_gwh) <= rtol * abs(fresh)


DEFAULT_CONFIG = """\
# Desk-scale reproduction of the 25-turbine column of the runtime/objective table.
turbines = 25
scenarios = 36
seeds = 0-9
formulations = MLR, JOINT
budget = 3600
output = results
"""
