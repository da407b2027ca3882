"""Joint layout and yaw optimization: multilevel (MLR) and joint (JOINT) forms.

The multilevel form optimizes positions only. Each objective evaluation
re-solves one yaw problem per wind scenario, warm-started from the yaws of
the last accepted layout. The layout gradient is the partial gradient of
power taken at those optimal yaws, so no extra solves are needed for it.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import asdict, dataclass, field
from typing import Any

import numpy as np

from . import wake
from .auglag import ALSettings, augmented_lagrangian
from .gradients import scenario_power_gradients
from .lbfgsb import (BoxProblem, SolverState, Tolerances, hot_start, lbfgsb_minimize,
                     minimize_lockstep)
from .params import (FarmRegion, PhysicalParams, WindRose, annual_energy_gwh,
                     feasibility_check, split_layout)
from .sampling import random_feasible_layout


@dataclass(frozen=True)
class JointProblem:
    params: PhysicalParams
    region: FarmRegion
    rose: WindRose
    n_turbines: int
    tie_break_weight: float = 1e-6

    def __post_init__(self):
        if self.n_turbines < 1:
            raise ValueError("need at least one turbine")
        if self.tie_break_weight < 0:
            raise ValueError("tie_break_weight must be nonnegative")

    @property
    def n_scenarios(self) -> int:
        return self.rose.n_scenarios

    @property
    def no_wake_bound(self) -> float:
        """Expected power if no turbine were ever waked, in watts."""
        return (self.n_turbines * self.params.single_turbine_power
                * math.fsum(self.rose.probabilities))  # order-independent


def _default_inner() -> Tolerances:
    return Tolerances(pg_tol=1e-7, f_tol=1e-10, max_iter=500)


def _default_al() -> ALSettings:
    return ALSettings(sub_tol=Tolerances(pg_tol=1e-6, f_tol=1e-5))


@dataclass
class SolverConfig:
    """Settings shared by the MLR, JOINT and ADMM drivers.

    Inner tolerances apply to yaw problems scaled by single-turbine power;
    outer tolerances apply to objectives scaled by the no-wake bound with
    positions measured in rotor diameters.
    """

    inner: Tolerances = field(default_factory=_default_inner)
    al: ALSettings = field(default_factory=_default_al)
    jump_guard_deg: float = 5.0
    guard_halvings: int = 4
    time_budget: float | None = None
    repair_seed: int = 0
    executor: Any = None


# ----------------------------------------------------------------------------
# inner problem


def inner_objective(layout, yaws, wind_angle, params: PhysicalParams,
                    tie_break_weight: float = 1e-6, *, coords=None, constants=None):
    """Negated power plus a small quadratic yaw regularizer, and its yaw gradient.

    The regularizer ``eps * P1 * |yaw|^2 / N`` makes the optimal yaw of a
    turbine whose wake hits nothing unique (it is zero).
    """
    yaws = np.asarray(yaws, dtype=float)
    n = yaws.size
    p1 = params.single_turbine_power
    power, _, g_yaw = scenario_power_gradients(layout, yaws, wind_angle, params,
                                               coords=coords, constants=constants,
                                               wrt_layout=False)
    reg = tie_break_weight * p1 / n
    value = -(power - reg * (yaws @ yaws))
    return float(value), -(g_yaw - 2.0 * reg * yaws)


@dataclass
class ScenarioEntry:
    """Warm-start data for one wind scenario."""

    yaws: np.ndarray | None = None
    state: SolverState | None = None
    power: float = math.nan
    evaluations: int = 0
    converged: bool = True


@dataclass
class ScenarioCache:
    entries: list
    layout: np.ndarray | None = None

    @classmethod
    def empty(cls, n_scenarios: int) -> ScenarioCache:
        return cls([ScenarioEntry() for _ in range(n_scenarios)])

    @property
    def yaws(self) -> np.ndarray:
        return np.stack([e.yaws for e in self.entries])

    @property
    def powers(self) -> np.ndarray:
        return np.array([e.power for e in self.entries])


def optimal_power(layout, wind_angle, params: PhysicalParams, entry: ScenarioEntry | None = None,
                  tol: Tolerances | None = None, tie_break_weight: float = 1e-6):
    """Best achievable power over yaw settings for a fixed layout and direction.

    Returns ``(power, yaws, new_entry)``. The reported power excludes the
    tie-break regularizer. A populated ``entry`` hot-starts the solve.
    """
    tol = tol or _default_inner()
    layout = np.asarray(layout, dtype=float)
    n = layout.size // 2
    p1 = params.single_turbine_power
    coords = wake.relative_coordinates(layout, float(wind_angle))
    constants = wake._Constants(params)

    def fun(yaws):
        value, grad = inner_objective(layout, yaws, wind_angle, params, tie_break_weight,
                                      coords=coords, constants=constants)
        return value / p1, grad / p1

    problem = BoxProblem(fun, np.full(n, params.yaw_min), np.full(n, params.yaw_max))
    if entry is not None and entry.state is not None:
        res = hot_start(entry.state, problem, tol)
    else:
        res = lbfgsb_minimize(problem, np.zeros(n), tol)
    yaws = res.x
    power = float(wake._wake_state(layout, yaws, float(wind_angle), params,
                                   coords, constants)["power"])
    new = ScenarioEntry(yaws, res.state, power, res.evaluations, res.converged)
    return power, yaws, new


def solve_scenarios(layout, rose: WindRose, params: PhysicalParams,
                    cache: ScenarioCache | None = None, tol: Tolerances | None = None,
                    tie_break_weight: float = 1e-6, executor=None) -> ScenarioCache:
    """Yaw-optimal solves for every scenario of ``rose`` at a fixed layout.

    By default the W solves advance in lockstep and each round evaluates all
    unfinished scenarios in one vectorized wake call; the iterates are the
    same as solving them one at a time. With an ``executor`` the solves are
    instead mapped over its workers, one ``optimal_power`` call each.
    """
    tol = tol or _default_inner()
    layout = np.asarray(layout, dtype=float)
    cache = cache or ScenarioCache.empty(rose.n_scenarios)
    if len(cache.entries) != rose.n_scenarios:
        raise ValueError("cache does not match the wind rose")
    if executor is not None:
        def solve(w):
            return optimal_power(layout, rose.angles[w], params, cache.entries[w], tol,
                                 tie_break_weight)[2]
        return ScenarioCache(list(executor.map(solve, range(rose.n_scenarios))), layout.copy())

    n = layout.size // 2
    p1 = params.single_turbine_power
    coords = wake.relative_coordinates(layout, rose.angles)
    constants = wake._Constants(params)
    reg = tie_break_weight * p1 / n

    def batch(active, yaws):
        sub = wake.RelativeCoords(coords.d[active], coords.r[active])
        power, _, g_yaw = scenario_power_gradients(layout, yaws, rose.angles[active], params,
                                                   coords=sub, constants=constants,
                                                   wrt_layout=False)
        value = -(power - reg * np.einsum("ij,ij->i", yaws, yaws))
        return value / p1, -(g_yaw - 2.0 * reg * yaws) / p1

    starts = [e.state if e.state is not None else np.zeros(n) for e in cache.entries]
    results = minimize_lockstep(batch, np.full(n, params.yaw_min), np.full(n, params.yaw_max),
                                starts, tol)
    entries = [ScenarioEntry(r.x, r.state, math.nan, r.evaluations, r.converged) for r in results]
    out = ScenarioCache(entries, layout.copy())
    powers = wake._wake_state(layout, out.yaws, rose.angles, params, coords, constants)["power"]
    for e, p in zip(entries, powers):
        e.power = float(p)
    return out


def outer_objective(layout, rose: WindRose, params: PhysicalParams, cache: ScenarioCache | None = None,
                    tol: Tolerances | None = None, tie_break_weight: float = 1e-6, executor=None):
    """Expected yaw-optimal power and its layout gradient.

    Returns ``(f, grad, new_cache)``; ``cache`` itself is left untouched.
    The gradient is the partial layout gradient at the optimal yaws, one
    batched evaluation with no further inner solves.
    """
    layout = np.asarray(layout, dtype=float)
    new_cache = solve_scenarios(layout, rose, params, cache, tol, tie_break_weight, executor)
    powers, grads, _ = scenario_power_gradients(layout, new_cache.yaws, rose.angles, params)
    for e, p in zip(new_cache.entries, powers):
        e.power = float(p)
    f = float(rose.probabilities @ powers)
    grad = rose.probabilities @ grads
    return f, grad, new_cache


# ----------------------------------------------------------------------------
# shared outer machinery


def interdistance_constraints(n: int, separation: float):
    """Pairwise spacing constraints ``c >= 0`` on a stacked ``[x; y]`` vector.

    ``c_ij = (|p_i - p_j|^2 - s^2) / (2 s)``, which is smooth and close to
    ``|p_i - p_j| - s`` near the boundary. Returns ``x -> (c, J^T)``.
    """
    iu, ju = np.triu_indices(n, 1)
    s = separation

    def evaluate(v):
        x, y = v[:n], v[n:2 * n]
        dx, dy = x[iu] - x[ju], y[iu] - y[ju]
        c = (dx * dx + dy * dy - s * s) / (2.0 * s)

        def jt(mult):
            gx = mult * dx / s
            gy = mult * dy / s
            out = np.zeros_like(v)
            out[:n] = np.bincount(iu, gx, n) - np.bincount(ju, gx, n)
            out[n:2 * n] = np.bincount(iu, gy, n) - np.bincount(ju, gy, n)
            return out

        return c, jt

    return evaluate


def repair_layout(layout, region: FarmRegion, margin: float = 1e-6, max_passes: int = 200):
    """Nudge a nearly feasible layout until it is exactly feasible.

    Pairs closer than the minimum spacing are pushed apart symmetrically and
    coordinates are clipped into the region. Meant for the sub-meter
    residuals an augmented Lagrangian leaves behind.
    """
    x, y = (a.copy() for a in split_layout(layout))
    n = x.size
    target = region.min_separation + margin
    for _ in range(max_passes):
        np.clip(x, 0.0, region.x_max, out=x)
        np.clip(y, 0.0, region.y_max, out=y)
        dx = x[:, None] - x[None, :]
        dy = y[:, None] - y[None, :]
        dist = np.hypot(dx, dy)
        np.fill_diagonal(dist, np.inf)
        if dist.min() >= region.min_separation:
            break
        iu, ju = np.nonzero(np.triu(dist < target, 1))
        for i, j in zip(iu, ju):
            d = math.hypot(x[i] - x[j], y[i] - y[j])
            if d >= target:
                continue
            ux, uy = ((x[i] - x[j]) / d, (y[i] - y[j]) / d) if d > 0 else (1.0, 0.0)
            push = 0.5 * (target - d) + margin
            x[i] += push * ux
            y[i] += push * uy
            x[j] -= push * ux
            y[j] -= push * uy
    out = np.concatenate([x, y])
    if feasibility_check(out, region) and n > 1:
        raise RuntimeError("could not repair layout to exact feasibility")
    return out


def _ensure_feasible(start, problem: JointProblem, config: SolverConfig):
    start = np.asarray(start, dtype=float)
    if start.size != 2 * problem.n_turbines:
        raise ValueError("start layout has the wrong number of turbines")
    if feasibility_check(start, problem.region):
        return random_feasible_layout(problem.region, problem.n_turbines, config.repair_seed), True
    return start, False


# ----------------------------------------------------------------------------
# reports


@dataclass
class SolveReport:
    formulation: str
    layout: np.ndarray
    yaws: np.ndarray
    expected_power: float
    objective_gwh: float
    runtime_s: float
    converged: bool
    message: str
    rose_angles: np.ndarray
    rose_probabilities: np.ndarray
    params: dict
    trace: list = field(default_factory=list)
    inner_evaluations: int = 0
    inner_eval_history: list = field(default_factory=list)
    stats: dict = field(default_factory=dict)

    @property
    def n_turbines(self) -> int:
        return self.layout.size // 2

    @property
    def n_scenarios(self) -> int:
        return self.rose_angles.size

    def recompute_expected_power(self) -> float:
        params = PhysicalParams(**self.params)
        rose = WindRose(self.rose_angles, self.rose_probabilities)
        return wake.expected_power(self.layout, self.yaws, rose, params)

    def to_dict(self) -> dict:
        out = asdict(self)
        for key in ("layout", "yaws", "rose_angles", "rose_probabilities"):
            out[key] = np.asarray(getattr(self, key)).tolist()
        out["n_turbines"] = self.n_turbines
        out["n_scenarios"] = self.n_scenarios
        return out

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)

    @classmethod
    def from_dict(cls, data: dict) -> SolveReport:
        data = dict(data)
        data.pop("n_turbines", None)
        data.pop("n_scenarios", None)
        for key in ("layout", "yaws", "rose_angles", "rose_probabilities"):
            data[key] = np.asarray(data[key], dtype=float)
        return cls(**data)

    @classmethod
    def from_json(cls, text: str) -> SolveReport:
        return cls.from_dict(json.loads(text))


def _params_dict(params: PhysicalParams) -> dict:
    return {k: v for k, v in asdict(params).items()
            if k not in ("thrust_coefficient", "power_coefficient")}


def make_report(formulation, problem: JointProblem, layout, yaws, runtime, converged,
                message, **extra) -> SolveReport:
    """Build a report whose objective is a fresh forward-model evaluation."""
    yaws = np.asarray(yaws, dtype=float).reshape(problem.n_scenarios, problem.n_turbines)
    power = wake.expected_power(layout, yaws, problem.rose, problem.params)
    return SolveReport(formulation, np.asarray(layout, dtype=float), yaws, power,
                       annual_energy_gwh(power), runtime, converged, message,
                       np.asarray(problem.rose.angles), np.asarray(problem.rose.probabilities),
                       _params_dict(problem.params), **extra)


# ----------------------------------------------------------------------------
# drivers


class _MultilevelObjective:
    """Scaled outer objective with accepted/trial cache bookkeeping."""

    def __init__(self, problem: JointProblem, config: SolverConfig):
        self.problem = problem
        self.config = config
        self.D = problem.params.rotor_diameter
        self.scale = problem.no_wake_bound
        self.accepted = ScenarioCache.empty(problem.n_scenarios)
        self.trial = None
        self.trial_z = None
        self.eval_history = []  # (accepted outer iterates so far, mean inner evals per scenario)
        self.total_evals = 0
        self.outer_iterations = 0
        self.rejected_jump = None
        self.guard_rejections = 0

    def __call__(self, z):
        p = self.problem
        f, grad, cache = outer_objective(z * self.D, p.rose, p.params, self.accepted,
                                         self.config.inner, p.tie_break_weight,
                                         self.config.executor)
        evals = [e.evaluations for e in cache.entries]
        self.eval_history.append((self.outer_iterations, float(np.mean(evals))))
        self.total_evals += int(np.sum(evals))
        self.trial, self.trial_z = cache, z.copy()
        return -f / self.scale, -grad * self.D / self.scale

    def accept(self, state):
        self.outer_iterations += 1
        self.rejected_jump = None
        if self.trial_z is not None and np.array_equal(state.x, self.trial_z):
            self.accepted = self.trial

    def guard(self, z):
        if self.trial is None or self.accepted.entries[0].yaws is None:
            return True
        if not np.array_equal(z, self.trial_z):
            return True
        jump = float(np.max(np.abs(self.trial.yaws - self.accepted.yaws)))
        if jump <= math.radians(self.config.jump_guard_deg):
            return True
        # A smooth argmax moves about half as far on a halved step. If it did not,
        # the jump is a switch between local maxima that no step size avoids.
        if self.rejected_jump is not None and jump > 0.5 * self.rejected_jump:
            return True
        self.rejected_jump = jump
        self.guard_rejections += 1
        return False


def warm_savings(eval_history, start: int = 5) -> float:
    """Warm inner cost relative to the cold first solve.

    ``eval_history`` holds ``(outer_iteration, mean_evals)`` per objective
    call. Returns the mean over calls made once ``start`` outer iterates had
    been accepted, divided by the first (cold) call's mean; NaN if no call
    qualifies.
    """
    if not eval_history or eval_history[0][1] <= 0:
        return math.nan
    warm = [m for it, m in eval_history if it >= start]
    if not warm:
        return math.nan
    return float(np.mean(warm) / eval_history[0][1])


def solve_mlr(problem: JointProblem, start, config: SolverConfig | None = None) -> SolveReport:
    """Optimize the layout with yaws eliminated by per-scenario inner solves."""
    config = config or SolverConfig()
    start, resampled = _ensure_feasible(start, problem, config)
    D = problem.params.rotor_diameter
    n = problem.n_turbines
    lower, upper = problem.region.bounds(n)
    obj = _MultilevelObjective(problem, config)
    cons = interdistance_constraints(n, problem.region.min_separation / D)

    t0 = time.perf_counter()
    deadline = None if config.time_budget is None else t0 + config.time_budget
    al = augmented_lagrangian(obj, cons, start / D, lower / D, upper / D, config.al,
                              on_accept=obj.accept, step_guard=obj.guard,
                              max_guard_halvings=config.guard_halvings, deadline=deadline)
    layout = repair_layout(al.x * D, problem.region)
    final = outer_objective(layout, problem.rose, problem.params, obj.accepted,
                            config.inner, problem.tie_break_weight)[2]
    runtime = time.perf_counter() - t0

    stats = dict(al_iterations=al.iterations, max_violation_m=al.max_violation * D,
                 penalty=al.penalty, resampled_start=resampled,
                 warm_savings=warm_savings(obj.eval_history),
                 guard_rejections=obj.guard_rejections,
                 inner_converged=all(e.converged for e in final.entries))
    return make_report("MLR", problem, layout, final.yaws, runtime, al.converged, al.message,
                       trace=al.trace, inner_evaluations=obj.total_evals,
                       inner_eval_history=[list(e) for e in obj.eval_history], stats=stats)


def joint_objective(v, problem: JointProblem, scale: float):
    """Scaled negative expected power over ``[x/D; y/D; yaws per scenario]``."""
    n, W = problem.n_turbines, problem.n_scenarios
    D = problem.params.rotor_diameter
    layout = v[:2 * n] * D
    yaws = v[2 * n:].reshape(W, n)
    powers, g_layout, g_yaw = scenario_power_gradients(layout, yaws, problem.rose.angles,
                                                       problem.params)
    p = problem.rose.probabilities
    f = float(p @ powers)
    grad = np.concatenate([(p @ g_layout) * D, (p[:, None] * g_yaw).ravel()])
    return -f / scale, -grad / scale


def solve_joint(problem: JointProblem, start, start_yaws=None,
                config: SolverConfig | None = None) -> SolveReport:
    """Optimize positions and all scenario yaws as one variable vector."""
    config = config or SolverConfig()
    start, resampled = _ensure_feasible(start, problem, config)
    D = problem.params.rotor_diameter
    n, W = problem.n_turbines, problem.n_scenarios
    if start_yaws is None:
        start_yaws = np.zeros((W, n))
    start_yaws = np.asarray(start_yaws, dtype=float).reshape(W, n)
    lo_l, up_l = problem.region.bounds(n)
    lower = np.concatenate([lo_l / D, np.full(W * n, problem.params.yaw_min)])
    upper = np.concatenate([up_l / D, np.full(W * n, problem.params.yaw_max)])
    scale = problem.no_wake_bound
    evals = [0]

    def objective(v):
        evals[0] += 1
        return joint_objective(v, problem, scale)

    cons = interdistance_constraints(n, problem.region.min_separation / D)

    t0 = time.perf_counter()
    deadline = None if config.time_budget is None else t0 + config.time_budget
    v0 = np.concatenate([start / D, start_yaws.ravel()])
    al = augmented_lagrangian(objective, cons, v0, lower, upper, config.al, deadline=deadline)
    layout = repair_layout(al.x[:2 * n] * D, problem.region)
    runtime = time.perf_counter() - t0

    stats = dict(al_iterations=al.iterations, max_violation_m=al.max_violation * D,
                 penalty=al.penalty, resampled_start=resampled, objective_evaluations=evals[0])
    return make_report("JOINT", problem, layout, al.x[2 * n:], runtime, al.converged,
                       al.message, trace=al.trace, stats=stats)
