"""Consensus ADMM over per-scenario copies of the layout.

Every wind scenario gets its own layout copy and yaw vector. A round solves
each scenario's layout-and-yaw problem with a proximal pull toward the
consensus layout, averages the copies into a new consensus, and takes a
dual ascent step on the disagreement. Like the multilevel solver it works
in normalized units: positions in rotor diameters and power divided by the
no-wake bound, so residuals and penalties are comparable across sizes.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .auglag import augmented_lagrangian
from .gradients import scenario_power_gradients
from .mlr import (JointProblem, SolveReport, SolverConfig, _ensure_feasible,
                  interdistance_constraints, make_report, repair_layout, solve_scenarios)


@dataclass
class AdmmConfig:
    max_iter: int = 100
    penalty: float | None = None  # None: 1e-2 / W, near a scenario objective's curvature
    residual_tol: float = 1e-3  # in rotor diameters
    residual_balancing: bool = False
    balance_ratio: float = 10.0
    solver: SolverConfig = field(default_factory=SolverConfig)
    executor: object = None


@dataclass
class AdmmState:
    """Iterate of the consensus scheme, in normalized units.

    ``consensus`` is ``(2N,)``; ``layouts`` and ``duals`` are ``(W, 2N)``;
    ``yaws`` is ``(W, N)``.
    """

    consensus: np.ndarray
    layouts: np.ndarray
    yaws: np.ndarray
    duals: np.ndarray
    penalty: float
    primal_residual: float = math.inf
    dual_residual: float = math.inf
    subproblems_converged: list = field(default_factory=list)

    @classmethod
    def start(cls, layout_d, n_scenarios: int, penalty: float) -> AdmmState:
        z = np.asarray(layout_d, dtype=float)
        n = z.size // 2
        return cls(z.copy(), np.tile(z, (n_scenarios, 1)), np.zeros((n_scenarios, n)),
                   np.zeros((n_scenarios, z.size)), penalty)

    def copy(self) -> AdmmState:
        return AdmmState(self.consensus.copy(), self.layouts.copy(), self.yaws.copy(),
                         self.duals.copy(), self.penalty, self.primal_residual,
                         self.dual_residual, list(self.subproblems_converged))


def _exact_mean(rows: np.ndarray) -> np.ndarray:
    # correctly rounded sums do not depend on scenario order
    return np.array([math.fsum(col) for col in rows.T]) / rows.shape[0]


def subproblem_objective(v, w: int, state: AdmmState, problem: JointProblem):
    """Scaled ``-p P + nu^T (z - zbar) + mu |z - zbar|^2`` over ``v = [z; yaws]``."""
    n = problem.n_turbines
    D = problem.params.rotor_diameter
    scale = problem.no_wake_bound
    p = problem.rose.probabilities[w]
    z, yaws = v[:2 * n], v[2 * n:]
    power, g_layout, g_yaw = scenario_power_gradients(z * D, yaws, problem.rose.angles[w],
                                                      problem.params)
    gap = z - state.consensus
    nu, mu = state.duals[w], state.penalty
    value = -p * power / scale + nu @ gap + mu * (gap @ gap)
    grad = np.concatenate([-p * g_layout * D / scale + nu + 2.0 * mu * gap,
                           -p * g_yaw / scale])
    return float(value), grad


def admm_subproblem(w: int, state: AdmmState, problem: JointProblem,
                    config: AdmmConfig | None = None):
    """Solve scenario ``w`` from its previous iterate; returns ``(z_w, yaws_w, converged)``."""
    config = config or AdmmConfig()
    n = problem.n_turbines
    D = problem.params.rotor_diameter
    lo, up = problem.region.bounds(n)
    lower = np.concatenate([lo / D, np.full(n, problem.params.yaw_min)])
    upper = np.concatenate([up / D, np.full(n, problem.params.yaw_max)])
    cons = interdistance_constraints(n, problem.region.min_separation / D)
    v0 = np.concatenate([state.layouts[w], state.yaws[w]])
    res = augmented_lagrangian(lambda v: subproblem_objective(v, w, state, problem), cons, v0,
                               lower, upper, config.solver.al)
    return res.x[:2 * n], res.x[2 * n:], res.converged


def admm_coordinate(state: AdmmState) -> np.ndarray:
    """Closed-form consensus ``mean_w(z_w + nu_w / (2 mu))``."""
    if not state.penalty > 0:
        raise ValueError("penalty must be positive")
    return _exact_mean(state.layouts + state.duals / (2.0 * state.penalty))


def coordination_gradient(consensus, state: AdmmState) -> np.ndarray:
    """Gradient in ``zbar`` of ``sum_w [nu_w^T (z_w - zbar) + mu |z_w - zbar|^2]``."""
    gap = state.layouts - consensus
    return np.sum(-state.duals - 2.0 * state.penalty * gap, axis=0)


def admm_dual_update(state: AdmmState) -> np.ndarray:
    """Dual ascent ``nu_w + 2 mu (z_w - zbar)``."""
    return state.duals + 2.0 * state.penalty * (state.layouts - state.consensus)


def admm_solve(problem: JointProblem, start, config: AdmmConfig | None = None) -> SolveReport:
    """Run consensus ADMM and polish the yaws on the final consensus layout."""
    config = config or AdmmConfig()
    start, resampled = _ensure_feasible(start, problem, config.solver)
    D = problem.params.rotor_diameter
    W = problem.n_scenarios
    penalty = config.penalty if config.penalty is not None else 1e-2 / W
    state = AdmmState.start(start / D, W, penalty)
    trace = []
    converged = False
    message = "iteration limit reached"
    t0 = time.perf_counter()

    def solve(w):
        return admm_subproblem(w, state, problem, config)

    k = 0
    for k in range(1, config.max_iter + 1):
        ws = range(W)
        results = (list(config.executor.map(solve, ws)) if config.executor is not None
                   else [solve(w) for w in ws])
        state.layouts = np.stack([r[0] for r in results])
        state.yaws = np.stack([r[1] for r in results])
        state.subproblems_converged = [bool(r[2]) for r in results]
        previous = state.consensus
        state.consensus = admm_coordinate(state)
        state.duals = admm_dual_update(state)
        state.primal_residual = float(np.max(np.linalg.norm(state.layouts - state.consensus,
                                                            axis=1)))
        state.dual_residual = float(np.linalg.norm(state.consensus - previous))
        trace.append(dict(iteration=k, primal_residual=state.primal_residual,
                          dual_residual=state.dual_residual, penalty=state.penalty,
                          subproblems_converged=sum(state.subproblems_converged)))
        if max(state.primal_residual, state.dual_residual) <= config.residual_tol:
            converged, message = True, "consensus residuals below tolerance"
            break
        if config.residual_balancing:
            if state.primal_residual > config.balance_ratio * state.dual_residual:
                state.penalty *= 2.0
            elif state.dual_residual > config.balance_ratio * state.primal_residual:
                state.penalty /= 2.0

    try:
        layout = repair_layout(state.consensus * D, problem.region)
    except RuntimeError:
        # a far-from-consensus average can be badly infeasible; fall back to the nearest copy
        w = int(np.argmin(np.linalg.norm(state.layouts - state.consensus, axis=1)))
        layout = repair_layout(state.layouts[w] * D, problem.region)
        message += "; consensus layout replaced by nearest scenario copy"
    final = solve_scenarios(layout, problem.rose, problem.params, None, config.solver.inner,
                            problem.tie_break_weight)
    runtime = time.perf_counter() - t0
    stats = dict(admm_iterations=k, primal_residual_m=state.primal_residual * D,
                 dual_residual_m=state.dual_residual * D, penalty=state.penalty,
                 resampled_start=resampled)
    return make_report("ADMM", problem, layout, final.yaws, runtime, converged, message,
                       trace=trace, stats=stats)
