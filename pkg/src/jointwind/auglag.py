"""Augmented Lagrangian outer loop for ``min F(x)`` s.t. ``c(x) >= 0``, box bounds.

Inequalities enter through the Powell-Hestenes-Rockafellar penalty and
every subproblem is a pure box problem handed to :mod:`jointwind.lbfgsb`.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .lbfgsb import BoxProblem, Tolerances, lbfgsb_minimize


@dataclass
class ALSettings:
    initial_penalty: float = 10.0
    penalty_growth: float = 10.0
    violation_shrink: float = 0.25
    max_outer: int = 50
    max_sub_iter: int = 200
    objective_rtol: float = 1e-5
    violation_tol: float = 1e-3
    sub_tol: Tolerances = field(default_factory=Tolerances)


class BudgetExceeded(Exception):
    """Raised from inside an objective when the wall-clock budget runs out."""


@dataclass
class ALResult:
    x: np.ndarray
    objective: float
    max_violation: float
    multipliers: np.ndarray
    penalty: float
    converged: bool
    iterations: int
    trace: list
    message: str


def phr_penalty(c, mult, penalty):
    """PHR term for ``c >= 0`` and its derivative with respect to ``c``."""
    active = c < mult / penalty
    value = np.where(active, -mult * c + 0.5 * penalty * c ** 2, -0.5 * mult ** 2 / penalty)
    dvalue = np.where(active, penalty * c - mult, 0.0)
    return float(value.sum()), dvalue


def augmented_lagrangian(objective, constraints, x0, lower, upper,
                         settings: ALSettings | None = None, *,
                         on_accept=None, step_guard=None, max_guard_halvings=4,
                         deadline=None) -> ALResult:
    """Run the outer loop.

    Parameters
    ----------
    objective : callable
        ``x -> (F, dF/dx)``.
    constraints : callable
        ``x -> (c, J)`` with ``c`` of shape ``(m,)`` and a callable or dense
        ``J`` giving ``J^T v`` via ``J(v)``.
    on_accept : callable, optional
        Forwarded to the box solver as its iterate callback.
    step_guard : callable, optional
        Forwarded to the box solver with ``max_guard_halvings``.
    deadline : float, optional
        ``time.perf_counter()`` value after which the loop stops early.
    """
    s = settings or ALSettings()
    x = np.clip(np.asarray(x0, dtype=float), lower, upper)
    c0, _ = constraints(x)
    mult = np.zeros_like(c0)
    penalty = s.initial_penalty
    prev_violation = np.inf
    prev_obj = None
    trace = []
    converged = False
    message = "outer iteration limit reached"
    last_obj = np.nan
    violation = np.inf

    memo = {}  # the latest evaluated point; AL iterations revisit it

    def cached(z):
        if not np.array_equal(memo.get("x"), z):
            memo.update(x=z.copy(), value=objective(z))
        return memo["value"]

    def merit(z):
        if deadline is not None and time.perf_counter() > deadline:
            raise BudgetExceeded
        f, g = cached(z)
        c, jt = constraints(z)
        pen, dpen = phr_penalty(c, mult, penalty)
        return f + pen, g + jt(dpen)

    latest = [x]

    def accepted(state):
        latest[0] = state.x.copy()
        if on_accept is not None:
            on_accept(state)

    def objective_at(z):
        return cached(z)[0]

    sub_tol = Tolerances(**{**s.sub_tol.__dict__, "max_iter": s.max_sub_iter})
    k = 0
    for k in range(1, s.max_outer + 1):
        try:
            res = lbfgsb_minimize(BoxProblem(merit, lower, upper), x, sub_tol,
                                  callback=accepted, step_guard=step_guard,
                                  max_guard_halvings=max_guard_halvings)
            x = res.x
        except BudgetExceeded:
            x = latest[0]
            message = "wall-clock budget exhausted"
            f = objective_at(x)
            c, _ = constraints(x)
            violation = float(np.max(np.maximum(-c, 0.0), initial=0.0))
            last_obj = f
            break
        f = objective_at(x)
        c, _ = constraints(x)
        violation = float(np.max(np.maximum(-c, 0.0), initial=0.0))
        last_obj = f
        trace.append(dict(iteration=k, objective=f, merit=res.fun,
                          max_violation=violation, penalty=penalty,
                          sub_iterations=res.iterations, sub_evaluations=res.evaluations))
        mult = np.maximum(0.0, mult - penalty * c)
        small_change = (prev_obj is not None and
                        abs(f - prev_obj) <= s.objective_rtol * max(abs(f), abs(prev_obj), 1e-300))
        if small_change and violation <= s.violation_tol:
            converged, message = True, "objective stalled and constraints satisfied"
            break
        if violation > s.violation_tol and violation > s.violation_shrink * prev_violation:
            penalty *= s.penalty_growth
        prev_violation = violation
        prev_obj = f
    return ALResult(x, last_obj, violation, mult, penalty, converged, k, trace, message)
