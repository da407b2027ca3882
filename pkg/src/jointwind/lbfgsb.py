"""Limited-memory BFGS with simple bounds, and resumable solver state.

The iteration follows Byrd, Lu, Nocedal and Zhu: a generalized Cauchy point
along the projected steepest-descent path fixes the active set, a
quasi-Newton step is taken in the remaining free variables, and a
backtracking Armijo search finishes the step. The Cauchy search is fully
vectorized over breakpoints so large problems do not pay a Python loop.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

STATE_FORMAT = "jointwind-lbfgsb-state"
STATE_VERSION = 1


@dataclass
class Tolerances:
    pg_tol: float = 1e-5
    f_tol: float = 1e-5
    max_iter: int = 15000
    max_eval: int = 15000
    memory: int = 10
    armijo: float = 1e-4
    contraction: float = 0.5
    max_backtracks: int = 40
    curvature_eps: float = 1e-12
    keep_history: bool = False  # hot starts reuse curvature pairs only if set


@dataclass
class BoxProblem:
    """Minimize ``fun(x) -> (value, gradient)`` subject to ``lower <= x <= upper``."""

    fun: Callable[[np.ndarray], tuple[float, np.ndarray]]
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        self.lower = np.asarray(self.lower, dtype=float)
        self.upper = np.asarray(self.upper, dtype=float)
        if self.lower.shape != self.upper.shape:
            raise ValueError("bound shapes differ")
        if np.any(self.lower > self.upper):
            raise ValueError("lower bound exceeds upper bound")

    def project(self, x):
        return np.clip(x, self.lower, self.upper)


@dataclass
class SolverState:
    x: np.ndarray
    f: float = math.nan
    g: np.ndarray | None = None
    s_hist: list = field(default_factory=list)
    y_hist: list = field(default_factory=list)
    theta: float = 1.0
    iterations: int = 0
    evaluations: int = 0

    @property
    def n(self) -> int:
        return self.x.size

    def copy(self) -> SolverState:
        return SolverState(self.x.copy(), self.f, None if self.g is None else self.g.copy(),
                           [s.copy() for s in self.s_hist], [y.copy() for y in self.y_hist],
                           self.theta, self.iterations, self.evaluations)

    def to_text(self) -> str:
        """Versioned plain-text blob; floats round-trip exactly."""
        k = len(self.s_hist)
        has_g = self.g is not None

        def row(v):
            return " ".join(repr(float(t)) for t in v)

        lines = [f"{STATE_FORMAT} {STATE_VERSION}",
                 f"{self.n} {k} {self.iterations} {self.evaluations} {int(has_g)}",
                 f"{float(self.theta)!r} {float(self.f)!r}",
                 row(self.x)]
        if has_g:
            lines.append(row(self.g))
        lines += [row(s) for s in self.s_hist]
        lines += [row(y) for y in self.y_hist]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> SolverState:
        lines = text.splitlines()
        tag, version = lines[0].split()
        if tag != STATE_FORMAT or int(version) != STATE_VERSION:
            raise ValueError(f"unsupported solver state header {lines[0]!r}")
        n, k, iterations, evaluations, has_g = map(int, lines[1].split())
        theta, f = map(float, lines[2].split())

        def vec(i):
            v = np.array([float(t) for t in lines[i].split()])
            if v.size != n:
                raise ValueError(f"line {i + 1}: expected {n} values, got {v.size}")
            return v

        pos = 3
        x = vec(pos)
        pos += 1
        g = None
        if has_g:
            g = vec(pos)
            pos += 1
        s_hist = [vec(pos + i) for i in range(k)]
        y_hist = [vec(pos + k + i) for i in range(k)]
        return cls(x, f, g, s_hist, y_hist, theta, iterations, evaluations)


@dataclass
class BoxResult:
    x: np.ndarray
    fun: float
    converged: bool
    iterations: int
    evaluations: int
    state: SolverState
    message: str = ""


def projected_gradient(x, g, lower, upper):
    return np.clip(x - g, lower, upper) - x


class _Compact:
    """Compact form ``B = theta*I - W M W^T`` of the limited-memory matrix."""

    def __init__(self, s_hist, y_hist, theta):
        self.theta = theta
        self.k = len(s_hist)
        if not self.k:
            return
        S = np.column_stack(s_hist)
        Y = np.column_stack(y_hist)
        SY = S.T @ Y
        Lo = np.tril(SY, -1)
        Minv = np.block([[-np.diag(np.diag(SY)), Lo.T], [Lo, theta * (S.T @ S)]])
        self.M = np.linalg.inv(Minv)
        self.W = np.hstack([Y, theta * S])


def _cauchy_point(x, g, lower, upper, B: _Compact):
    """Generalized Cauchy point of the quadratic model along the projected path.

    Returns the point and a boolean mask of variables left free.
    """
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        t = np.where(g < 0, (x - upper) / g, np.where(g > 0, (x - lower) / g, np.inf))
    t = np.where(np.isnan(t), np.inf, t)
    t = np.maximum(t, 0.0)
    d = np.where(t > 0, -g, 0.0)

    order = np.flatnonzero((t > 0) & np.isfinite(t))
    order = order[np.argsort(t[order], kind="stable")]
    tb = t[order]
    db = d[order]
    gb = g[order]
    t_start = np.concatenate([[0.0], tb])
    seg_len = np.concatenate([np.diff(t_start), [np.inf]])

    def cum(v):
        out = np.zeros((v.shape[0] + 1,) + v.shape[1:])
        np.cumsum(v, axis=0, out=out[1:])
        return out

    gd = g @ d - cum(gb * db)
    dd = d @ d - cum(db * db)
    f1 = gd + B.theta * t_start * dd
    f2 = B.theta * dd
    if B.k:
        wd = B.W.T @ d - cum(B.W[order] * db[:, None])
        wz = cum(B.W[order] * (tb * db)[:, None]) + t_start[:, None] * wd
        wdM = wd @ B.M
        f1 = f1 - np.einsum("ij,ij->i", wdM, wz)
        f2 = f2 - np.einsum("ij,ij->i", wdM, wd)

    with np.errstate(divide="ignore", invalid="ignore"):
        dt = np.where(f2 > 0, np.maximum(0.0, -f1 / f2), 0.0)
    stop = np.flatnonzero((dt < seg_len) | (f2 <= 0) | (f1 >= 0))
    j = stop[0] if stop.size else len(t_start) - 1
    t_star = t_start[j] + (0.0 if f1[j] >= 0 else dt[j])

    xc = x + np.minimum(t, t_star) * d
    hit = t <= t_star
    xc = np.where(hit & (d > 0), upper, np.where(hit & (d < 0), lower, xc))
    free = ~hit | ((d == 0) & (x > lower) & (x < upper))
    return xc, free


def _subspace_step(x, g, xc, free, lower, upper, B: _Compact):
    """Quasi-Newton minimization over the free variables from the Cauchy point."""
    if not np.any(free):
        return xc
    z = xc - x
    theta = B.theta
    if B.k:
        c = B.W.T @ z
        r = (g + theta * z - B.W @ (B.M @ c))[free]
        Wz = B.W[free]
        inner = np.eye(Wz.shape[1]) - (B.M @ (Wz.T @ Wz)) / theta
        v = np.linalg.solve(inner, B.M @ (Wz.T @ r))
        du = -(r / theta + (Wz @ v) / theta ** 2)
    else:
        du = -(g + theta * z)[free] / theta

    xbar = xc.copy()
    xbar[free] = np.clip(xc[free] + du, lower[free], upper[free])
    if g @ (xbar - x) < 0:
        return xbar
    # projection ruined descent: fall back to the truncated step
    lo, hi = lower[free] - xc[free], upper[free] - xc[free]
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        ratio = np.where(du > 0, hi / du, np.where(du < 0, lo / du, np.inf))
    alpha = min(1.0, float(np.min(ratio, initial=np.inf)))
    xbar = xc.copy()
    xbar[free] = xc[free] + alpha * du
    return np.clip(xbar, lower, upper)


def _as_pair(result):
    f, g = result
    return float(f), np.asarray(g, dtype=float)


def _prepare(lower, upper, start, tol: Tolerances):
    if isinstance(start, SolverState):
        state = start.copy()
        if not tol.keep_history:
            state.s_hist, state.y_hist, state.theta = [], [], 1.0
        state.iterations = state.evaluations = 0
    else:
        state = SolverState(np.asarray(start, dtype=float).copy())
    if state.x.shape != lower.shape:
        raise ValueError(f"start has shape {state.x.shape}, bounds have {lower.shape}")
    state.x = np.clip(state.x, lower, upper)
    return state


def _iterate(lower, upper, state: SolverState, tol: Tolerances, callback=None,
             step_guard=None, max_guard_halvings=4):
    """The solver loop as a coroutine.

    Yields points to evaluate and expects ``(f, g)`` to be sent back; the
    final ``BoxResult`` is the generator's return value. Keeping evaluation
    outside lets a driver advance many independent solves in lockstep.
    """
    x = state.x
    f, g = _as_pair((yield x))
    evals = 1
    state.f, state.g = f, g
    if not (math.isfinite(f) and np.all(np.isfinite(g))):
        state.evaluations = evals
        return BoxResult(x, f, False, 0, evals, state, "non-finite objective at start")

    s_hist, y_hist, theta = state.s_hist, state.y_hist, state.theta
    it = 0
    message = "iteration limit reached"
    converged = False
    while True:
        if np.max(np.abs(projected_gradient(x, g, lower, upper)), initial=0.0) <= tol.pg_tol:
            converged, message = True, "projected gradient below tolerance"
            break
        if it >= tol.max_iter or evals >= tol.max_eval:
            break

        B = _Compact(s_hist, y_hist, theta)
        xc, free = _cauchy_point(x, g, lower, upper, B)
        d = _subspace_step(x, g, xc, free, lower, upper, B) - x
        slope = g @ d
        if not slope < 0:
            s_hist.clear(), y_hist.clear()
            theta = 1.0
            d = projected_gradient(x, g, lower, upper)
            slope = g @ d
            if not slope < 0:
                converged, message = True, "no descent direction"
                break

        alpha = 1.0
        if not s_hist:
            alpha = min(1.0, 1.0 / max(np.linalg.norm(d), 1e-300))
        guard_left = max_guard_halvings if step_guard is not None else 0
        accepted = False
        for _ in range(tol.max_backtracks + max_guard_halvings + 1):
            x_new = np.clip(x + alpha * d, lower, upper)
            f_new, g_new = _as_pair((yield x_new))
            evals += 1
            finite = math.isfinite(f_new) and np.all(np.isfinite(g_new))
            if finite and f_new <= f + tol.armijo * alpha * slope:
                if guard_left and not step_guard(x_new):
                    guard_left -= 1
                else:
                    accepted = True
                    break
            alpha *= tol.contraction
            if evals >= tol.max_eval:
                break
        if not accepted:
            message = "line search failed"
            if not finite:
                message += " (non-finite objective or gradient)"
            break

        s, y = x_new - x, g_new - g
        sy = s @ y
        if sy > tol.curvature_eps * np.linalg.norm(s) * np.linalg.norm(y):
            s_hist.append(s)
            y_hist.append(y)
            if len(s_hist) > tol.memory:
                s_hist.pop(0)
                y_hist.pop(0)
            theta = (y @ y) / sy
        decrease = (f - f_new) / max(abs(f), abs(f_new), 1.0)
        x, f, g = x_new, f_new, g_new
        it += 1
        state.x, state.f, state.g = x, f, g
        state.s_hist, state.y_hist, state.theta = s_hist, y_hist, theta
        state.iterations, state.evaluations = it, evals
        if callback is not None:
            callback(state)
        if decrease <= tol.f_tol:
            converged, message = True, "relative objective decrease below tolerance"
            break

    state.x, state.f, state.g = x, f, g
    state.s_hist, state.y_hist, state.theta = s_hist, y_hist, theta
    state.iterations, state.evaluations = it, evals
    return BoxResult(x.copy(), f, converged, it, evals, state, message)


def _drive(gen, fun):
    try:
        x = next(gen)
        while True:
            x = gen.send(fun(x))
    except StopIteration as stop:
        return stop.value


def lbfgsb_minimize(problem: BoxProblem, start, tol: Tolerances | None = None,
                    callback=None, step_guard=None, max_guard_halvings=4) -> BoxResult:
    """Minimize a bound-constrained smooth function.

    Parameters
    ----------
    problem : BoxProblem
    start : array or SolverState
        Initial iterate (projected onto the box), or a previous state to
        resume from. A state's curvature pairs are kept only when
        ``tol.keep_history`` is set.
    tol : Tolerances
    callback : callable, optional
        Called as ``callback(state)`` after every accepted iterate.
    step_guard : callable, optional
        ``step_guard(x_trial) -> bool``; a ``False`` answer halves the step,
        at most ``max_guard_halvings`` times per iteration.

    Returns
    -------
    BoxResult
        ``converged`` is set when the projected-gradient infinity norm drops
        below ``pg_tol`` or the relative objective decrease of an iteration
        drops below ``f_tol``.
    """
    tol = tol or Tolerances()
    state = _prepare(problem.lower, problem.upper, start, tol)
    gen = _iterate(problem.lower, problem.upper, state, tol, callback, step_guard,
                   max_guard_halvings)
    return _drive(gen, problem.fun)


def minimize_lockstep(batch_fun, lower, upper, starts, tol: Tolerances | None = None):
    """Run independent box-constrained solves side by side.

    Every solve sees exactly the iterate sequence ``lbfgsb_minimize`` would
    produce on its own; only the evaluations are grouped. Each round calls
    ``batch_fun(active, X)`` with the indices of the unfinished solves and
    their requested points stacked row-wise, and expects ``(F, G)`` back.

    Parameters
    ----------
    lower, upper : (n,) arrays
        Bounds shared by all solves.
    starts : sequence of arrays or SolverState

    Returns
    -------
    list of BoxResult, in the order of ``starts``.
    """
    tol = tol or Tolerances()
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    gens = [_iterate(lower, upper, _prepare(lower, upper, s, tol), tol) for s in starts]
    results = [None] * len(gens)
    pending = {i: next(gen) for i, gen in enumerate(gens)}
    while pending:
        active = sorted(pending)
        F, G = batch_fun(np.array(active), np.stack([pending[i] for i in active]))
        for row, i in enumerate(active):
            try:
                pending[i] = gens[i].send((F[row], G[row]))
            except StopIteration as stop:
                results[i] = stop.value
                del pending[i]
    return results


def hot_start(previous: SolverState, new_problem: BoxProblem,
              tol: Tolerances | None = None, **kwargs) -> BoxResult:
    """Resume from a cached state on a (slightly) changed problem."""
    if previous.n != new_problem.lower.size:
        raise ValueError("state dimension does not match the problem")
    return lbfgsb_minimize(new_problem, previous, tol, **kwargs)
