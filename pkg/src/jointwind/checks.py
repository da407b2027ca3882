"""Randomized gradient verification suites.

``gradient_suite`` compares exact power gradients with central differences
taken in extended precision, which removes round-off from the reference so
the comparison measures the analytic gradient alone. ``envelope_suite``
compares the multilevel objective's layout gradient with differences of the
re-solved yaw-optimal objective.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import wake
from .gradients import fd_gradient, power_gradient
from .mlr import outer_objective
from .params import PhysicalParams, default_params
from .sampling import farm_region_for, random_feasible_layout, rng_for, sample_wind_rose

STREAM_CHECKS = 3
POSITION_STEP = 1e-3  # m
YAW_STEP = 1e-5  # rad


@dataclass
class CheckResult:
    name: str
    instances: int
    max_error: float
    worst_instance: int

    def passed(self, tolerance: float) -> bool:
        return self.max_error <= tolerance

    def line(self) -> str:
        return (f"{self.name}: {self.instances} instances, max relative error "
                f"{self.max_error:.3e} (instance {self.worst_instance})")


def componentwise_error(exact, approx, floor: float = 1e-8) -> float:
    """``max_k |exact_k - approx_k| / max(|exact_k|, floor * |exact|)``."""
    exact = np.asarray(exact, dtype=float)
    approx = np.asarray(approx, dtype=float)
    denom = np.maximum(np.abs(exact), floor * np.linalg.norm(exact))
    if not np.any(denom > 0):
        return float(np.max(np.abs(approx), initial=0.0))
    return float(np.max(np.abs(exact - approx) / np.where(denom > 0, denom, 1.0)))


def random_power_instance(rng: np.random.Generator, n: int, params: PhysicalParams):
    """Positions in a square sized like the benchmark farms, yaws uniform in bounds."""
    side = farm_region_for(n, params).x_max
    layout = rng.uniform(0.0, side, 2 * n)
    yaws = rng.uniform(params.yaw_min, params.yaw_max, n)
    return layout, yaws, float(rng.uniform(0.0, 2.0 * np.pi))


def gradient_error(layout, yaws, wind_angle, params: PhysicalParams) -> float:
    """Mismatch between ``power_gradient`` and extended-precision central differences."""
    n = yaws.size
    _, grad = power_gradient(layout, yaws, wind_angle, params)
    exact = np.concatenate([grad.grad_layout, grad.grad_yaw])
    x = np.concatenate([layout, yaws]).astype(np.longdouble)
    steps = np.concatenate([np.full(2 * n, POSITION_STEP), np.full(n, YAW_STEP)])

    def f(v):
        return wake.farm_power(v[:2 * n], v[2 * n:], np.longdouble(wind_angle), params)

    return componentwise_error(exact, fd_gradient(f, x, steps.astype(np.longdouble)))


def gradient_suite(instances: int = 1000, seed: int = 0, sizes=range(2, 9),
                   params: PhysicalParams | None = None) -> CheckResult:
    params = params or default_params()
    rng = rng_for(seed, STREAM_CHECKS)
    sizes = list(sizes)
    worst, worst_at = 0.0, -1
    for k in range(instances):
        n = int(rng.choice(sizes))
        err = gradient_error(*random_power_instance(rng, n, params), params)
        if err > worst:
            worst, worst_at = err, k
    return CheckResult("power gradient", instances, worst, worst_at)


def envelope_error(layout, rose, params: PhysicalParams, step: float = 1e-2) -> float:
    """Norm-wise mismatch of the envelope gradient against cold re-solved differences.

    Each probe re-solves every scenario from zero yaw, so the reference
    shares no warm-start state with the gradient being checked.
    """
    _, grad, _ = outer_objective(layout, rose, params)

    def f(v):
        return outer_objective(v, rose, params)[0]

    approx = fd_gradient(f, layout, step)
    return float(np.linalg.norm(grad - approx) / max(np.linalg.norm(grad), 1e-300))


def envelope_suite(instances: int = 50, seed: int = 0, sizes=range(2, 6), scenarios=range(1, 5),
                   params: PhysicalParams | None = None) -> CheckResult:
    params = params or default_params()
    rng = rng_for(seed, STREAM_CHECKS)
    sizes, scenarios = list(sizes), list(scenarios)
    worst, worst_at = 0.0, -1
    for k in range(instances):
        n, w = int(rng.choice(sizes)), int(rng.choice(scenarios))
        sub_seed = int(rng.integers(2 ** 31))
        # a tighter farm than the benchmark density so that wakes interact
        region = farm_region_for(n, params)
        layout = random_feasible_layout(region, n, sub_seed) * 0.5
        err = envelope_error(layout, sample_wind_rose(w, sub_seed), params)
        if err > worst:
            worst, worst_at = err, k
    return CheckResult("envelope gradient", instances, worst, worst_at)
