"""Seeded generation of wind roses, farm regions and random feasible layouts.

Randomness comes from numpy's PCG64 generator seeded through a
``SeedSequence([seed, stream])``. Each purpose owns a stream id, so adding
seeds or consuming more draws for one purpose never shifts another.
"""

from __future__ import annotations

import math

import numpy as np

from .params import FarmRegion, PhysicalParams, WindRose, bin_midpoints, make_layout

STREAM_ROSE = 1
STREAM_LAYOUT = 2
MAX_DRAWS = 10 ** 6


class InfeasibleDensityError(ValueError):
    pass


def rng_for(seed: int, stream: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, stream])))


def sample_wind_rose(n_scenarios: int, seed: int) -> WindRose:
    """Bin-midpoint directions with Dirichlet(1, ..., 1) probabilities."""
    if n_scenarios < 1:
        raise ValueError("need at least one scenario")
    probs = rng_for(seed, STREAM_ROSE).dirichlet(np.ones(n_scenarios))
    probs = probs / probs.sum()
    return WindRose(bin_midpoints(n_scenarios), probs)


def farm_region_for(n_turbines: int, params: PhysicalParams) -> FarmRegion:
    """Square region whose side grows with sqrt(N) at constant turbine density."""
    if n_turbines < 1:
        raise ValueError("need at least one turbine")
    spacing = 4.0 * params.rotor_diameter
    side = 1.3 * math.sqrt(n_turbines) * spacing
    return FarmRegion(side, side, spacing)


def random_feasible_layout(region: FarmRegion, n_turbines: int, seed: int) -> np.ndarray:
    """Uniform positions with sequential rejection of draws that are too close."""
    half = region.min_separation / 2.0
    disk_area = n_turbines * math.pi * half ** 2
    if disk_area > (region.x_max + 2 * half) * (region.y_max + 2 * half):
        raise InfeasibleDensityError(f"{n_turbines} turbines cannot fit in the region")
    rng = rng_for(seed, STREAM_LAYOUT)
    pts = np.empty((n_turbines, 2))
    placed = 0
    draws = 0
    sep2 = region.min_separation ** 2
    while placed < n_turbines:
        if draws >= MAX_DRAWS:
            raise InfeasibleDensityError(
                f"placed {placed} of {n_turbines} turbines within {MAX_DRAWS} draws")
        p = rng.uniform((0.0, 0.0), (region.x_max, region.y_max))
        draws += 1
        if placed and np.min(np.sum((pts[:placed] - p) ** 2, axis=1)) < sep2:
            continue
        pts[placed] = p
        placed += 1
    return make_layout(pts[:, 0], pts[:, 1])
