"""Physical constants, wind roses, farm regions and layout feasibility."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

HOURS_PER_YEAR = 8760.0


@dataclass(frozen=True)
class PhysicalParams:
    """Wake-model and turbine constants, SI units throughout.

    ``thrust_coefficient`` and ``power_coefficient`` are derived from
    ``axial_induction`` and cannot be passed in.
    """

    rotor_diameter: float = 126.0
    air_density: float = 1.23
    freestream_speed: float = 8.0
    deflection_offset: float = -0.035
    deflection_slope: float = -0.01
    wake_expansion: float = 0.03
    sigmoid_sharpness: float = 0.2
    axial_induction: float = 1.0 / 3.0
    yaw_min: float = math.radians(-30.0)
    yaw_max: float = math.radians(30.0)
    thrust_coefficient: float = field(init=False)
    power_coefficient: float = field(init=False)

    def __post_init__(self):
        a = self.axial_induction
        if not 0.0 < a < 1.0:
            raise ValueError(f"axial_induction must lie in (0, 1), got {a}")
        for name in ("rotor_diameter", "air_density", "freestream_speed",
                     "wake_expansion", "sigmoid_sharpness"):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"{name} must be positive")
        if not -math.pi / 2 < self.yaw_min < self.yaw_max < math.pi / 2:
            raise ValueError("need -pi/2 < yaw_min < yaw_max < pi/2")
        object.__setattr__(self, "thrust_coefficient", 4.0 * a * (1.0 - a))
        object.__setattr__(self, "power_coefficient", 4.0 * a * (1.0 - a) ** 2)

    @property
    def rotor_area(self) -> float:
        return math.pi / 4.0 * self.rotor_diameter ** 2

    @property
    def single_turbine_power(self) -> float:
        """Power of one unwaked, unyawed turbine in watts."""
        return (0.5 * self.air_density * self.rotor_area * self.power_coefficient
                * self.freestream_speed ** 3)

    def replace(self, **changes) -> PhysicalParams:
        return dataclasses.replace(self, **changes)


def default_params() -> PhysicalParams:
    return PhysicalParams()


_PARAM_KEYS = [f.name for f in dataclasses.fields(PhysicalParams) if f.init]


def params_to_text(params: PhysicalParams) -> str:
    """Serialize to ``key = value`` lines; derived coefficients are omitted."""
    return "".join(f"{k} = {getattr(params, k)!r}\n" for k in _PARAM_KEYS)


def parse_key_values(text: str) -> dict[str, str]:
    """Parse a flat ``key = value`` file. ``#`` starts a comment."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'key = value', got {raw!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key] = value
    return out


def params_from_text(text: str, base: PhysicalParams | None = None) -> PhysicalParams:
    """Apply overrides from a key-value document on top of ``base``."""
    base = base or default_params()
    overrides = {}
    for key, value in parse_key_values(text).items():
        if key not in _PARAM_KEYS:
            raise ValueError(f"unknown parameter {key!r}")
        overrides[key] = float(value)
    return base.replace(**overrides)


def load_params(path: str | Path) -> PhysicalParams:
    return params_from_text(Path(path).read_text())


@dataclass(frozen=True)
class WindRose:
    """Discrete wind-direction distribution, angles in radians from due East."""

    angles: np.ndarray
    probabilities: np.ndarray

    def __post_init__(self):
        angles = np.asarray(self.angles, dtype=float)
        probs = np.asarray(self.probabilities, dtype=float)
        if angles.ndim != 1 or angles.shape != probs.shape or angles.size == 0:
            raise ValueError("angles and probabilities must be equal-length 1-D arrays")
        if np.any(probs < 0) or abs(probs.sum() - 1.0) > 1e-12:
            raise ValueError("probabilities must be nonnegative and sum to 1")
        angles.setflags(write=False)
        probs.setflags(write=False)
        object.__setattr__(self, "angles", angles)
        object.__setattr__(self, "probabilities", probs)

    @property
    def n_scenarios(self) -> int:
        return self.angles.size

    @classmethod
    def uniform(cls, n_bins: int) -> WindRose:
        return cls(bin_midpoints(n_bins), np.full(n_bins, 1.0 / n_bins))

    @classmethod
    def single(cls, angle: float) -> WindRose:
        return cls(np.array([angle]), np.array([1.0]))


def bin_midpoints(n_bins: int) -> np.ndarray:
    """Midpoints of ``n_bins`` equal bins partitioning [0, 2*pi)."""
    width = 2.0 * np.pi / n_bins
    return (np.arange(n_bins) + 0.5) * width


@dataclass(frozen=True)
class FarmRegion:
    x_max: float
    y_max: float
    min_separation: float

    def __post_init__(self):
        if not (self.x_max > 0 and self.y_max > 0 and self.min_separation > 0):
            raise ValueError("region extents and separation must be positive")

    @classmethod
    def square(cls, side: float, params: PhysicalParams) -> FarmRegion:
        return cls(side, side, 4.0 * params.rotor_diameter)

    def bounds(self, n_turbines: int) -> tuple[np.ndarray, np.ndarray]:
        """Box bounds for a stacked ``[x; y]`` layout vector."""
        lower = np.zeros(2 * n_turbines)
        upper = np.concatenate([np.full(n_turbines, self.x_max),
                                np.full(n_turbines, self.y_max)])
        return lower, upper


def as_float_array(a) -> np.ndarray:
    """Like ``np.asarray`` but promotes non-floating input to float64."""
    a = np.asarray(a)
    return a if np.issubdtype(a.dtype, np.floating) else a.astype(float)


def split_layout(layout) -> tuple[np.ndarray, np.ndarray]:
    """Return the x and y coordinate vectors of a stacked layout."""
    layout = as_float_array(layout)
    if layout.ndim != 1 or layout.size % 2:
        raise ValueError("layout must be a flat [x; y] vector of even length")
    n = layout.size // 2
    return layout[:n], layout[n:]


def make_layout(x, y) -> np.ndarray:
    return np.concatenate([np.asarray(x, dtype=float).ravel(),
                           np.asarray(y, dtype=float).ravel()])


@dataclass(frozen=True)
class Violation:
    kind: str                 # "perimeter" or "interdistance"
    index: tuple[int, ...]    # (turbine, axis) or (i, j) with i < j
    magnitude: float          # meters


def feasibility_check(layout, region: FarmRegion) -> list[Violation]:
    """List every violated perimeter or spacing constraint of ``layout``.

    Magnitudes are the distance, in meters, by which each constraint is
    missed. An empty list means the layout is feasible.
    """
    x, y = split_layout(layout)
    report = []
    for axis, coords, top in ((0, x, region.x_max), (1, y, region.y_max)):
        for i, c in enumerate(coords):
            if c < 0.0:
                report.append(Violation("perimeter", (i, axis), float(-c)))
            elif c > top:
                report.append(Violation("perimeter", (i, axis), float(c - top)))
    n = x.size
    if n > 1:
        dist = np.hypot(x[:, None] - x[None, :], y[:, None] - y[None, :])
        iu, ju = np.triu_indices(n, 1)
        short = region.min_separation - dist[iu, ju]
        for k in np.flatnonzero(short > 0.0):
            report.append(Violation("interdistance", (int(iu[k]), int(ju[k])), float(short[k])))
    return report


def annual_energy_gwh(expected_power_watts: float) -> float:
    return expected_power_watts * HOURS_PER_YEAR / 1e9
