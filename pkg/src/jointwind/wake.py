"""Gaussian wake model with yaw-induced deflection and farm power.

All kernels broadcast, so the same code evaluates one turbine pair, one
wind direction, or a stack of wind directions at once. Pairwise arrays are
indexed ``[..., i, j]`` with ``i`` the wake source and ``j`` the receiver.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np
from scipy.special import expit

from .params import PhysicalParams, as_float_array, split_layout

SIGMA_FLOOR = 1e-3          # m
LOG_FLOOR = 1e-6            # lower limit of the deflection log numerator
SOFT_CLAMP_SHARPNESS = 1e7  # soft clamps sit within log(2)/1e7 of the hard clamp
ROOT_EPS = 1e-15            # sqrt(S + eps^2) - eps stays differentiable at S = 0


def _softplus(z):
    return np.logaddexp(0.0, z)


def _soft_floor(z, floor):
    """Smooth max(z, floor) and its derivative with respect to ``z``."""
    arg = SOFT_CLAMP_SHARPNESS * (z - floor)
    return floor + _softplus(arg) / SOFT_CLAMP_SHARPNESS, expit(arg)


class RelativeCoords(NamedTuple):
    d: np.ndarray  # downstream displacement of j in the wake frame of i
    r: np.ndarray  # radial (crosswind) displacement of j from i


class WakeField(NamedTuple):
    deficit: np.ndarray
    effective_speed: np.ndarray


class _Constants:
    """Scalars of the wake model that depend only on ``params``."""

    def __init__(self, params: PhysicalParams):
        ct = params.thrust_coefficient
        self.ct = ct
        self.sqrt_ct = np.sqrt(ct)
        c0 = 1.0 - np.sqrt(1.0 - ct)
        self.e0 = c0 ** 2 - 3.0 * np.exp(1.0 / 12.0) * c0 + 3.0 * np.exp(1.0 / 3.0)
        self.log_const = np.log((1.6 + self.sqrt_ct) / (1.6 - self.sqrt_ct))
        self.width0 = params.rotor_diameter / (2.0 * np.sqrt(2.0))
        self.power_factor = (0.5 * params.air_density * params.rotor_area
                             * params.power_coefficient)


def _pair_terms(d, r, yaw, params: PhysicalParams, k: _Constants | None = None):
    """Evaluate the smoothed deficit and keep every intermediate.

    The returned dict feeds :func:`jointwind.gradients._pair_adjoint`.
    """
    k = k or _Constants(params)
    cos_yaw = np.cos(yaw)
    sigma0 = k.width0 * cos_yaw
    sigma_raw = sigma0 + params.wake_expansion * d
    sigma, dsigma_draw = _soft_floor(sigma_raw, SIGMA_FLOOR)

    thrust_ratio = k.ct * sigma0 / sigma
    zx = SOFT_CLAMP_SHARPNESS * (1.0 - thrust_ratio)
    q = _softplus(zx) / SOFT_CLAMP_SHARPNESS  # 1 - min(thrust_ratio, 1), smoothed
    sqrt_q = np.sqrt(q)
    amplitude = 1.0 - sqrt_q

    t = np.sqrt(sigma / sigma0)
    u, du = _soft_floor(1.6 * t - k.sqrt_ct, LOG_FLOOR)
    v = 1.6 * t + k.sqrt_ct
    log_term = np.log(u) - np.log(v) + k.log_const

    steer_root = np.sqrt(1.0 - k.ct * cos_yaw)
    phi = 0.3 * yaw / cos_yaw * (1.0 - steer_root)
    steer_scale = k.e0 / 5.2 * np.sqrt(sigma0 / (params.wake_expansion * k.ct))
    offset = (params.deflection_offset * params.rotor_diameter
              + params.deflection_slope * d + phi * steer_scale * log_term)

    miss = r - offset
    gauss = np.exp(-miss ** 2 / (2.0 * sigma ** 2))
    gate = expit(params.sigmoid_sharpness * d)
    return dict(
        d=d, yaw=yaw, cos_yaw=cos_yaw, sigma0=sigma0, sigma=sigma,
        dsigma_draw=dsigma_draw, thrust_ratio=thrust_ratio, zx=zx, q=q,
        sqrt_q=sqrt_q, amplitude=amplitude, t=t, u=u, du=du, v=v,
        log_term=log_term, steer_root=steer_root, phi=phi,
        steer_scale=steer_scale, offset=offset, miss=miss, gauss=gauss,
        gate=gate, deficit=gate * amplitude * gauss,
    )


def relative_coordinates(layout, wind_angle) -> RelativeCoords:
    """Rotate pairwise displacements into the frame of the incoming wind.

    ``wind_angle`` may be a scalar or an array of shape ``(W,)``; in the
    latter case the outputs gain a leading scenario axis.
    """
    x, y = split_layout(layout)
    dx = x[None, :] - x[:, None]
    dy = y[None, :] - y[:, None]
    angle = as_float_array(wind_angle)[..., None, None]
    c, s = np.cos(angle), np.sin(angle)
    return RelativeCoords(dx * c + dy * s, dy * c - dx * s)


def wake_width(d, yaw, params: PhysicalParams):
    """Standard deviation of the Gaussian wake profile, in meters."""
    sigma0 = params.rotor_diameter / (2.0 * np.sqrt(2.0)) * np.cos(yaw)
    return _soft_floor(sigma0 + params.wake_expansion * np.asarray(d, dtype=float),
                       SIGMA_FLOOR)[0]


def deflection(d, yaw, params: PhysicalParams):
    """Lateral offset of the wake centerline at downstream distance ``d``."""
    d = np.asarray(d, dtype=float)
    return _pair_terms(d, 0.0, np.asarray(yaw, dtype=float), params)["offset"]


def smoothed_deficit(d, r, yaw, params: PhysicalParams):
    """Fractional speed deficit induced at ``(d, r)`` by a turbine yawed by ``yaw``."""
    return _pair_terms(np.asarray(d, float), np.asarray(r, float),
                       np.asarray(yaw, float), params)["deficit"]


def _combine(deficit):
    """Root-sum-square of incoming deficits per receiving turbine."""
    total = np.sum(deficit ** 2, axis=-2)
    root_arg = np.sqrt(total + ROOT_EPS ** 2)
    return root_arg - ROOT_EPS, root_arg


def _wake_state(layout, yaws, wind_angle, params: PhysicalParams, coords=None, k=None):
    """Shared forward pass: pairwise terms, windspeeds and per-scenario power.

    ``coords`` and ``k`` may be passed in when the layout and parameters are
    fixed across many calls, as in a yaw-only solve.
    """
    k = k or _Constants(params)
    coords = coords or relative_coordinates(layout, wind_angle)
    n = coords.d.shape[-1]
    yaws = as_float_array(yaws)
    if yaws.shape[-1] != n:
        raise ValueError(f"expected {n} yaw angles, got shape {yaws.shape}")
    yaws = np.broadcast_to(yaws, coords.d.shape[:-2] + (n,))
    terms = _pair_terms(coords.d, coords.r, yaws[..., :, None], params, k)
    off_diag = ~np.eye(n, dtype=bool)
    deficit = terms["deficit"] * off_diag
    root, root_arg = _combine(deficit)
    speed = params.freestream_speed * (1.0 - root)
    power = k.power_factor * np.sum(np.cos(yaws) * speed ** 3, axis=-1)
    return dict(k=k, coords=coords, yaws=yaws, terms=terms, deficit=deficit,
                root_arg=root_arg, speed=speed, power=power)


def effective_windspeeds(layout, yaws, wind_angle, params: PhysicalParams) -> WakeField:
    state = _wake_state(layout, yaws, wind_angle, params)
    return WakeField(state["deficit"], state["speed"])


def farm_power(layout, yaws, wind_angle, params: PhysicalParams):
    """Total farm power in watts (an array if ``wind_angle`` is an array)."""
    power = _wake_state(layout, yaws, wind_angle, params)["power"]
    return power[()] if np.ndim(power) == 0 else power


def expected_power(layout, yaws_per_scenario, rose, params: PhysicalParams) -> float:
    """Probability-weighted farm power over a wind rose."""
    powers = farm_power(layout, np.asarray(yaws_per_scenario, float), rose.angles, params)
    return float(np.dot(rose.probabilities, powers))
