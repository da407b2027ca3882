import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from jointwind import checks, wake
from jointwind.gradients import fd_gradient, power_gradient, scenario_power_gradients
from jointwind.params import default_params, make_layout

P = default_params()
D = P.rotor_diameter


class TestFdGradient:
    def test_quadratic_is_exact(self):
        g = fd_gradient(lambda x: float(np.sum(x ** 2)), np.array([1.0, 2.0]))
        np.testing.assert_allclose(g, [2.0, 4.0], atol=1e-8)

    def test_constant(self):
        np.testing.assert_array_equal(fd_gradient(lambda x: 3.0, np.zeros(4)), 0.0)

    def test_per_coordinate_steps_and_dtype(self):
        x = np.array([1.0, 2.0], dtype=np.longdouble)
        g = fd_gradient(lambda v: v[0] ** 3 + v[1], x, np.array([1e-4, 1e-1], dtype=np.longdouble))
        assert g.dtype == np.longdouble
        assert float(g[0]) == pytest.approx(3.0, rel=1e-7)
        assert float(g[1]) == pytest.approx(1.0, rel=1e-12)


class TestPowerGradient:
    def test_single_turbine_stationary(self):
        power, grad = power_gradient(make_layout([100.0], [200.0]), [0.0], 1.0, P)
        assert power == pytest.approx(P.single_turbine_power, rel=1e-12)
        np.testing.assert_array_equal(grad.grad_layout, 0.0)
        assert grad.grad_yaw[0] == 0.0

    def test_single_turbine_yaw_derivative(self):
        yaw = 0.2
        _, grad = power_gradient(make_layout([0.0], [0.0]), [yaw], 0.0, P)
        assert grad.grad_yaw[0] == pytest.approx(-P.single_turbine_power * math.sin(yaw), rel=1e-12)

    def test_far_apart_turbines_decouple(self):
        layout = make_layout([0.0, 60 * D, 0.0], [0.0, 0.0, 60 * D])
        power, grad = power_gradient(layout, np.zeros(3), 0.3, P)
        assert np.max(np.abs(grad.grad_layout)) <= 1e-6 * power / D

    def test_fixture_five_turbines(self):
        rng = np.random.default_rng(121)
        layout = rng.uniform(0, 6 * D, 10)
        yaws = rng.uniform(P.yaw_min, P.yaw_max, 5)
        err = checks.gradient_error(layout, yaws, math.radians(121), P)
        assert err <= 1e-4

    @settings(max_examples=60, deadline=None)
    @given(st.integers(2, 8), st.integers(0, 2 ** 32 - 1))
    def test_matches_finite_differences(self, n, seed):
        rng = np.random.default_rng(seed)
        assert checks.gradient_error(*checks.random_power_instance(rng, n, P), P) <= 1e-4

    @settings(max_examples=60, deadline=None)
    @given(st.integers(2, 8), st.integers(0, 2 ** 32 - 1))
    def test_translation_invariance(self, n, seed):
        rng = np.random.default_rng(seed)
        layout, yaws, theta = checks.random_power_instance(rng, n, P)
        _, grad = power_gradient(layout, yaws, theta, P)
        gx, gy = grad.grad_layout[:n], grad.grad_layout[n:]
        scale = np.linalg.norm(grad.grad_layout)
        assert abs(gx.sum()) <= 1e-6 * scale + 1e-12
        assert abs(gy.sum()) <= 1e-6 * scale + 1e-12

    def test_batched_matches_single(self):
        rng = np.random.default_rng(2)
        layout = rng.uniform(0, 1500, 12)
        yaws = rng.uniform(P.yaw_min, P.yaw_max, (3, 6))
        angles = np.array([0.1, 2.0, 4.0])
        powers, g_layout, g_yaw = scenario_power_gradients(layout, yaws, angles, P)
        for w in range(3):
            power, grad = power_gradient(layout, yaws[w], angles[w], P)
            assert powers[w] == pytest.approx(power, rel=1e-14)
            np.testing.assert_allclose(g_layout[w], grad.grad_layout, rtol=1e-12, atol=1e-9)
            np.testing.assert_allclose(g_yaw[w], grad.grad_yaw, rtol=1e-12, atol=1e-9)

    def test_skip_layout_gradient(self):
        layout = make_layout([0.0, 5 * D], [0.0, 10.0])
        power, g_layout, g_yaw = scenario_power_gradients(layout, [0.1, 0.0], 0.0, P,
                                                          wrt_layout=False)
        assert g_layout is None
        np.testing.assert_array_equal(g_yaw, power_gradient(layout, [0.1, 0.0], 0.0, P)[1].grad_yaw)


class TestClampRegion:
    def test_crossing_sigma_floor_is_continuous(self):
        # sigma reaches its floor near d = -sigma0 / k; walk a pair across it
        sigma0 = D / (2 * math.sqrt(2))
        d_floor = -sigma0 / P.wake_expansion
        ds = d_floor + np.linspace(-1.0, 1.0, 2001)
        for d in (ds[0], ds[1000], ds[-1]):
            layout = make_layout([0.0, d], [0.0, 30.0])
            _, grad = power_gradient(layout, [0.2, -0.1], 0.0, P)
            assert np.all(np.isfinite(grad.grad_layout)) and np.all(np.isfinite(grad.grad_yaw))
        values = wake.smoothed_deficit(ds, 30.0, 0.2, P)
        assert np.all(np.isfinite(values))
        assert np.max(np.abs(np.diff(values))) <= 1e-12

    def test_coincident_turbines_finite(self):
        layout = make_layout([0.0, 0.0], [0.0, 0.0])
        power, grad = power_gradient(layout, [0.0, 0.3], 0.5, P)
        assert math.isfinite(power)
        assert np.all(np.isfinite(grad.grad_layout)) and np.all(np.isfinite(grad.grad_yaw))


def test_gradient_suite_smoke():
    result = checks.gradient_suite(instances=20, seed=5)
    assert result.instances == 20 and result.passed(1e-4)
    assert "max relative error" in result.line()


def test_componentwise_error_floor():
    assert checks.componentwise_error([1.0, 0.0], [1.0, 1e-9]) == pytest.approx(0.1)
    assert checks.componentwise_error([0.0, 0.0], [0.0, 0.0]) == 0.0
