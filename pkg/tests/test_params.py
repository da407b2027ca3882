import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from jointwind.params import (FarmRegion, PhysicalParams, WindRose, annual_energy_gwh,
                              default_params, feasibility_check, load_params, make_layout,
                              params_from_text, params_to_text)

D = 126.0


def test_default_params_table_values():
    p = default_params()
    assert p.rotor_diameter == 126.0
    assert p.freestream_speed == 8.0
    assert p.air_density == 1.23
    assert (p.deflection_offset, p.deflection_slope, p.wake_expansion) == (-0.035, -0.01, 0.03)
    assert p.yaw_max == pytest.approx(math.radians(30.0), abs=1e-15)
    assert p.yaw_min == pytest.approx(-math.radians(30.0), abs=1e-15)
    assert p.axial_induction == pytest.approx(1 / 3)
    assert p.sigmoid_sharpness == 0.2


def test_derived_coefficients():
    p = default_params()
    assert p.power_coefficient == pytest.approx(16 / 27, rel=1e-15)
    assert p.thrust_coefficient == pytest.approx(8 / 9, rel=1e-15)


def test_coefficients_cannot_be_set():
    with pytest.raises(TypeError):
        PhysicalParams(thrust_coefficient=0.5)


@given(st.floats(min_value=1e-6, max_value=1 - 1e-6))
def test_coefficient_ordering(alpha):
    p = PhysicalParams(axial_induction=alpha)
    assert 0 < p.power_coefficient < p.thrust_coefficient <= 1
    again = p.replace(axial_induction=alpha)
    assert again.thrust_coefficient == p.thrust_coefficient


@pytest.mark.parametrize("bad", [dict(rotor_diameter=0), dict(wake_expansion=-1),
                                 dict(yaw_min=0.3, yaw_max=0.2), dict(yaw_max=2.0),
                                 dict(axial_induction=1.0)])
def test_invalid_params_rejected(bad):
    with pytest.raises(ValueError):
        PhysicalParams(**bad)


def test_single_turbine_power_fixture():
    # 0.5 * 1.23 * (pi/4 * 126^2) * 16/27 * 8^3 evaluated in 30-digit arithmetic
    p = default_params()
    assert p.single_turbine_power == pytest.approx(2326656.4820810568, rel=1e-12)
    assert annual_energy_gwh(p.single_turbine_power) == pytest.approx(20.381510783030058, rel=1e-12)


def test_params_text_round_trip(tmp_path):
    p = default_params().replace(freestream_speed=9.5, sigmoid_sharpness=0.1)
    path = tmp_path / "p.cfg"
    path.write_text(params_to_text(p))
    assert load_params(path) == p


def test_params_text_overrides_and_comments():
    p = params_from_text("# override\nfreestream_speed = 10  # m/s\n\n")
    assert p.freestream_speed == 10.0
    assert p.rotor_diameter == 126.0
    with pytest.raises(ValueError):
        params_from_text("nonsense = 1")
    with pytest.raises(ValueError):
        params_from_text("no equals sign")


class TestWindRose:
    def test_uniform(self):
        rose = WindRose.uniform(4)
        np.testing.assert_allclose(np.degrees(rose.angles), [45, 135, 225, 315])
        assert rose.probabilities.sum() == pytest.approx(1.0)

    def test_rejects_bad_probabilities(self):
        with pytest.raises(ValueError):
            WindRose(np.array([0.0, 1.0]), np.array([0.5, 0.6]))
        with pytest.raises(ValueError):
            WindRose(np.array([0.0, 1.0]), np.array([1.5, -0.5]))

    def test_immutable(self):
        rose = WindRose.uniform(3)
        with pytest.raises(ValueError):
            rose.angles[0] = 1.0


class TestFeasibility:
    region = FarmRegion(10 * D, 10 * D, 4 * D)

    def test_feasible_pair(self):
        assert feasibility_check(make_layout([0, 5 * D], [0, 0]), self.region) == []

    def test_close_pair(self):
        report = feasibility_check(make_layout([0, 3 * D], [0, 0]), self.region)
        assert len(report) == 1
        assert report[0].kind == "interdistance"
        assert report[0].index == (0, 1)
        assert report[0].magnitude == pytest.approx(D)

    def test_perimeter(self):
        report = feasibility_check(make_layout([-1.0], [0.0]), self.region)
        assert [(v.kind, v.magnitude) for v in report] == [("perimeter", 1.0)]
        report = feasibility_check(make_layout([0.0], [10 * D + 2]), self.region)
        assert [(v.kind, v.index, v.magnitude) for v in report] == [("perimeter", (0, 1), 2.0)]

    @settings(max_examples=50)
    @given(st.integers(2, 8), st.integers(0, 10_000))
    def test_permutation_preserves_magnitudes(self, n, seed):
        rng = np.random.default_rng(seed)
        x, y = rng.uniform(-50, 12 * D, n), rng.uniform(-50, 12 * D, n)
        perm = rng.permutation(n)
        a = feasibility_check(make_layout(x, y), self.region)
        b = feasibility_check(make_layout(x[perm], y[perm]), self.region)
        assert sorted(v.magnitude for v in a) == pytest.approx(sorted(v.magnitude for v in b))
