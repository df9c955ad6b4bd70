import numpy as np
import pytest
from pydantic import ValidationError

from wallpgd.errors import InvalidArgumentError, ShapeError
from wallpgd.physics import (BoundarySignals, BvpInstance, ConvectiveEnvironment, DimensionlessProblem, WallLayer,
                             boundary_coefficients, dimensionless_signals, nondimensionalize, redimensionalize,
                             semi_discretize, to_dimensionless_temperature)

WALL = WallLayer(L=0.1, k=1.75, c=2.2e6)
ENV = ConvectiveEnvironment(h_in=8.7, h_out=23.2, u0=293.15)
THREE_DAYS = 3 * 24 * 3600.0


def test_nondimensionalize_theoretical_wall():
    problem = nondimensionalize(WALL, ENV, THREE_DAYS)
    assert problem.Fo == 1.0
    assert problem.t_ref == pytest.approx(2.2e6 * 0.01 / 1.75)
    assert problem.Bi_in == pytest.approx(8.7 * 0.1 / 1.75)
    assert problem.Bi_out == pytest.approx(1.325714, rel=1e-6)
    assert problem.Gamma == pytest.approx(THREE_DAYS / problem.t_ref)


def test_nondimensionalize_rejects_empty_horizon():
    with pytest.raises(InvalidArgumentError):
        nondimensionalize(WALL, ENV, 0.0)


def test_fourier_number_is_pinned():
    with pytest.raises(ValidationError):
        DimensionlessProblem(Fo=2.0, Bi_in=1.0, Bi_out=1.0, t_ref=1.0, Gamma=1.0)


def test_wall_properties_must_be_positive():
    with pytest.raises(ValidationError):
        WallLayer(L=0.0, k=1.0, c=1.0)


def test_temperature_map_round_trip():
    u0 = 293.15
    assert to_dimensionless_temperature(u0, u0) == 0.0
    v = to_dimensionless_temperature(np.array([273.15, 303.15]), u0)
    np.testing.assert_allclose(redimensionalize(v, u0), [273.15, 303.15])


def test_boundary_coefficients_scalars_and_arrays():
    problem = nondimensionalize(WALL, ENV, THREE_DAYS)
    b_in, b_out = boundary_coefficients(problem, 0.02, -0.01, 0.5)
    assert isinstance(b_in, float)
    assert b_in == pytest.approx(-0.01 * problem.Bi_in)
    assert b_out == pytest.approx(-problem.Bi_out * 0.02 - 0.5)
    b_in, b_out = boundary_coefficients(problem, np.zeros(3), np.ones(3), np.zeros(3))
    np.testing.assert_allclose(b_in, problem.Bi_in)
    np.testing.assert_allclose(b_out, 0.0)


def test_semi_discretize_uses_previous_field():
    problem = nondimensionalize(WALL, ENV, THREE_DAYS)
    prev = np.linspace(0.0, 0.1, 5)
    instance = semi_discretize(problem, prev, 1e-3, 0.0, 0.0, 0.0, n_nodes=5)
    assert instance.a == pytest.approx(1e-3)
    np.testing.assert_array_equal(instance.b, prev)
    assert instance.b is not prev
    with pytest.raises(ShapeError):
        semi_discretize(problem, prev, 1e-3, 0.0, 0.0, 0.0, n_nodes=6)
    with pytest.raises(InvalidArgumentError):
        semi_discretize(problem, prev, 0.0, 0.0, 0.0, 0.0)


def test_bvp_instance_needs_positive_coefficient():
    with pytest.raises(InvalidArgumentError):
        BvpInstance(a=0.0, b=np.zeros(3), b_in=0.0, b_out=0.0)


def test_boundary_signals_validation():
    with pytest.raises(ShapeError):
        BoundarySignals(np.arange(3.0), np.zeros(3), np.zeros(2), np.zeros(3))
    with pytest.raises(InvalidArgumentError):
        BoundarySignals(np.array([0.0, 2.0, 1.0]), np.zeros(3), np.zeros(3), np.zeros(3))


def test_dimensionless_signals():
    t = np.array([0.0, 3600.0])
    physical = BoundarySignals(t, np.full(2, 293.15), np.full(2, 303.15), np.array([0.0, 100.0]))
    scaled = dimensionless_signals(physical, ENV, WALL)
    assert scaled.dimensionless
    np.testing.assert_allclose(scaled.times, t / (2.2e6 * 0.01 / 1.75))
    np.testing.assert_allclose(scaled.u_out, 0.0)
    np.testing.assert_allclose(scaled.u_in, 10.0 / 293.15)
    assert scaled.q[1] == pytest.approx(100.0 * 0.1 / (1.75 * 293.15))
    with pytest.raises(InvalidArgumentError):
        dimensionless_signals(scaled, ENV, WALL)


def test_signal_window():
    signals = BoundarySignals(np.arange(5.0), np.arange(5.0), np.zeros(5), np.zeros(5))
    part = signals.window(1, 3)
    assert part.steps == 1
    np.testing.assert_array_equal(part.u_out, [1.0, 2.0])
