import time

import numpy as np
import pytest

from wallpgd.bases import CoefficientRanges, chebyshev_basis, legendre_basis
from wallpgd.errors import InvalidArgumentError, ShapeError
from wallpgd.fdm import FieldSeries
from wallpgd.grid import chebyshev_points, uniform_grid
from wallpgd.metrics import (CpuLedger, CpuRatio, ErrorReport, epsilon, max_rmse, mu, nu, sensor_error,
                             time_block)


def _quadratic_series(grid, steps=5):
    x = grid.physical_nodes
    times = np.linspace(0.0, 1.0, steps)
    return FieldSeries(times, np.array([t * x ** 2 - (1 - t) * x + 0.1 for t in times]), grid)


def test_error_report_from_trace():
    report = ErrorReport.from_trace([0.1, 0.4, 0.2])
    assert report.value == 0.4
    assert report.argmax == 1
    assert report.trace.shape == (3,)


def test_max_rmse_of_constant_offset():
    grid = uniform_grid(10)
    ref = _quadratic_series(grid)
    shifted = FieldSeries(ref.times, ref.profiles + 0.03, grid)
    assert max_rmse(ref, ref).value == 0.0
    assert max_rmse(ref, shifted).value == pytest.approx(0.03)


def test_max_rmse_rejects_mismatched_series():
    ref = _quadratic_series(uniform_grid(10))
    with pytest.raises(ShapeError):
        max_rmse(ref, _quadratic_series(uniform_grid(12)))
    with pytest.raises(ShapeError):
        max_rmse(ref, _quadratic_series(uniform_grid(10), steps=6))


def test_mu_vanishes_when_basis_spans_the_profiles():
    grid = chebyshev_points(16)
    ref = _quadratic_series(grid)
    assert mu(ref, chebyshev_basis(3, grid)).value < 1e-13
    assert mu(ref, legendre_basis(6, grid), N=3).value < 1e-13
    assert mu(ref, chebyshev_basis(2, grid)).value > 1e-3


def test_mu_grid_mismatch():
    with pytest.raises(ShapeError):
        mu(_quadratic_series(uniform_grid(10)), chebyshev_basis(3, uniform_grid(11)))


def test_nu_converges_to_mu_for_fine_steps():
    grid = uniform_grid(20)
    ref = _quadratic_series(grid, steps=9)
    basis = chebyshev_basis(2, grid)
    basis = basis.with_ranges(CoefficientRanges(np.array([-1.0, -1.0]), np.array([1.0, 1.0])))
    coarse = nu(ref, basis, dzeta=0.5).value
    fine = nu(ref, basis, dzeta=1e-6).value
    assert fine == pytest.approx(mu(ref, basis).value, rel=1e-3)
    assert coarse > fine


def test_nu_needs_ranges():
    grid = uniform_grid(8)
    with pytest.raises(InvalidArgumentError):
        nu(_quadratic_series(grid), chebyshev_basis(2, grid))


def test_epsilon_resamples_reference_onto_model_grid():
    fine, coarse = uniform_grid(40), uniform_grid(8)
    times = np.array([0.0, 0.5])
    linear = lambda g: np.vstack([g.physical_nodes, 1 - g.physical_nodes])  # noqa: E731
    ref = FieldSeries(times, linear(fine), fine)
    model = FieldSeries(times, linear(coarse), coarse)
    assert epsilon(ref, model).value < 1e-14


def test_sensor_error():
    grid = uniform_grid(4)
    series = FieldSeries(np.array([0.0, 1.0, 2.0]), np.outer([1.0, 2.0, 3.0], np.ones(5)), grid)
    report = sensor_error(series, 0.5, [1.0, 2.5, 3.0])
    assert report.value == pytest.approx(0.5)
    assert report.argmax == 1
    interpolated = sensor_error(series, 0.5, [1.5], times=[0.5])
    assert interpolated.value == pytest.approx(0.0)
    with pytest.raises(ShapeError):
        sensor_error(series, 0.5, [1.0, 2.0])


def test_cpu_ratio():
    assert CpuRatio(t_cpu=2.0, t0=8.0).rho == 0.25
    with pytest.raises(InvalidArgumentError):
        CpuRatio(t_cpu=0.0, t0=1.0)


def test_cpu_ledger_accumulates_labels():
    ledger = CpuLedger()
    assert ledger.time_block("a", lambda: 3) == 3
    ledger.time_block("b", lambda: time.sleep(0.01))
    ledger.time_block("a", lambda: None)
    assert set(ledger.durations) == {"a", "b"}
    assert ledger.t0 == max(ledger.durations.values())
    labels = list(ledger.durations)
    assert labels == ["a", "b"]
    assert ledger.ratio("b").rho <= 1.0


def test_cpu_ledger_records_failing_blocks():
    ledger = CpuLedger()
    with pytest.raises(ZeroDivisionError):
        ledger.time_block("boom", lambda: 1 / 0)
    assert "boom" in ledger.durations


def test_empty_ledger_has_no_t0():
    with pytest.raises(InvalidArgumentError):
        CpuLedger().t0


def test_time_block_helper():
    ledger = CpuLedger()
    result, seconds = time_block("work", lambda: sum(range(100)), ledger)
    assert result == 4950
    assert seconds >= 0.0
    assert ledger.durations["work"] == seconds
