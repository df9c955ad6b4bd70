from dataclasses import replace

import numpy as np
import pytest

from wallpgd.bases import BasisKind
from wallpgd.config import NumericsConfig, RunConfig
from wallpgd.errors import ConfigError, InvalidArgumentError
from wallpgd.metrics import epsilon
from wallpgd.pipeline import (FLOOR_K, BasisSpec, build_model, case_reference, model_error_study, model_grid,
                              prepare_basis, replay, run_cell, training_snapshots)
from wallpgd.studies import LearningPeriod

SMALL = RunConfig(numerics=NumericsConfig(reference_nodes=41, pgd_nodes=21))


# ── basis specs ───────────────────────────────────────────────────────────────

@pytest.mark.parametrize("text, kind, period", [
    ("chebyshev", BasisKind.CHEBYSHEV, None),
    ("Legendre", BasisKind.LEGENDRE, None),
    ("pod", BasisKind.POD, None),
    ("pod:half", BasisKind.POD, LearningPeriod.HALF),
    (" pod:cycle1 ", BasisKind.POD, LearningPeriod.CYCLE1),
])
def test_basis_spec_parse(text, kind, period):
    spec = BasisSpec.parse(text)
    assert spec.kind is kind
    assert spec.period is period


@pytest.mark.parametrize("text", ["fourier", "chebyshev:full", "pod:weekly"])
def test_basis_spec_rejects(text):
    with pytest.raises(ConfigError):
        BasisSpec.parse(text)


def test_basis_spec_label():
    assert BasisSpec.parse("pod:full").label == "pod:full"
    assert BasisSpec.parse("legendre").label == "legendre"


# ── offline preparation ───────────────────────────────────────────────────────

def test_model_grid_follows_numerics(short_run):
    assert model_grid(SMALL, short_run).size == 21


def test_prepare_basis_sets_ranges(short_run):
    grid = model_grid(SMALL, short_run)
    basis = prepare_basis(BasisSpec.parse("chebyshev"), 3, short_run, grid)
    assert basis.N == 3
    assert basis.ranges is not None
    assert np.all(basis.ranges.hi >= basis.ranges.lo)
    pod = prepare_basis(BasisSpec.parse("pod:full"), 2, short_run, grid)
    assert pod.kind is BasisKind.POD
    np.testing.assert_allclose(pod.matrix.T @ pod.matrix, np.eye(2), atol=1e-10)


def test_plain_pod_needs_snapshots(short_run):
    grid = model_grid(SMALL, short_run)
    with pytest.raises(InvalidArgumentError):
        prepare_basis(BasisSpec.parse("pod"), 2, short_run, grid)
    snapshots = training_snapshots(short_run, grid)
    assert prepare_basis(BasisSpec.parse("pod"), 2, short_run, grid, snapshots).N == 2


def test_snapshots_on_another_grid_are_resampled(short_run):
    grid = model_grid(SMALL, short_run)
    fine = training_snapshots(short_run, short_run.reference.grid)
    assert not fine.grid.same_as(grid)
    basis = prepare_basis(BasisSpec.parse("pod"), 2, short_run, grid, fine)
    assert basis.grid.same_as(grid)
    assert basis.matrix.shape == (grid.size, 2)


def test_learning_period_selects_leading_profiles(short_run):
    grid = short_run.reference.grid
    full = training_snapshots(short_run, grid, LearningPeriod.FULL)
    cycle = training_snapshots(short_run, grid, LearningPeriod.CYCLE1)
    assert full.count == short_run.reference.steps + 1
    assert 1 < cycle.count < full.count
    np.testing.assert_array_equal(cycle.columns, full.columns[:, :cycle.count])


def test_practical_case_needs_measurements():
    with pytest.raises(ConfigError):
        case_reference(RunConfig(case="practical"))


# ── end to end ────────────────────────────────────────────────────────────────

def test_build_and_replay_track_the_reference(short_run):
    grid = model_grid(SMALL, short_run)
    basis = prepare_basis(BasisSpec.parse("chebyshev"), 3, short_run, grid)
    model = build_model(SMALL, short_run, basis, dzeta=1e-4, seed=42)
    assert model.M >= 1
    series, stats = replay(model, short_run)
    assert series.steps == short_run.reference.steps
    assert stats.evaluations == series.steps
    report = epsilon(short_run.reference, series)
    assert np.isfinite(report.value)
    assert report.value < 0.02


def test_run_cell_reports_timing(short_run):
    cell = run_cell(SMALL, short_run, BasisSpec.parse("legendre"), 2, 1e-2, seed=1)
    assert cell.basis == "legendre"
    assert (cell.N, cell.dzeta) == (2, 1e-2)
    assert cell.seconds > 0
    assert np.isfinite(cell.epsilon.value)


# ── model error ───────────────────────────────────────────────────────────────

def test_model_error_without_exchange_is_zero(short_run):
    study = model_error_study(short_run, f_w=0.0, f_g=0.0)
    np.testing.assert_array_equal(study.qin, 0.0)
    np.testing.assert_array_equal(study.error.profiles, 0.0)
    np.testing.assert_allclose(study.corrected.profiles, short_run.u0 * (short_run.reference.profiles + 1.0))


def test_model_error_shapes(short_run):
    study = model_error_study(short_run)
    assert study.qin.shape == short_run.reference.times.shape
    assert study.error.profiles.shape == short_run.reference.profiles.shape
    assert np.all(np.isfinite(study.error.profiles))


def test_model_error_needs_matching_signals(short_run):
    clipped = replace(short_run, signals=short_run.signals.window(0, 10))
    with pytest.raises(InvalidArgumentError):
        model_error_study(clipped)


def test_warm_floor_alone_heats_the_inside_face(short_run):
    study = model_error_study(short_run, f_w=0.0, floor=FLOOR_K)
    assert np.all(study.qin < 0.0)
    assert study.error.profiles[1:, -1].min() > 0.0
    cooler = model_error_study(short_run, f_w=0.0, floor=FLOOR_K - 10.0)
    assert np.all(cooler.qin > 0.0)

