"""
Offline/online steps shared by the CLI commands, the sweep workers and the
acceptance harness: case reference, basis preparation, model build and replay.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from . import pgd
from .bases import (ApproximationBasis, BasisKind, ClampStats, SnapshotMatrix, coefficient_ranges, make_basis)
from .config import RunConfig
from .errors import ConfigError, InvalidArgumentError
from .fdm import FieldSeries, qin_flux, solve_model_error
from .grid import SpatialGrid, uniform_grid
from .metrics import CpuLedger, ErrorReport, epsilon
from .physics import KELVIN_OFFSET, boundary_coefficients, redimensionalize
from .studies import CaseRun, LearningPeriod, learning_split, load_measurements, practical_reference, theoretical_reference

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class BasisSpec:
    """`chebyshev`, `legendre`, `pod` or `pod:<learning period>`."""

    kind: BasisKind
    period: Optional[LearningPeriod] = None

    @classmethod
    def parse(cls, text: str) -> "BasisSpec":
        name, _, period = text.strip().lower().partition(":")
        try:
            kind = BasisKind(name)
        except ValueError as e:
            raise ConfigError(f"Unknown basis '{text}' (expected chebyshev, legendre or pod[:period]).") from e
        if period and kind is not BasisKind.POD:
            raise ConfigError(f"Only POD bases take a learning period, got '{text}'.")
        try:
            return cls(kind, LearningPeriod(period) if period else None)
        except ValueError as e:
            raise ConfigError(f"Unknown learning period in '{text}' (expected full, half or cycle1).") from e

    @property
    def label(self) -> str:
        return self.kind.value if self.period is None else f"{self.kind.value}:{self.period.value}"


def case_reference(config: RunConfig, n_nodes: Optional[int] = None, dt: Optional[float] = None) -> CaseRun:
    """FD reference of the configured case; overrides apply to node count and (theoretical) time step."""
    if config.case == "theoretical":
        return theoretical_reference(config.theoretical,
                                     n_nodes=n_nodes or config.numerics.reference_nodes,
                                     dt=dt or config.numerics.dt)
    practical = config.practical
    if practical.measurements is None:
        raise ConfigError("The practical case needs [practical] measurements = <csv path>.")
    if dt is not None:
        logger.warning("--dt is ignored for the practical case; the step follows the sampling interval")
    if n_nodes is not None:
        practical = practical.model_copy(update={"n_nodes": n_nodes})
    measurements = load_measurements(practical.measurements, practical.positions,
                                     practical.sigma_m, practical.delta_x)
    return practical_reference(measurements, practical)


def model_grid(config: RunConfig, run: CaseRun) -> SpatialGrid:
    """The practical model shares the reference grid; the theoretical one uses `numerics.pgd_nodes`."""
    if config.case == "practical":
        return run.reference.grid
    return uniform_grid(config.numerics.pgd_nodes - 1)


def training_snapshots(run: CaseRun, grid: SpatialGrid, period: Optional[LearningPeriod] = None) -> SnapshotMatrix:
    series = run.reference.resample(grid)
    if period is None or period is LearningPeriod.FULL:
        return SnapshotMatrix.from_series(series)
    return learning_split(series, period, run.problem.t_ref)


def prepare_basis(spec: BasisSpec, N: int, run: CaseRun, grid: SpatialGrid,
                  snapshots: Optional[SnapshotMatrix] = None) -> ApproximationBasis:
    """Basis with coefficient ranges. POD trains on `snapshots`, else on the learning period of the run."""
    if spec.kind is BasisKind.POD and snapshots is None:
        if spec.period is None:
            raise InvalidArgumentError("A POD basis needs snapshots or a learning period (pod:full, pod:half, ...).")
        snapshots = training_snapshots(run, grid, spec.period)
    elif snapshots is not None and not snapshots.grid.same_as(grid):
        logger.info(f"Resampling {snapshots.count} snapshots from {snapshots.grid.size} to {grid.size} nodes")
        series = FieldSeries(snapshots.times, snapshots.columns.T, snapshots.grid)
        snapshots = SnapshotMatrix.from_series(series.resample(grid))
    training = snapshots if snapshots is not None else training_snapshots(run, grid)
    basis = make_basis(spec.kind, N, grid, training)
    return basis.with_ranges(coefficient_ranges(training, basis))


def boundary_scalars(run: CaseRun) -> Tuple[np.ndarray, np.ndarray]:
    s = run.signals
    return boundary_coefficients(run.problem, s.u_out, s.u_in, s.q)


def build_model(config: RunConfig, run: CaseRun, basis: ApproximationBasis, dzeta: float,
                seed: int, criteria: Optional[pgd.StoppingCriteria] = None) -> pgd.PgdModel:
    b_in, b_out = boundary_scalars(run)
    num = config.numerics
    # boundary scalars scale with the Biot number; the stiff practical faces widen the grid steps alike
    scale = config.practical.dirichlet_biot if config.case == "practical" else 1.0
    domains = pgd.default_domains(b_in, b_out, basis.N, dzeta, num.delta_b_in * scale, num.delta_b_out * scale,
                                  num.domain_margin)
    return pgd.build(run.dt * run.problem.Fo, run.problem.Bi_in, run.problem.Bi_out, basis, domains,
                     criteria or config.pgd, seed)


def replay(model: pgd.PgdModel, run: CaseRun, nearest: bool = False) -> Tuple[FieldSeries, ClampStats]:
    """Online simulation over the whole run, started from the reference initial profile."""
    stats = ClampStats()
    initial = run.reference.resample(model.grid).profiles[0]
    series = pgd.simulate(model, run.problem, run.signals, run.dt, initial, nearest=nearest, stats=stats)
    return series, stats


@dataclass(frozen=True)
class CellResult:
    basis: str
    N: int
    dzeta: float
    M: int
    epsilon: ErrorReport
    seconds: float


def run_cell(config: RunConfig, run: CaseRun, spec: BasisSpec, N: int, dzeta: float, seed: int) -> CellResult:
    """One sweep cell: basis, offline build and online replay, timed together."""
    ledger = CpuLedger()
    grid = model_grid(config, run)
    basis = ledger.time_block("basis", lambda: prepare_basis(spec, N, run, grid))
    model = ledger.time_block("build", lambda: build_model(config, run, basis, dzeta, seed))
    series, _ = ledger.time_block("simulate", lambda: replay(model, run))
    report = epsilon(run.reference, series)
    return CellResult(spec.label, N, dzeta, model.M, report, sum(ledger.durations.values()))


# floor surface held at 23 degC (underfloor heating)
FLOOR_K = 23.0 + KELVIN_OFFSET


@dataclass(frozen=True, eq=False)
class ModelErrorStudy:
    qin: np.ndarray
    error: FieldSeries
    corrected: FieldSeries


def model_error_study(run: CaseRun, f_w: float = 0.2, f_g: float = 0.2, eps_w: float = 0.9,
                      eps_g: float = 0.9, floor: float = FLOOR_K) -> ModelErrorStudy:
    """
    Error left by neglecting the inside long-wave exchange. q_in is evaluated a posteriori
    from the reference inside surface temperature; the surrounding walls and ceiling sit at
    the inside air temperature and the floor at `floor`. Fields of the result are in Kelvin.
    """
    ref = run.reference
    u = redimensionalize(ref.profiles, run.u0)
    u_walls = redimensionalize(run.signals.u_in, run.u0)
    if u_walls.size != ref.times.size:
        raise InvalidArgumentError("Reference and boundary signals have different time grids.")
    qin = np.atleast_1d(qin_flux(u[:, -1], u_walls, floor, f_w=f_w, f_g=f_g, eps_w=eps_w, eps_g=eps_g))
    error = solve_model_error(run.problem, run.wall, qin, run.dt, ref.grid)
    return ModelErrorStudy(qin, error, FieldSeries(ref.times, u - error.profiles, ref.grid))
