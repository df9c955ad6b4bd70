"""
The two case studies.

Theoretical case: a 20 cm concrete wall under sinusoidal outside/inside air temperatures
and a peaked outside radiative flux, over three days.

Practical case: the 10 cm insulation layer of a laboratory wall between a
heated and a cooled room, instrumented with four thermocouples. Measurements
are read from CSV; `synthetic_measurements` generates a stand-in data set that
follows the heater / heat-pump schedule of the experiment.
"""
from __future__ import annotations

import logging
import math
import re
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, field_validator

from .bases import SnapshotMatrix
from .errors import InvalidArgumentError, MeasurementParseError, ShapeError
from .fdm import DirichletBc, FieldSeries, FourierBc, solve_transient
from .grid import SpatialGrid, uniform_grid
from .physics import (KELVIN_OFFSET, BoundarySignals, ConvectiveEnvironment, DimensionlessProblem, WallLayer,
                      dimensionless_signals, nondimensionalize, to_dimensionless_temperature)

logger = logging.getLogger(__name__)

HOUR = 3600.0


# ---------------------------------------------------------------------------
# theoretical case
# ---------------------------------------------------------------------------

class TheoreticalCaseConfig(BaseModel):
    """Temperatures in Celsius, frequencies in 1/h, flux in W/m2."""
    model_config = ConfigDict(frozen=True)

    u_om: float = 20.0
    delta_o1: float = -4.4
    omega_o1: float = 1.0 / 72.0
    delta_o2: float = -11.7
    omega_o2: float = 1.0 / 24.0
    q_m: float = 500.0
    omega_q: float = 1.0 / 48.0
    u_im: float = 20.0
    delta_i: float = -2.0
    omega_i1: float = 1.0 / 48.0
    h_in: float = Field(8.7, gt=0)
    h_out: float = Field(23.2, gt=0)
    wall: WallLayer = WallLayer(L=0.2, k=1.75, c=2.2e6)
    horizon_days: float = Field(3.0, gt=0)
    u0: float = Field(293.15, gt=0, description="initial uniform temperature [K]")

    @property
    def horizon(self) -> float:
        return self.horizon_days * 24.0 * HOUR

    def environment(self) -> ConvectiveEnvironment:
        return ConvectiveEnvironment(h_in=self.h_in, h_out=self.h_out, u0=self.u0)

    def problem(self) -> DimensionlessProblem:
        return nondimensionalize(self.wall, self.environment(), self.horizon)


def theoretical_signals(config: TheoreticalCaseConfig, t) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(u_out [K], u_in [K], q [W/m2]) at times t [s]."""
    hours = np.asarray(t, dtype=float) / HOUR
    if np.any(hours < 0):
        raise InvalidArgumentError("Signal times must be non-negative.")
    two_pi = 2.0 * np.pi
    u_out = (config.u_om + config.delta_o1 * np.sin(two_pi * config.omega_o1 * hours)
             + config.delta_o2 * np.sin(two_pi * config.omega_o2 * hours))
    q = config.q_m * np.sin(two_pi * config.omega_q * hours) ** 20
    u_in = config.u_im + config.delta_i * np.sin(two_pi * config.omega_i1 * hours)
    return u_out + KELVIN_OFFSET, u_in + KELVIN_OFFSET, q


@dataclass(frozen=True, eq=False)
class CaseRun:
    """A dimensionless problem with its boundary signals on the run's time grid and the reference series."""

    problem: DimensionlessProblem
    wall: WallLayer
    u0: float
    signals: BoundarySignals
    dt: float
    reference: FieldSeries


def theoretical_time_signals(config: TheoreticalCaseConfig, dt: float) -> Tuple[DimensionlessProblem, BoundarySignals]:
    problem = config.problem()
    steps = int(math.ceil(problem.Gamma / dt - 1e-9))
    t_phys = dt * problem.t_ref * np.arange(steps + 1)
    u_out, u_in, q = theoretical_signals(config, t_phys)
    physical = BoundarySignals(t_phys, u_out, u_in, q)
    return problem, dimensionless_signals(physical, config.environment(), config.wall)


def theoretical_reference(config: Optional[TheoreticalCaseConfig] = None, n_nodes: int = 200,
                          dt: float = 1e-3, grid: Optional[SpatialGrid] = None) -> CaseRun:
    """FD reference with Fourier conditions on both faces, started from the uniform temperature u0."""
    config = config or TheoreticalCaseConfig()
    grid = grid or uniform_grid(n_nodes - 1)
    problem, signals = theoretical_time_signals(config, dt)
    left = FourierBc(problem.Bi_out, signals.u_out, flux=signals.q)
    right = FourierBc(problem.Bi_in, signals.u_in)
    series = solve_transient(problem, left, right, dt, grid, np.zeros(grid.size))
    logger.info(f"Theoretical reference: {series.steps} steps, {grid.size} nodes, "
                f"Bi_in={problem.Bi_in:.4f}, Bi_out={problem.Bi_out:.4f}")
    return CaseRun(problem, config.wall, config.u0, signals, dt, series)


# ---------------------------------------------------------------------------
# practical case
# ---------------------------------------------------------------------------

class PracticalCaseConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    measurements: Optional[Path] = None
    wall: WallLayer = WallLayer(L=0.10, k=0.04, c=30e3)
    positions: List[float] = Field(default_factory=lambda: [0.0, 0.04, 0.08, 0.10])
    sigma_m: float = Field(0.1, ge=0)
    delta_x: float = Field(1e-3, ge=0)
    u0: float = Field(293.15, gt=0)
    n_nodes: int = Field(99, ge=2)
    sample_step: float = Field(30.0, gt=0)
    dirichlet_biot: float = Field(1000.0, gt=0)
    film_coefficient: float = Field(8.0, gt=0, description="film coefficient of the synthetic rooms [W/m2/K]")

    @field_validator("positions")
    @classmethod
    def _sorted_positions(cls, v: List[float]) -> List[float]:
        if len(v) < 2 or any(b <= a for a, b in zip(v, v[1:])):
            raise ValueError("sensor positions must be at least two strictly increasing depths")
        return v


@dataclass(frozen=True, eq=False)
class MeasurementSet:
    """Sensor temperatures [K] (Nt x n_sensors) on a common time grid [s]."""

    times: np.ndarray
    temperatures: np.ndarray
    names: Tuple[str, ...]
    positions: np.ndarray
    sigma_m: float = 0.1
    delta_x: float = 1e-3

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        temps = np.asarray(self.temperatures, dtype=float)
        positions = np.asarray(self.positions, dtype=float)
        if temps.shape != (times.size, len(self.names)):
            raise ShapeError(f"Temperatures have shape {temps.shape}, expected ({times.size}, {len(self.names)}).")
        if positions.shape != (len(self.names),):
            raise ShapeError(f"{positions.size} positions for {len(self.names)} sensors.")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "temperatures", temps)
        object.__setattr__(self, "positions", positions)

    def series(self, name: str) -> np.ndarray:
        return self.temperatures[:, self.names.index(name)]

    def check_within(self, thickness: float) -> None:
        if np.any(self.positions < 0) or np.any(self.positions > thickness + 1e-12):
            raise InvalidArgumentError(f"Sensor positions {self.positions} fall outside the {thickness} m layer.")


_SENSOR_COLUMN = re.compile(r"^(T\d+)_C$")
_PARSER_LINE = re.compile(r"line (\d+)")


def load_measurements(path, positions: Sequence[float] = (0.0, 0.04, 0.08, 0.10),
                      sigma_m: float = 0.1, delta_x: float = 1e-3,
                      sensors: Sequence[str] = ("T01", "T02", "T03", "T04")) -> MeasurementSet:
    """Read `time_s,T01_C,...`; temperatures are converted to Kelvin."""
    path = Path(path)
    try:
        frame = pd.read_csv(path, dtype=str, skip_blank_lines=True)
    except pd.errors.EmptyDataError as e:
        raise MeasurementParseError(f"{path} is empty") from e
    except pd.errors.ParserError as e:
        match = _PARSER_LINE.search(str(e))
        raise MeasurementParseError(f"ragged row in {path}: {e}",
                                    line=int(match.group(1)) if match else None) from e

    if "time_s" not in frame.columns:
        raise MeasurementParseError(f"{path} has no 'time_s' column", line=1)
    available = {m.group(1): col for col in frame.columns if (m := _SENSOR_COLUMN.match(col))}
    missing = [s for s in sensors if s not in available]
    if missing:
        raise MeasurementParseError(f"{path} lacks sensor column(s) {', '.join(s + '_C' for s in missing)}", line=1)
    columns = ["time_s"] + [available[s] for s in sensors]
    values = frame[columns].apply(pd.to_numeric, errors="coerce")
    bad = values.isna().any(axis=1).to_numpy()
    if bad.any():
        # header is line 1, first data row line 2
        raise MeasurementParseError("missing or non-numeric value", line=int(np.flatnonzero(bad)[0]) + 2)
    data = values.to_numpy(dtype=float)
    if data.shape[0] < 2:
        raise MeasurementParseError(f"{path} needs at least two samples, found {data.shape[0]}")
    steps = np.diff(data[:, 0])
    if np.any(steps <= 0):
        raise MeasurementParseError("time stamps are not strictly increasing", line=int(np.flatnonzero(steps <= 0)[0]) + 3)
    if len(positions) != len(sensors):
        raise InvalidArgumentError(f"{len(positions)} positions for {len(sensors)} sensors.")

    logger.info(f"Loaded {data.shape[0]} samples of {len(sensors)} sensors from {path}")
    return MeasurementSet(
        times=data[:, 0],
        temperatures=data[:, 1:] + KELVIN_OFFSET,
        names=tuple(sensors),
        positions=np.asarray(positions, dtype=float),
        sigma_m=sigma_m,
        delta_x=delta_x,
    )


def initial_profile(values, positions, grid: SpatialGrid, thickness: float) -> np.ndarray:
    """Piecewise-linear interpolation of sensor values on the grid, constant beyond the outermost sensors."""
    values = np.asarray(values, dtype=float)
    positions = np.asarray(positions, dtype=float)
    if positions.size < 2 or values.shape != positions.shape:
        raise InvalidArgumentError("Interpolating a profile needs at least two sensors with one value each.")
    order = np.argsort(positions, kind="stable")
    positions, values = positions[order], values[order]
    if np.any(np.diff(positions) == 0):
        raise InvalidArgumentError("Sensor positions must be distinct.")
    return np.interp(grid.physical_nodes * thickness, positions, values)


class LearningPeriod(str, Enum):
    FULL = "full"
    HALF = "half"
    CYCLE1 = "cycle1"

    @property
    def end(self) -> float:
        """Window end [s] measured from the start of the evaluation data."""
        return {"full": 9.0 * HOUR, "half": 4.0 * HOUR + 50 * 60.0, "cycle1": 40 * 60.0}[self.value]


def learning_split(series: FieldSeries, period: LearningPeriod, t_ref: float) -> SnapshotMatrix:
    """Snapshots of the series inside [t_0, t_0 + window]; `t_ref` converts dimensionless time to seconds."""
    period = LearningPeriod(period)
    elapsed = (series.times - series.times[0]) * t_ref
    tol = 1e-6 * max(1.0, period.end)
    if elapsed[-1] < period.end - tol:
        raise InvalidArgumentError(
            f"Learning period '{period.value}' needs {period.end:.0f} s of data, series covers {elapsed[-1]:.0f} s."
        )
    keep = elapsed <= period.end + tol
    return SnapshotMatrix(series.profiles[keep].T, series.times[keep], series.grid)


def _derivative_weights(xs: np.ndarray, x: float) -> np.ndarray:
    """Weights of the derivative at x of the quadratic through three points."""
    w = np.zeros(3)
    for i in range(3):
        denom = np.prod([xs[i] - xs[m] for m in range(3) if m != i])
        w[i] = sum(np.prod([x - xs[m] for m in range(3) if m not in (i, k)]) for k in range(3) if k != i) / denom
    return w


def experimental_uncertainty(temperatures, positions, index: int, sigma_m: float = 0.1,
                             delta_x: float = 1e-3) -> Tuple[np.ndarray, float]:
    """
    sigma(t) = sqrt(sigma_m^2 + (du/dx * delta_x)^2) at sensor `index` and its time mean.

    The gradient is second order: centered on the two neighbours for interior sensors,
    one-sided on the three nearest sensors at either end.
    """
    temps = np.atleast_2d(np.asarray(temperatures, dtype=float))
    positions = np.asarray(positions, dtype=float)
    if positions.size < 3:
        raise InvalidArgumentError("A second-order gradient needs at least three sensors.")
    if temps.shape[1] != positions.size:
        raise ShapeError(f"{temps.shape[1]} sensor series for {positions.size} positions.")
    if not 0 <= index < positions.size:
        raise InvalidArgumentError(f"Sensor index {index} out of range.")
    start = min(max(index - 1, 0), positions.size - 3)
    stencil = slice(start, start + 3)
    weights = _derivative_weights(positions[stencil], positions[index])
    gradient = temps[:, stencil] @ weights
    sigma = np.sqrt(sigma_m ** 2 + (gradient * delta_x) ** 2)
    return sigma, float(sigma.mean())


# ---------------------------------------------------------------------------
# practical case runs
# ---------------------------------------------------------------------------

def practical_problem(config: PracticalCaseConfig, horizon: float) -> DimensionlessProblem:
    """Both faces share the stiff Biot number standing in for the surface conditions."""
    env = ConvectiveEnvironment(h_in=config.dirichlet_biot * config.wall.k / config.wall.L,
                                h_out=config.dirichlet_biot * config.wall.k / config.wall.L,
                                u0=config.u0)
    return nondimensionalize(config.wall, env, horizon)


def practical_reference(measurements: MeasurementSet, config: Optional[PracticalCaseConfig] = None,
                        window: float = LearningPeriod.FULL.end) -> CaseRun:
    """FD reference driven by the surface sensors (first and last) as Dirichlet values."""
    config = config or PracticalCaseConfig()
    measurements.check_within(config.wall.L)
    elapsed = measurements.times - measurements.times[0]
    keep = elapsed <= window + 1e-6
    if elapsed[keep][-1] < window - 1e-6:
        raise InvalidArgumentError(f"Measurements cover {elapsed[-1]:.0f} s, the run needs {window:.0f} s.")
    times = elapsed[keep]
    temps = measurements.temperatures[keep]

    problem = practical_problem(config, window)
    dt = config.sample_step / problem.t_ref
    if not np.allclose(np.diff(times), config.sample_step, rtol=1e-6, atol=1e-6):
        raise InvalidArgumentError(f"Measurements are not sampled every {config.sample_step} s.")
    grid = uniform_grid(config.n_nodes - 1)
    outside = to_dimensionless_temperature(temps[:, 0], config.u0)
    inside = to_dimensionless_temperature(temps[:, -1], config.u0)
    initial = initial_profile(to_dimensionless_temperature(temps[0], config.u0),
                              measurements.positions, grid, config.wall.L)
    series = solve_transient(problem, DirichletBc(outside), DirichletBc(inside), dt, grid, initial)
    signals = BoundarySignals(times / problem.t_ref, outside, inside, np.zeros_like(outside), dimensionless=True)
    logger.info(f"Practical reference: {series.steps} steps of {config.sample_step:g} s on {grid.size} nodes")
    return CaseRun(problem, config.wall, config.u0, signals, dt, series)


# (heater on, heat pump on, minutes)
CYCLE_SCHEDULE: Tuple[Tuple[bool, bool, int], ...] = (
    (False, True, 40), (True, True, 40), (False, True, 40),
    (True, True, 25), (False, True, 25),
    (True, True, 60), (False, True, 60),
    (True, False, 40), (False, False, 40),
    (True, False, 25), (False, False, 25),
    (True, False, 60), (False, False, 60),
)
WARM_ROOM_C = {True: 35.0, False: 20.0}
COLD_ROOM_C = {True: 5.0, False: 15.0}
# cold-room rise while the heater runs, through the shared wall and door leakage
HEATER_LEAK_K = 4.0
ROOM_TIME_CONSTANT = 15 * 60.0
INITIALIZATION = 2 * HOUR


def _room_air(schedule: Sequence[Tuple[bool, bool, float]], step: float) -> Tuple[np.ndarray, np.ndarray]:
    """First-order response of both rooms to their set points, one sample per step (Celsius)."""
    decay = math.exp(-step / ROOM_TIME_CONSTANT)
    warm = [WARM_ROOM_C[False]]
    cold = [COLD_ROOM_C[False]]
    for heater, pump, seconds in schedule:
        for _ in range(int(round(seconds / step))):
            warm.append(WARM_ROOM_C[heater] + (warm[-1] - WARM_ROOM_C[heater]) * decay)
            cold_target = COLD_ROOM_C[pump] + HEATER_LEAK_K * heater
            cold.append(cold_target + (cold[-1] - cold_target) * decay)
    return np.array(warm), np.array(cold)


def synthetic_measurements(config: Optional[PracticalCaseConfig] = None) -> pd.DataFrame:
    """
    Synthetic stand-in for the laboratory record: the insulation layer between the cold
    room (x = 0) and the warm room (x = L), both exchanging with their air through a film
    coefficient, sensors sampled every `sample_step` over the nine hours of cycles.
    """
    config = config or PracticalCaseConfig()
    step = config.sample_step
    schedule = [(True, True, INITIALIZATION)] + [(h, p, m * 60.0) for h, p, m in CYCLE_SCHEDULE]
    warm, cold = _room_air(schedule, step)
    total = (warm.size - 1) * step

    bi = config.film_coefficient * config.wall.L / config.wall.k
    env = ConvectiveEnvironment(h_in=config.film_coefficient, h_out=config.film_coefficient, u0=config.u0)
    problem = nondimensionalize(config.wall, env, total)
    dt = step / problem.t_ref
    grid = uniform_grid(config.n_nodes - 1)
    left = FourierBc(bi, to_dimensionless_temperature(cold + KELVIN_OFFSET, config.u0))
    right = FourierBc(bi, to_dimensionless_temperature(warm + KELVIN_OFFSET, config.u0))
    series = solve_transient(problem, left, right, dt, grid, np.zeros(grid.size))

    start = int(round(INITIALIZATION / step))
    sensors = series.at_positions(np.asarray(config.positions) / config.wall.L)[start:]
    celsius = config.u0 * (sensors + 1.0) - KELVIN_OFFSET
    frame = pd.DataFrame({"time_s": step * np.arange(celsius.shape[0])})
    for j in range(celsius.shape[1]):
        frame[f"T{j + 1:02d}_C"] = np.round(celsius[:, j], 6)
    logger.info(f"Synthetic measurements: {len(frame)} samples, {celsius.shape[1]} sensors")
    return frame


def write_measurements(frame: pd.DataFrame, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, float_format="%.6f")
    return path
