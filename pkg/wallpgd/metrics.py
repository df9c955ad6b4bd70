"""Error functionals between series and the CPU-time ledger."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Tuple, TypeVar

import numpy as np

from .bases import ApproximationBasis, denormalize, normalize, project, quantize, reconstruct
from .errors import InvalidArgumentError, ShapeError
from .fdm import FieldSeries

logger = logging.getLogger(__name__)

T = TypeVar("T")


@dataclass(frozen=True, eq=False)
class ErrorReport:
    """Max over time of the per-step RMSE, with the whole trace and where the max occurs."""

    value: float
    trace: np.ndarray
    argmax: int

    @classmethod
    def from_trace(cls, trace) -> "ErrorReport":
        trace = np.asarray(trace, dtype=float)
        idx = int(np.argmax(trace))
        return cls(value=float(trace[idx]), trace=trace, argmax=idx)


@dataclass(frozen=True)
class CpuRatio:
    t_cpu: float
    t0: float

    def __post_init__(self):
        if not (self.t_cpu > 0 and self.t0 > 0):
            raise InvalidArgumentError(f"CPU times must be positive, got t_cpu={self.t_cpu}, t0={self.t0}.")

    @property
    def rho(self) -> float:
        return self.t_cpu / self.t0


def _rmse_rows(reference: np.ndarray, candidate: np.ndarray) -> np.ndarray:
    if reference.shape != candidate.shape:
        raise ShapeError(f"Cannot compare arrays of shapes {reference.shape} and {candidate.shape}.")
    return np.sqrt(np.mean((reference - candidate) ** 2, axis=-1))


def max_rmse(reference: FieldSeries, candidate: FieldSeries) -> ErrorReport:
    if not reference.grid.same_as(candidate.grid):
        raise ShapeError("Series live on different grids.")
    if reference.times.shape != candidate.times.shape or not np.allclose(reference.times, candidate.times,
                                                                         rtol=1e-12, atol=1e-12):
        raise ShapeError("Series have different time stamps.")
    return ErrorReport.from_trace(_rmse_rows(reference.profiles, candidate.profiles))


def _coefficients(reference: FieldSeries, basis: ApproximationBasis, N: Optional[int]):
    if N is not None and N != basis.N:
        basis = basis.truncate(N)
    if not reference.grid.same_as(basis.grid):
        raise ShapeError("Reference series and basis live on different grids.")
    return basis, project(reference.profiles.T, basis)


def mu(reference: FieldSeries, basis: ApproximationBasis, N: Optional[int] = None) -> ErrorReport:
    """Truncation error of the source-term projection on the first N modes."""
    basis, zeta = _coefficients(reference, basis, N)
    approx = reconstruct(basis, zeta).T
    return ErrorReport.from_trace(_rmse_rows(reference.profiles, approx))


def nu(reference: FieldSeries, basis: ApproximationBasis, N: Optional[int] = None,
       dzeta: float = 1e-4) -> ErrorReport:
    """Projection error once the normalized coefficients are snapped to the dzeta grid."""
    basis, zeta = _coefficients(reference, basis, N)
    if basis.ranges is None:
        raise InvalidArgumentError("The discretization error needs a basis with coefficient ranges.")
    snapped = np.empty_like(zeta)
    for n in range(zeta.shape[1]):
        snapped[:, n] = denormalize(quantize(normalize(zeta[:, n], basis.ranges), dzeta), basis.ranges)
    approx = reconstruct(basis, snapped).T
    return ErrorReport.from_trace(_rmse_rows(reference.profiles, approx))


def epsilon(reference: FieldSeries, pgd_series: FieldSeries) -> ErrorReport:
    """Error of the combined model; the reference is resampled onto the model grid when they differ."""
    return max_rmse(reference.resample(pgd_series.grid), pgd_series)


def sensor_error(series: FieldSeries, position: float, record, times=None) -> ErrorReport:
    """Max-over-time absolute error between a simulated series read at one depth and a sensor record."""
    values = series.at_positions([position])[:, 0]
    record = np.asarray(record, dtype=float)
    if times is not None:
        values = np.interp(np.asarray(times, dtype=float), series.times, values)
    if values.shape != record.shape:
        raise ShapeError(f"Sensor record has {record.size} samples, series gives {values.size}.")
    return ErrorReport.from_trace(np.abs(values - record))


@dataclass
class CpuLedger:
    """Wall-clock durations per label; ratios are taken against the largest entry unless t0 is given."""

    durations: Dict[str, float] = field(default_factory=dict)

    def time_block(self, label: str, closure: Callable[[], T]) -> T:
        start = time.perf_counter()
        try:
            return closure()
        finally:
            elapsed = time.perf_counter() - start
            self.durations[label] = self.durations.get(label, 0.0) + elapsed
            logger.debug(f"{label}: {elapsed:.3f} s")

    @property
    def t0(self) -> float:
        if not self.durations:
            raise InvalidArgumentError("No timed blocks recorded.")
        return max(self.durations.values())

    def ratio(self, label: str, t0: Optional[float] = None) -> CpuRatio:
        return CpuRatio(t_cpu=self.durations[label], t0=self.t0 if t0 is None else t0)

    def ratios(self, t0: Optional[float] = None) -> List[Tuple[str, CpuRatio]]:
        return [(label, self.ratio(label, t0)) for label in self.durations]


def time_block(label: str, closure: Callable[[], T], ledger: Optional[CpuLedger] = None) -> Tuple[T, float]:
    """Run closure, returning (result, seconds); the duration is also recorded in `ledger` if given."""
    ledger = ledger if ledger is not None else CpuLedger()
    result = ledger.time_block(label, closure)
    return result, ledger.durations[label]
