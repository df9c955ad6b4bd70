"""
Approximation bases for the per-step source term.

Chebyshev and Legendre modes are built a priori from their three-term recurrences;
POD modes are the leading eigenvectors of the spatial correlation of a snapshot matrix. Every basis
is sampled on a SpatialGrid and coefficients are obtained by least squares on the
grid values, whatever the basis kind.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
from pydantic import BaseModel, ValidationError
from scipy import linalg

from .errors import InvalidArgumentError, ModelFormatError, ShapeError, SingularSystemError
from .grid import GridKind, SpatialGrid, to_poly_interval
from .serialization import ArrayPayload, atomic_write_text, read_profiles_csv, write_profiles_csv

logger = logging.getLogger(__name__)

BASIS_FORMAT_VERSION = 1

# normalized coefficients this far outside [0, 1] are roundoff, not a clamp event
_CLAMP_SLACK = 1e-12


class BasisKind(str, Enum):
    CHEBYSHEV = "chebyshev"
    LEGENDRE = "legendre"
    POD = "pod"


@dataclass(frozen=True, eq=False)
class CoefficientRanges:
    """Per-mode extrema of the projection coefficients over a training set."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lo, dtype=float))
        hi = np.atleast_1d(np.asarray(self.hi, dtype=float))
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ShapeError(f"Range bounds have shapes {lo.shape} and {hi.shape}.")
        if np.any(lo > hi):
            raise InvalidArgumentError("Every coefficient range needs min <= max.")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def size(self) -> int:
        return self.lo.size

    @property
    def span(self) -> np.ndarray:
        return self.hi - self.lo

    def truncate(self, n: int) -> "CoefficientRanges":
        return CoefficientRanges(self.lo[:n], self.hi[:n])


@dataclass(frozen=True, eq=False)
class ApproximationBasis:
    """
    N modes sampled on `grid`, stored as the columns of `matrix` (Nx x N).

    `ranges` is attached once coefficient extrema are known; `singular_values`
    only exists for POD bases.
    """

    kind: BasisKind
    grid: SpatialGrid
    matrix: np.ndarray
    ranges: Optional[CoefficientRanges] = None
    singular_values: Optional[np.ndarray] = None

    def __post_init__(self):
        matrix = np.asarray(self.matrix, dtype=float)
        if matrix.ndim != 2 or matrix.shape[0] != self.grid.size:
            raise ShapeError(f"Mode matrix shape {matrix.shape} does not match a grid of {self.grid.size} nodes.")
        if matrix.shape[1] < 1:
            raise InvalidArgumentError("A basis needs at least one mode.")
        matrix.setflags(write=False)
        object.__setattr__(self, "matrix", matrix)
        if self.ranges is not None and self.ranges.size != matrix.shape[1]:
            raise ShapeError(f"Ranges cover {self.ranges.size} modes, basis has {matrix.shape[1]}.")

    @property
    def N(self) -> int:
        return self.matrix.shape[1]

    @property
    def modes(self) -> List[np.ndarray]:
        return [self.matrix[:, j] for j in range(self.N)]

    def truncate(self, n: int) -> "ApproximationBasis":
        if not 1 <= n <= self.N:
            raise InvalidArgumentError(f"Cannot truncate a {self.N}-mode basis to {n} modes.")
        return ApproximationBasis(
            kind=self.kind,
            grid=self.grid,
            matrix=self.matrix[:, :n],
            ranges=self.ranges.truncate(n) if self.ranges is not None else None,
            singular_values=self.singular_values,
        )

    def with_ranges(self, ranges: CoefficientRanges) -> "ApproximationBasis":
        return ApproximationBasis(self.kind, self.grid, self.matrix, ranges, self.singular_values)

    @cached_property
    def projector(self) -> np.ndarray:
        """N x Nx matrix mapping grid values to least-squares coefficients."""
        q, r = linalg.qr(self.matrix, mode="economic")
        diag = np.abs(np.diag(r))
        tol = max(self.matrix.shape) * np.finfo(float).eps * diag.max()
        if diag.min() <= tol:
            raise SingularSystemError(
                f"{self.kind.value} basis with {self.N} modes is rank deficient on this grid "
                f"(smallest |R_jj| = {diag.min():.3e})."
            )
        return linalg.solve_triangular(r, q.T)


@dataclass(frozen=True, eq=False)
class SnapshotMatrix:
    """Source-field samples as columns (Nx x Ns) with their time stamps."""

    columns: np.ndarray
    times: np.ndarray
    grid: SpatialGrid

    def __post_init__(self):
        columns = np.asarray(self.columns, dtype=float)
        times = np.asarray(self.times, dtype=float)
        if columns.ndim != 2 or columns.shape[1] < 1:
            raise InvalidArgumentError("A snapshot set needs at least one column.")
        if columns.shape[0] != self.grid.size:
            raise ShapeError(f"Snapshots have {columns.shape[0]} rows, grid has {self.grid.size} nodes.")
        if times.shape != (columns.shape[1],):
            raise ShapeError(f"{times.size} time stamps for {columns.shape[1]} snapshots.")
        object.__setattr__(self, "columns", columns)
        object.__setattr__(self, "times", times)

    @property
    def count(self) -> int:
        return self.columns.shape[1]

    @classmethod
    def from_series(cls, series) -> "SnapshotMatrix":
        """Every profile of a FieldSeries becomes one snapshot."""
        return cls(columns=series.profiles.T, times=series.times, grid=series.grid)

    def to_csv(self, path) -> Path:
        return write_profiles_csv(path, self.times, self.columns.T, self.grid.physical_nodes)

    @classmethod
    def from_csv(cls, path) -> "SnapshotMatrix":
        times, profiles, physical = read_profiles_csv(path)
        return cls(columns=profiles.T, times=times, grid=grid_from_physical(physical))


def grid_from_physical(physical: np.ndarray) -> SpatialGrid:
    """Rebuild a grid from physical node coordinates read back from a table."""
    try:
        nodes = to_poly_interval(physical)
    except InvalidArgumentError as e:
        raise ModelFormatError(f"Node header outside [0, 1]: {e}") from e
    steps = np.diff(nodes)
    kind = GridKind.UNIFORM if np.allclose(steps, steps[0], rtol=1e-9, atol=0.0) else GridKind.CHEBYSHEV_LOBATTO
    return SpatialGrid(kind, nodes)


@dataclass
class ClampStats:
    """Counts of normalized coefficients and parameters pushed back into [0, 1] or their domains."""

    evaluations: int = 0
    clamped: int = 0
    by_parameter: Dict[str, int] = field(default_factory=dict)

    def record(self, name: str, count: int = 1) -> None:
        if count:
            self.clamped += count
            self.by_parameter[name] = self.by_parameter.get(name, 0) + count

    def merge(self, other: "ClampStats") -> None:
        self.evaluations += other.evaluations
        for name, count in other.by_parameter.items():
            self.record(name, count)


def _check_mode_count(N: int) -> None:
    if int(N) != N or N < 1:
        raise InvalidArgumentError(f"Mode count must be a positive integer, got {N}.")


def chebyshev_basis(N: int, grid: SpatialGrid) -> ApproximationBasis:
    """T_0..T_{N-1} from T_{j+1} = 2x T_j - T_{j-1}."""
    _check_mode_count(N)
    x = grid.nodes
    modes = np.empty((x.size, N))
    modes[:, 0] = 1.0
    if N > 1:
        modes[:, 1] = x
    for j in range(1, N - 1):
        modes[:, j + 1] = 2.0 * x * modes[:, j] - modes[:, j - 1]
    return ApproximationBasis(BasisKind.CHEBYSHEV, grid, modes)


def legendre_basis(N: int, grid: SpatialGrid) -> ApproximationBasis:
    """P_0..P_{N-1} from (j+1) P_{j+1} = (2j+1) x P_j - j P_{j-1}."""
    _check_mode_count(N)
    x = grid.nodes
    modes = np.empty((x.size, N))
    modes[:, 0] = 1.0
    if N > 1:
        modes[:, 1] = x
    for j in range(1, N - 1):
        modes[:, j + 1] = ((2 * j + 1) * x * modes[:, j] - j * modes[:, j - 1]) / (j + 1)
    return ApproximationBasis(BasisKind.LEGENDRE, grid, modes)


def _spatial_correlation_modes(columns: np.ndarray):
    """Singular values and left singular vectors from the eigenpairs of columns @ columns.T.

    Directions whose squared singular value sits below roundoff of the largest one
    are not resolved; they come back as an orthonormal completion of the rest.
    """
    rank_bound = min(columns.shape)
    values, vectors = linalg.eigh(columns @ columns.T)
    order = np.argsort(values)[::-1][:rank_bound]
    return np.sqrt(np.clip(values[order], 0.0, None)), vectors[:, order]


def pod_basis(snapshots: SnapshotMatrix, N: int) -> ApproximationBasis:
    """Leading N POD modes, each signed so its largest-magnitude entry is positive."""
    _check_mode_count(N)
    bound = min(snapshots.columns.shape)
    if N > bound:
        raise InvalidArgumentError(
            f"POD with {N} modes needs at least {N} nodes and {N} snapshots, have "
            f"{snapshots.columns.shape[0]} nodes and {snapshots.count} snapshots."
        )
    s, u = _spatial_correlation_modes(snapshots.columns)
    modes = u[:, :N].copy()
    pivots = np.argmax(np.abs(modes), axis=0)
    signs = np.sign(modes[pivots, np.arange(N)])
    signs[signs == 0] = 1.0
    modes *= signs
    logger.debug(f"POD singular values (leading {min(N, 5)}): {s[:min(N, 5)]}")
    return ApproximationBasis(BasisKind.POD, snapshots.grid, modes, singular_values=s.copy())


def pod_energy(snapshots: SnapshotMatrix) -> np.ndarray:
    """Cumulative fraction of squared singular values captured by the first 1, 2, ... modes."""
    s, _ = _spatial_correlation_modes(snapshots.columns)
    energy = s ** 2
    total = energy.sum()
    if total == 0.0:
        return np.ones_like(energy)
    return np.cumsum(energy) / total


def make_basis(kind: BasisKind, N: int, grid: SpatialGrid,
               snapshots: Optional[SnapshotMatrix] = None) -> ApproximationBasis:
    kind = BasisKind(kind)
    if kind is BasisKind.CHEBYSHEV:
        return chebyshev_basis(N, grid)
    if kind is BasisKind.LEGENDRE:
        return legendre_basis(N, grid)
    if snapshots is None:
        raise InvalidArgumentError("A POD basis cannot be built without snapshots.")
    if not snapshots.grid.same_as(grid):
        raise ShapeError("Snapshots are not sampled on the requested grid.")
    return pod_basis(snapshots, N)


def project(b, basis: ApproximationBasis) -> np.ndarray:
    """Least-squares coefficients of one field (Nx,) or of several columns (Nx, k)."""
    b = np.asarray(b, dtype=float)
    if b.shape[0] != basis.grid.size:
        raise ShapeError(f"Field has {b.shape[0]} values, basis grid has {basis.grid.size} nodes.")
    return basis.projector @ b


def reconstruct(basis: ApproximationBasis, zeta) -> np.ndarray:
    zeta = np.asarray(zeta, dtype=float)
    if zeta.shape[0] != basis.N:
        raise ShapeError(f"{zeta.shape[0]} coefficients for a {basis.N}-mode basis.")
    return basis.matrix @ zeta


def coefficient_ranges(snapshots: SnapshotMatrix, basis: ApproximationBasis) -> CoefficientRanges:
    if snapshots.count < 2:
        raise InvalidArgumentError("Coefficient ranges need at least two snapshots.")
    if not snapshots.grid.same_as(basis.grid):
        raise ShapeError("Snapshots and basis live on different grids.")
    zeta = project(snapshots.columns, basis)
    return CoefficientRanges(zeta.min(axis=1), zeta.max(axis=1))


def normalize(zeta, ranges: CoefficientRanges, stats: Optional[ClampStats] = None) -> np.ndarray:
    """Map each coefficient to [0, 1]; degenerate ranges map to 0.5, out-of-range values are clamped."""
    zeta = np.asarray(zeta, dtype=float)
    if zeta.shape != ranges.lo.shape:
        raise ShapeError(f"{zeta.size} coefficients for {ranges.size} ranges.")
    span = ranges.span
    degenerate = span <= 0.0
    safe = np.where(degenerate, 1.0, span)
    zbar = np.where(degenerate, 0.5, (zeta - ranges.lo) / safe)
    outside = (zbar < -_CLAMP_SLACK) | (zbar > 1.0 + _CLAMP_SLACK)
    if stats is not None:
        for j in np.flatnonzero(outside):
            stats.record(f"zeta_{j + 1}")
    return np.clip(zbar, 0.0, 1.0)


def denormalize(zbar, ranges: CoefficientRanges) -> np.ndarray:
    zbar = np.asarray(zbar, dtype=float)
    if zbar.shape != ranges.lo.shape:
        raise ShapeError(f"{zbar.size} coefficients for {ranges.size} ranges.")
    return ranges.lo + ranges.span * zbar


def quantize(zbar, delta: float) -> np.ndarray:
    """Snap to the nearest multiple of delta inside [0, 1]."""
    if not 0.0 < delta <= 1.0:
        raise InvalidArgumentError(f"Quantization step must lie in (0, 1], got {delta}.")
    zbar = np.asarray(zbar, dtype=float)
    steps = np.floor(1.0 / delta + 1e-9)
    return np.clip(np.round(zbar / delta), 0.0, steps) * delta


class BasisFile(BaseModel):
    format_version: int
    kind: BasisKind
    N: int
    grid: dict
    modes: ArrayPayload
    ranges_lo: Optional[ArrayPayload] = None
    ranges_hi: Optional[ArrayPayload] = None
    singular_values: Optional[ArrayPayload] = None


def basis_to_file(basis: ApproximationBasis) -> BasisFile:
    return BasisFile(
        format_version=BASIS_FORMAT_VERSION,
        kind=basis.kind,
        N=basis.N,
        grid=basis.grid.to_dict(),
        modes=ArrayPayload.encode(basis.matrix),
        ranges_lo=ArrayPayload.encode(basis.ranges.lo) if basis.ranges is not None else None,
        ranges_hi=ArrayPayload.encode(basis.ranges.hi) if basis.ranges is not None else None,
        singular_values=(ArrayPayload.encode(basis.singular_values)
                         if basis.singular_values is not None else None),
    )


def basis_from_file(doc: BasisFile) -> ApproximationBasis:
    if doc.format_version != BASIS_FORMAT_VERSION:
        raise ModelFormatError(
            f"Basis format version {doc.format_version} is not supported (expected {BASIS_FORMAT_VERSION})."
        )
    try:
        grid = SpatialGrid.from_dict(doc.grid)
        ranges = None
        if doc.ranges_lo is not None and doc.ranges_hi is not None:
            ranges = CoefficientRanges(doc.ranges_lo.decode(), doc.ranges_hi.decode())
        basis = ApproximationBasis(
            kind=doc.kind,
            grid=grid,
            matrix=doc.modes.decode(),
            ranges=ranges,
            singular_values=doc.singular_values.decode() if doc.singular_values is not None else None,
        )
    except (KeyError, ValueError) as e:
        raise ModelFormatError(f"Inconsistent basis document: {e}") from e
    if basis.N != doc.N:
        raise ModelFormatError(f"Basis document declares N={doc.N} but stores {basis.N} modes.")
    return basis


def save_basis(basis: ApproximationBasis, path) -> Path:
    path = atomic_write_text(path, basis_to_file(basis).model_dump_json(indent=2))
    logger.info(f"Saved {basis.kind.value} basis (N={basis.N}) to {path}")
    return path


def load_basis(path) -> ApproximationBasis:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        doc = BasisFile.model_validate(raw)
    except FileNotFoundError:
        raise
    except (OSError, json.JSONDecodeError, ValidationError) as e:
        raise ModelFormatError(f"Cannot read basis file {path}: {e}") from e
    return basis_from_file(doc)
