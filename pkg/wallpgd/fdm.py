"""
Implicit-Euler finite-difference solvers.

The spatial operator is assembled on the physical coordinate x in [0, 1] of any
SpatialGrid as  S = W + a (K + R):  W the lumped (trapezoidal) mass, K the
linear-element stiffness and R the Robin coefficients on the two end nodes.
On a uniform grid this is exactly the central-difference scheme with a ghost
node at each Fourier boundary. The same operator is reused by `pgd`.

Boundary conventions on u' = du/dx:
    left  (x = 0, outside):  u' =  Bi (u - air) - flux
    right (x = 1, inside):   u' = -Bi (u - air) + flux
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Tuple, Union

import numpy as np
from scipy import linalg

from .errors import InvalidArgumentError, NumericalFailureError, ShapeError
from .grid import SpatialGrid
from .physics import BvpInstance, DimensionlessProblem, WallLayer
from .serialization import read_profiles_csv, write_profiles_csv

logger = logging.getLogger(__name__)

STEFAN_BOLTZMANN = 5.67e-8


@dataclass(frozen=True, eq=False)
class FieldSeries:
    """Profiles (Nt x Nx) on `grid` at strictly increasing `times`."""

    times: np.ndarray
    profiles: np.ndarray
    grid: SpatialGrid

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        profiles = np.asarray(self.profiles, dtype=float)
        if times.ndim != 1 or times.size < 1:
            raise ShapeError("A series needs a one-dimensional, non-empty time grid.")
        if np.any(np.diff(times) <= 0):
            raise InvalidArgumentError("Series time stamps must be strictly increasing.")
        if profiles.shape != (times.size, self.grid.size):
            raise ShapeError(f"Profiles have shape {profiles.shape}, expected ({times.size}, {self.grid.size}).")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "profiles", profiles)

    @property
    def steps(self) -> int:
        return self.times.size - 1

    @property
    def final(self) -> np.ndarray:
        return self.profiles[-1]

    def at_positions(self, x) -> np.ndarray:
        """Values at physical positions x in [0, 1], linearly interpolated: shape (Nt, len(x))."""
        return self.profiles @ interpolation_matrix(self.grid.physical_nodes, x).T

    def resample(self, grid: SpatialGrid) -> "FieldSeries":
        if grid.same_as(self.grid):
            return self
        return FieldSeries(self.times, self.at_positions(grid.physical_nodes), grid)

    def to_csv(self, path) -> Path:
        return write_profiles_csv(path, self.times, self.profiles, self.grid.physical_nodes)

    @classmethod
    def from_csv(cls, path) -> "FieldSeries":
        from .bases import grid_from_physical

        times, profiles, physical = read_profiles_csv(path)
        return cls(times, profiles, grid_from_physical(physical))


def interpolation_matrix(src, dst) -> np.ndarray:
    """Dense (len(dst) x len(src)) piecewise-linear interpolation weights."""
    src = np.asarray(src, dtype=float)
    dst = np.atleast_1d(np.asarray(dst, dtype=float))
    if np.any(dst < src[0] - 1e-12) or np.any(dst > src[-1] + 1e-12):
        raise InvalidArgumentError(f"Positions must lie within [{src[0]}, {src[-1]}].")
    dst = np.clip(dst, src[0], src[-1])
    idx = np.clip(np.searchsorted(src, dst, side="right") - 1, 0, src.size - 2)
    w = (dst - src[idx]) / (src[idx + 1] - src[idx])
    mat = np.zeros((dst.size, src.size))
    rows = np.arange(dst.size)
    mat[rows, idx] = 1.0 - w
    mat[rows, idx + 1] += w
    return mat


@dataclass(frozen=True, eq=False)
class FourierBc:
    """Convective condition with Biot number `bi`, air temperature and an optional imposed flux, per time level."""

    bi: float
    air: np.ndarray
    flux: Optional[np.ndarray] = None

    def __post_init__(self):
        if not self.bi > 0:
            raise InvalidArgumentError(f"Fourier boundary needs Bi > 0, got {self.bi}.")
        air = np.atleast_1d(np.asarray(self.air, dtype=float))
        object.__setattr__(self, "air", air)
        if self.flux is not None:
            flux = np.atleast_1d(np.asarray(self.flux, dtype=float))
            if flux.shape != air.shape:
                raise ShapeError(f"Flux has {flux.size} samples, air temperature {air.size}.")
            object.__setattr__(self, "flux", flux)

    @property
    def samples(self) -> int:
        return self.air.size


@dataclass(frozen=True, eq=False)
class DirichletBc:
    surface: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "surface", np.atleast_1d(np.asarray(self.surface, dtype=float)))

    @property
    def samples(self) -> int:
        return self.surface.size


BcKind = Union[FourierBc, DirichletBc]


def lumped_weights(grid: SpatialGrid) -> np.ndarray:
    """Trapezoidal quadrature weights on the physical nodes."""
    h = np.diff(grid.physical_nodes)
    w = np.zeros(grid.size)
    w[:-1] += 0.5 * h
    w[1:] += 0.5 * h
    return w


def robin_system(grid: SpatialGrid, a: float, bi_left: float, bi_right: float) -> np.ndarray:
    """Banded (3 x Nx) form of S = W + a (K + R) for `scipy.linalg.solve_banded`."""
    if not a > 0:
        raise InvalidArgumentError(f"Operator coefficient a must be positive, got {a}.")
    inv_h = 1.0 / np.diff(grid.physical_nodes)
    diag = lumped_weights(grid)
    diag[:-1] += a * inv_h
    diag[1:] += a * inv_h
    diag[0] += a * bi_left
    diag[-1] += a * bi_right
    ab = np.zeros((3, grid.size))
    ab[0, 1:] = -a * inv_h
    ab[1] = diag
    ab[2, :-1] = -a * inv_h
    return ab


def banded_to_dense(ab: np.ndarray) -> np.ndarray:
    return np.diag(ab[1]) + np.diag(ab[0, 1:], 1) + np.diag(ab[2, :-1], -1)


def robin_rhs(grid: SpatialGrid, a: float, b: np.ndarray, b_left: float, b_right: float,
              weights: Optional[np.ndarray] = None) -> np.ndarray:
    """W b - a b_left e_0 + a b_right e_N for y' = Bi_l y + b_left at x=0 and y' = -Bi_r y + b_right at x=1."""
    w = lumped_weights(grid) if weights is None else weights
    rhs = w * b
    rhs[0] -= a * b_left
    rhs[-1] += a * b_right
    return rhs


def _solve(ab: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    try:
        y = linalg.solve_banded((1, 1), ab, rhs, check_finite=False)
    except (linalg.LinAlgError, ValueError) as e:
        raise NumericalFailureError(f"Tridiagonal solve failed: {e}") from e
    if not np.all(np.isfinite(y)):
        raise NumericalFailureError("Tridiagonal solve produced non-finite values.")
    return y


def _bc_coefficient(bc: BcKind, n: int, left: bool) -> Tuple[float, float]:
    """(Biot, scalar b) for Fourier sides; (nan, surface value) for Dirichlet sides."""
    if isinstance(bc, DirichletBc):
        return float("nan"), float(bc.surface[n])
    flux = 0.0 if bc.flux is None else float(bc.flux[n])
    if left:
        return bc.bi, -bc.bi * float(bc.air[n]) - flux
    return bc.bi, bc.bi * float(bc.air[n]) + flux


def _pin_dirichlet(ab: np.ndarray, left: bool) -> None:
    if left:
        ab[1, 0], ab[0, 1] = 1.0, 0.0
    else:
        ab[1, -1], ab[2, -2] = 1.0, 0.0


def solve_transient(problem: DimensionlessProblem, bc_left: BcKind, bc_right: BcKind, dt: float,
                    grid: SpatialGrid, initial, t_start: float = 0.0) -> FieldSeries:
    """
    March u^{n+1} - a u''^{n+1} = u^n from `initial`; boundary samples index time levels,
    so both BCs carry steps + 1 samples and sample 0 belongs to the initial field.
    """
    if not dt > 0:
        raise InvalidArgumentError(f"Time step must be positive, got {dt}.")
    u = np.asarray(initial, dtype=float).copy()
    if u.shape != (grid.size,):
        raise ShapeError(f"Initial field has shape {u.shape}, grid has {grid.size} nodes.")
    if bc_left.samples != bc_right.samples:
        raise ShapeError(f"Boundary samples differ: {bc_left.samples} left, {bc_right.samples} right.")
    steps = bc_left.samples - 1
    if steps < 1:
        raise InvalidArgumentError("A transient run needs boundary samples for at least one step.")

    a = dt * problem.Fo
    bi_l = bc_left.bi if isinstance(bc_left, FourierBc) else 0.0
    bi_r = bc_right.bi if isinstance(bc_right, FourierBc) else 0.0
    ab = robin_system(grid, a, bi_l, bi_r)
    if isinstance(bc_left, DirichletBc):
        _pin_dirichlet(ab, left=True)
    if isinstance(bc_right, DirichletBc):
        _pin_dirichlet(ab, left=False)
    weights = lumped_weights(grid)

    profiles = np.empty((steps + 1, grid.size))
    profiles[0] = u
    for n in range(1, steps + 1):
        _, b_left = _bc_coefficient(bc_left, n, left=True)
        _, b_right = _bc_coefficient(bc_right, n, left=False)
        rhs = robin_rhs(grid, a,
                        u,
                        0.0 if isinstance(bc_left, DirichletBc) else b_left,
                        0.0 if isinstance(bc_right, DirichletBc) else b_right,
                        weights)
        if isinstance(bc_left, DirichletBc):
            rhs[0] = b_left
        if isinstance(bc_right, DirichletBc):
            rhs[-1] = b_right
        u = _solve(ab, rhs)
        profiles[n] = u
    times = t_start + dt * np.arange(steps + 1)
    logger.debug(f"Transient run: {steps} steps of dt={dt:g} on {grid.size} nodes")
    return FieldSeries(times, profiles, grid)


def solve_bvp(instance: BvpInstance, Bi_in: float, Bi_out: float, grid: SpatialGrid) -> np.ndarray:
    """y - a y'' = b with y' = Bi_out y + b_out at x=0 and y' = -Bi_in y + b_in at x=1."""
    if instance.b.shape != (grid.size,):
        raise ShapeError(f"Source has shape {instance.b.shape}, grid has {grid.size} nodes.")
    ab = robin_system(grid, instance.a, Bi_out, Bi_in)
    rhs = robin_rhs(grid, instance.a, instance.b, instance.b_out, instance.b_in)
    return _solve(ab, rhs)


def bvp_residual(instance: BvpInstance, Bi_in: float, Bi_out: float, grid: SpatialGrid, y) -> float:
    """Relative residual of the discrete equations for a candidate solution y."""
    ab = robin_system(grid, instance.a, Bi_out, Bi_in)
    rhs = robin_rhs(grid, instance.a, instance.b, instance.b_out, instance.b_in)
    r = banded_to_dense(ab) @ np.asarray(y, dtype=float) - rhs
    scale = max(np.linalg.norm(rhs), np.linalg.norm(banded_to_dense(ab), ord=np.inf) * np.linalg.norm(y))
    return float(np.linalg.norm(r) / scale) if scale > 0 else float(np.linalg.norm(r))


def qin_flux(T_surface, u_w, u_g, f_w: float = 0.2, f_g: float = 0.2,
             eps_w: float = 0.9, eps_g: float = 0.9):
    """Long-wave exchange of the inside surface with the surrounding walls and the floor [W/m2].

    Positive when the surface is hotter.
    """
    T = np.asarray(T_surface, dtype=float)
    u_w = np.asarray(u_w, dtype=float)
    u_g = np.asarray(u_g, dtype=float)
    if np.any(T <= 0) or np.any(u_w <= 0) or np.any(u_g <= 0):
        raise InvalidArgumentError("Radiative exchange needs absolute temperatures in Kelvin.")
    q = (f_w * eps_w * STEFAN_BOLTZMANN * 4.0 * (T ** 4 - u_w ** 4)
         + f_g * eps_g * STEFAN_BOLTZMANN * (T ** 4 - u_g ** 4))
    return float(q) if q.ndim == 0 else q


def solve_model_error(problem: DimensionlessProblem, wall: WallLayer, qin, dt: float,
                      grid: SpatialGrid) -> FieldSeries:
    """
    Error field e [K] left by neglecting the inside radiative flux:
    e' = Bi_out e at x=0, e' = -Bi_in e - q_in L/k at x=1, e = 0 initially.
    """
    qin = np.atleast_1d(np.asarray(qin, dtype=float))
    zeros = np.zeros_like(qin)
    left = FourierBc(problem.Bi_out, zeros)
    right = FourierBc(problem.Bi_in, zeros, flux=-qin * wall.L / wall.k)
    series = solve_transient(problem, left, right, dt, grid, np.zeros(grid.size))
    logger.info(f"Model error: max |e| = {np.abs(series.profiles).max():.4f} K over {series.steps} steps")
    return series
