"""
Wall-layer problem definition, the dimensionless map and the per-step
semi-discretization of the heat equation into the parametric boundary value problem.

Conventions:
    x = 0 is the outside face (Fourier condition with air u_out and radiative flux q),
    x = 1 the inside face (Fourier condition with air u_in).
    Temperatures are Kelvin; the dimensionless temperature is u/u0 - 1.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from .errors import InvalidArgumentError, ShapeError

logger = logging.getLogger(__name__)

KELVIN_OFFSET = 273.15


class WallLayer(BaseModel):
    """Single homogeneous layer: thickness L [m], conductivity k [W/m/K], volumetric capacity c [J/m3/K]."""
    model_config = ConfigDict(frozen=True)

    L: float = Field(..., gt=0)
    k: float = Field(..., gt=0)
    c: float = Field(..., gt=0)


class ConvectiveEnvironment(BaseModel):
    model_config = ConfigDict(frozen=True)

    h_in: float = Field(..., gt=0)
    h_out: float = Field(..., gt=0)
    u0: float = Field(..., gt=0, description="Initial uniform temperature [K]")


class DimensionlessProblem(BaseModel):
    model_config = ConfigDict(frozen=True)

    Fo: float = 1.0
    Bi_in: float = Field(..., gt=0)
    Bi_out: float = Field(..., gt=0)
    t_ref: float = Field(..., gt=0)
    Gamma: float = Field(..., gt=0)

    @field_validator("Fo")
    @classmethod
    def _unit_fourier(cls, v: float) -> float:
        if v != 1.0:
            raise ValueError("the reference time is chosen so that Fo = 1 exactly")
        return v


@dataclass(frozen=True, eq=False)
class BoundarySignals:
    """
    Air temperatures and outside net radiative flux sampled on one time grid.

    Physical signals carry seconds, Kelvin and W/m2; after `dimensionless_signals`
    every array is dimensionless and `dimensionless` is True.
    """

    times: np.ndarray
    u_out: np.ndarray
    u_in: np.ndarray
    q: np.ndarray
    dimensionless: bool = False

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        if times.ndim != 1 or times.size < 1:
            raise ShapeError("Signals need a one-dimensional time grid.")
        if np.any(np.diff(times) <= 0):
            raise InvalidArgumentError("Signal time grid must be strictly increasing.")
        object.__setattr__(self, "times", times)
        for name in ("u_out", "u_in", "q"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != times.shape:
                raise ShapeError(f"Signal '{name}' has {arr.size} samples, time grid has {times.size}.")
            object.__setattr__(self, name, arr)

    @property
    def steps(self) -> int:
        return self.times.size - 1

    def window(self, start: int, stop: int) -> "BoundarySignals":
        return replace(self, times=self.times[start:stop], u_out=self.u_out[start:stop],
                       u_in=self.u_in[start:stop], q=self.q[start:stop])


@dataclass(frozen=True, eq=False)
class BvpInstance:
    """One implicit step: y - a*y'' = b with y' = Bi_out*y + b_out at x=0 and y' = -Bi_in*y + b_in at x=1."""

    a: float
    b: np.ndarray
    b_in: float
    b_out: float

    def __post_init__(self):
        if not self.a > 0:
            raise InvalidArgumentError(f"BVP coefficient a must be positive, got {self.a}.")
        object.__setattr__(self, "b", np.asarray(self.b, dtype=float))


def nondimensionalize(wall: WallLayer, env: ConvectiveEnvironment, tau: float) -> DimensionlessProblem:
    """Biot numbers, reference time c*L^2/k and dimensionless horizon tau/t_ref."""
    if not tau > 0:
        raise InvalidArgumentError(f"Horizon must be positive, got {tau}.")
    t_ref = wall.c * wall.L ** 2 / wall.k
    try:
        problem = DimensionlessProblem(
            Fo=1.0,
            Bi_in=env.h_in * wall.L / wall.k,
            Bi_out=env.h_out * wall.L / wall.k,
            t_ref=t_ref,
            Gamma=tau / t_ref,
        )
    except ValidationError as e:
        raise InvalidArgumentError(str(e)) from e
    logger.debug(f"Dimensionless problem: Bi_in={problem.Bi_in:.4f}, Bi_out={problem.Bi_out:.4f}, "
                 f"t_ref={problem.t_ref:.4e} s, Gamma={problem.Gamma:.4f}")
    return problem


def to_dimensionless_temperature(v, u0: float):
    return np.asarray(v, dtype=float) / u0 - 1.0


def redimensionalize(u_dimless, u0: float) -> np.ndarray:
    """Inverse of the temperature map: v -> u0*(v + 1)."""
    return u0 * (np.asarray(u_dimless, dtype=float) + 1.0)


def dimensionless_signals(signals: BoundarySignals, env: ConvectiveEnvironment, wall: WallLayer) -> BoundarySignals:
    if signals.dimensionless:
        raise InvalidArgumentError("Signals are already dimensionless.")
    t_ref = wall.c * wall.L ** 2 / wall.k
    return BoundarySignals(
        times=signals.times / t_ref,
        u_out=to_dimensionless_temperature(signals.u_out, env.u0),
        u_in=to_dimensionless_temperature(signals.u_in, env.u0),
        q=signals.q * wall.L / (wall.k * env.u0),
        dimensionless=True,
    )


def boundary_coefficients(problem: DimensionlessProblem, u_out_n, u_in_n, q_n):
    """(b_in, b_out) for scalar or array inputs."""
    b_out = -problem.Bi_out * np.asarray(u_out_n, dtype=float) - np.asarray(q_n, dtype=float)
    b_in = problem.Bi_in * np.asarray(u_in_n, dtype=float)
    if b_out.ndim == 0:
        return float(b_in), float(b_out)
    return b_in, b_out


def semi_discretize(problem: DimensionlessProblem, prev: np.ndarray, dt: float,
                    u_out_n: float, u_in_n: float, q_n: float, n_nodes: int | None = None) -> BvpInstance:
    """Implicit-Euler step as a BVP; the boundary scalars are those of the time level being solved."""
    if not dt > 0:
        raise InvalidArgumentError(f"Time step must be positive, got {dt}.")
    prev = np.asarray(prev, dtype=float)
    if prev.ndim != 1 or (n_nodes is not None and prev.size != n_nodes):
        raise ShapeError(f"Source field has shape {prev.shape}, expected ({n_nodes},).")
    b_in, b_out = boundary_coefficients(problem, u_out_n, u_in_n, q_n)
    return BvpInstance(a=dt * problem.Fo, b=prev.copy(), b_in=b_in, b_out=b_out)
