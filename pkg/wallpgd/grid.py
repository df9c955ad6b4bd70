"""Spatial grids on the polynomial interval [-1, 1] and the change of variable to [0, 1]."""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .errors import InvalidArgumentError


class GridKind(str, Enum):
    UNIFORM = "uniform"
    CHEBYSHEV_LOBATTO = "chebyshev_lobatto"


@dataclass(frozen=True, eq=False)
class SpatialGrid:
    """Ascending nodes in [-1, 1]. Physical coordinates only appear through `physical_nodes`."""

    kind: GridKind
    nodes: np.ndarray

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        if nodes.ndim != 1 or nodes.size < 2:
            raise InvalidArgumentError("A grid needs at least two nodes.")
        if np.any(np.diff(nodes) <= 0):
            raise InvalidArgumentError("Grid nodes must be strictly increasing.")
        nodes.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)

    @property
    def n_intervals(self) -> int:
        return self.nodes.size - 1

    @property
    def size(self) -> int:
        return self.nodes.size

    @property
    def physical_nodes(self) -> np.ndarray:
        return from_poly_interval(self.nodes)

    def same_as(self, other: "SpatialGrid", tol: float = 1e-12) -> bool:
        return self.size == other.size and bool(np.allclose(self.nodes, other.nodes, rtol=0.0, atol=tol))

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "nodes": self.nodes.tolist()}

    @classmethod
    def from_dict(cls, data: dict) -> "SpatialGrid":
        return cls(kind=GridKind(data["kind"]), nodes=np.asarray(data["nodes"], dtype=float))


def _check_intervals(n: int) -> None:
    if int(n) != n or n < 1:
        raise InvalidArgumentError(f"Number of intervals must be a positive integer, got {n}.")


def chebyshev_points(n: int) -> SpatialGrid:
    """Chebyshev points of the second kind x_j = cos(j*pi/n), j = 0..n, stored ascending."""
    _check_intervals(n)
    j = np.arange(n + 1)
    nodes = np.cos(j * np.pi / n)[::-1].copy()
    # pin the exact values cos() only reaches approximately
    nodes[0], nodes[-1] = -1.0, 1.0
    if n % 2 == 0:
        nodes[n // 2] = 0.0
    # enforce exact symmetry about 0
    nodes = 0.5 * (nodes - nodes[::-1])
    return SpatialGrid(GridKind.CHEBYSHEV_LOBATTO, nodes)


def uniform_grid(n: int) -> SpatialGrid:
    """n + 1 equispaced nodes on [-1, 1]."""
    _check_intervals(n)
    return SpatialGrid(GridKind.UNIFORM, np.linspace(-1.0, 1.0, n + 1))


def to_poly_interval(x):
    """Map physical [0, 1] to [-1, 1]."""
    arr = np.asarray(x, dtype=float)
    if np.any(arr < 0.0) or np.any(arr > 1.0) or np.any(np.isnan(arr)):
        raise InvalidArgumentError("Coordinates must lie in [0, 1].")
    out = 2.0 * arr - 1.0
    return float(out) if out.ndim == 0 else out


def from_poly_interval(x):
    """Map [-1, 1] back to physical [0, 1]."""
    arr = np.asarray(x, dtype=float)
    if np.any(arr < -1.0) or np.any(arr > 1.0) or np.any(np.isnan(arr)):
        raise InvalidArgumentError("Coordinates must lie in [-1, 1].")
    out = (arr + 1.0) / 2.0
    return float(out) if out.ndim == 0 else out
