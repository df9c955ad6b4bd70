import math

import numpy as np
import pytest

from wallpgd.errors import InvalidArgumentError
from wallpgd.grid import (GridKind, SpatialGrid, chebyshev_points, from_poly_interval, to_poly_interval,
                          uniform_grid)


def test_chebyshev_points_four_intervals():
    grid = chebyshev_points(4)
    s = math.sqrt(2.0) / 2.0
    np.testing.assert_allclose(grid.nodes, [-1.0, -s, 0.0, s, 1.0], atol=1e-15)
    assert grid.kind is GridKind.CHEBYSHEV_LOBATTO
    assert grid.nodes[2] == 0.0


def test_chebyshev_points_are_symmetric():
    for n in (5, 8, 33):
        grid = chebyshev_points(n)
        assert grid.size == n + 1
        np.testing.assert_array_equal(grid.nodes, -grid.nodes[::-1])
        assert grid.nodes[0] == -1.0 and grid.nodes[-1] == 1.0


def test_uniform_grid_and_physical_nodes():
    grid = uniform_grid(4)
    np.testing.assert_allclose(grid.nodes, [-1.0, -0.5, 0.0, 0.5, 1.0])
    np.testing.assert_allclose(grid.physical_nodes, [0.0, 0.25, 0.5, 0.75, 1.0])
    assert grid.n_intervals == 4


@pytest.mark.parametrize("n", [0, -3, 2.5])
def test_invalid_interval_counts(n):
    with pytest.raises(InvalidArgumentError):
        uniform_grid(n)
    with pytest.raises(InvalidArgumentError):
        chebyshev_points(n)


def test_interval_maps():
    assert to_poly_interval(0.0) == -1.0
    assert to_poly_interval(0.5) == 0.0
    assert from_poly_interval(1.0) == 1.0
    x = np.linspace(0.0, 1.0, 7)
    np.testing.assert_allclose(from_poly_interval(to_poly_interval(x)), x, atol=1e-15)


def test_interval_maps_reject_out_of_range():
    with pytest.raises(InvalidArgumentError):
        to_poly_interval(1.5)
    with pytest.raises(InvalidArgumentError):
        from_poly_interval([-1.2, 0.0])
    with pytest.raises(InvalidArgumentError):
        to_poly_interval(float("nan"))


def test_grid_requires_increasing_nodes():
    with pytest.raises(InvalidArgumentError):
        SpatialGrid(GridKind.UNIFORM, np.array([0.0, 0.0, 1.0]))
    with pytest.raises(InvalidArgumentError):
        SpatialGrid(GridKind.UNIFORM, np.array([0.0]))


def test_grid_dict_round_trip():
    grid = chebyshev_points(6)
    again = SpatialGrid.from_dict(grid.to_dict())
    assert again.kind is grid.kind
    assert again.same_as(grid)
    assert not again.same_as(uniform_grid(6))
