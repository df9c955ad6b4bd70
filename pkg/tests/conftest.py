"""Shared fixtures: small grids, a short theoretical run and TOML configs sized for CI."""
from __future__ import annotations

import numpy as np
import pytest

from wallpgd.bases import CoefficientRanges, chebyshev_basis
from wallpgd.grid import uniform_grid
from wallpgd.studies import TheoreticalCaseConfig, theoretical_reference

# six hours instead of three days
SHORT_CASE = TheoreticalCaseConfig(horizon_days=0.25)

SMALL_CONFIG_TOML = """
case = "theoretical"

[theoretical]
horizon_days = 0.25

[numerics]
reference_nodes = 41
pgd_nodes = 21
"""


@pytest.fixture
def small_grid():
    return uniform_grid(20)


@pytest.fixture
def ranged_basis(small_grid):
    basis = chebyshev_basis(2, small_grid)
    return basis.with_ranges(CoefficientRanges(np.array([-0.1, -0.05]), np.array([0.1, 0.05])))


@pytest.fixture(scope="session")
def short_run():
    return theoretical_reference(SHORT_CASE, n_nodes=41)


@pytest.fixture
def small_config_path(tmp_path):
    path = tmp_path / "run.toml"
    path.write_text(SMALL_CONFIG_TOML)
    return path
