import itertools
import json

import numpy as np
import pytest

from wallpgd import pgd
from wallpgd.bases import ClampStats, CoefficientRanges, chebyshev_basis, denormalize, reconstruct
from wallpgd.errors import InvalidArgumentError, ModelFormatError, ShapeError
from wallpgd.fdm import banded_to_dense, robin_system, solve_bvp
from wallpgd.grid import uniform_grid
from wallpgd.physics import BoundarySignals, BvpInstance, DimensionlessProblem
from wallpgd.pgd import ParameterDomain, PgdDomains, StoppingCriteria

A, BI_IN, BI_OUT = 0.01, 0.5, 1.3
TIGHT = StoppingCriteria(eps_fixed_point=1e-8, eps_enrichment=1e-10, max_fixed_point_iters=200, max_modes=40)


def _domains(N=2):
    return PgdDomains(
        b_in=ParameterDomain(-0.2, 0.2, 0.1),
        b_out=ParameterDomain(-0.5, 0.5, 0.25),
        zeta=tuple(ParameterDomain(0.0, 1.0, 0.25) for _ in range(N)),
    )


@pytest.fixture
def small_model(ranged_basis):
    return pgd.build(A, BI_IN, BI_OUT, ranged_basis, _domains(), TIGHT, seed=7)


# ── parameter domains ─────────────────────────────────────────────────────────

def test_domain_nodes_and_weights():
    dom = ParameterDomain(0.0, 1.0, 0.25)
    assert dom.count == 5
    np.testing.assert_allclose(dom.nodes, [0.0, 0.25, 0.5, 0.75, 1.0])
    np.testing.assert_allclose(dom.weights, [0.125, 0.25, 0.25, 0.25, 0.125])
    assert dom.weights.sum() == pytest.approx(1.0)


def test_collapsed_domain():
    dom = ParameterDomain.fixed(0.3)
    assert dom.collapsed
    assert dom.count == 1
    np.testing.assert_array_equal(dom.weights, [1.0])
    assert dom.locate(0.3) == (0, 0.0, False)
    assert dom.locate(0.4)[2]


def test_domain_locate():
    dom = ParameterDomain(0.0, 1.0, 0.25)
    idx, w, clamped = dom.locate(0.3)
    assert (idx, clamped) == (1, False)
    assert w == pytest.approx(0.2)
    assert dom.locate(0.75) == (3, 0.0, False)
    assert dom.locate(1.0) == (3, 1.0, False)
    assert dom.locate(1.5) == (3, 1.0, True)
    assert dom.locate(-0.1) == (0, 0.0, True)
    assert dom.locate(0.3, nearest=True) == (1, 0.0, False)


def test_domain_validation():
    with pytest.raises(InvalidArgumentError):
        ParameterDomain(0.0, 1.0, 0.0)
    with pytest.raises(InvalidArgumentError):
        ParameterDomain(1.0, 0.0, 0.1)
    with pytest.raises(InvalidArgumentError):
        ParameterDomain(0.0, 0.5, 1.0)


def test_default_domains_widen_signal_extrema():
    domains = pgd.default_domains([0.0, 1.0], [-1.0, 1.0], 2, 0.5, delta_b_in=0.01, delta_b_out=0.01, margin=0.1)
    assert domains.b_in.lo == pytest.approx(-0.1) and domains.b_in.hi == pytest.approx(1.1)
    assert domains.b_out.lo == pytest.approx(-1.2) and domains.b_out.hi == pytest.approx(1.2)
    assert domains.N == 2
    assert domains.dzeta == 0.5
    assert domains.names == ["b_in", "b_out", "zeta_1", "zeta_2"]


def test_default_domains_pad_constant_signals_by_one_step():
    domains = pgd.default_domains([0.3, 0.3], [0.0, 0.0], 1, 0.1, delta_b_in=0.01, delta_b_out=0.01)
    assert domains.b_in.lo == pytest.approx(0.29)
    assert domains.b_in.hi == pytest.approx(0.31)
    assert domains.b_in.count == 3
    with pytest.raises(InvalidArgumentError):
        pgd.default_domains([0.0, 1.0], [0.0, 1.0], 1, 0.0)


# ── offline build ─────────────────────────────────────────────────────────────

def test_homogeneous_problem_gives_single_zero_mode(small_grid):
    basis = chebyshev_basis(2, small_grid).with_ranges(CoefficientRanges(np.zeros(2), np.zeros(2)))
    domains = PgdDomains(ParameterDomain.fixed(0.0), ParameterDomain.fixed(0.0),
                         tuple(ParameterDomain(0.0, 1.0, 0.5) for _ in range(2)))
    model = pgd.build(A, BI_IN, BI_OUT, basis, domains)
    assert model.M == 1
    np.testing.assert_array_equal(model.X, 0.0)
    assert model.metadata.stop_reason == "zero-amplitude mode"
    np.testing.assert_array_equal(pgd.evaluate(model, 0.0, 0.0, [0.5, 1.0]), 0.0)


def test_tables_match_direct_solves_on_grid_nodes(small_model, ranged_basis, small_grid):
    doms = small_model.domains
    points = [(3, 1, [1, 3]), (0, 4, [0, 0]), (2, 2, [4, 2]), (4, 0, [2, 4])]
    for i_in, i_out, iz in points:
        b_in, b_out = doms.b_in.nodes[i_in], doms.b_out.nodes[i_out]
        zbar = np.array([doms.zeta[j].nodes[k] for j, k in enumerate(iz)])
        source = reconstruct(ranged_basis, denormalize(zbar, ranged_basis.ranges))
        exact = solve_bvp(BvpInstance(A, source, b_in, b_out), BI_IN, BI_OUT, small_grid)
        table = pgd.evaluate(small_model, b_in, b_out, zbar)
        scale = max(np.abs(exact).max(), 1e-3)
        np.testing.assert_allclose(table, exact, rtol=0, atol=1e-5 * scale)


def test_enrichment_amplitudes_are_recorded(small_model):
    meta = small_model.metadata
    assert len(meta.amplitudes) == small_model.M
    assert meta.amplitudes[0] == pytest.approx(1.0)
    assert len(meta.iterations) == small_model.M
    assert meta.stop_reason in ("enrichment tolerance reached", "mode cap reached")


def test_small_build_stops_on_enrichment_tolerance(ranged_basis):
    model = pgd.build(A, BI_IN, BI_OUT, ranged_basis, _domains(), seed=3)
    meta = model.metadata
    assert meta.stop_reason == "enrichment tolerance reached"
    assert meta.nonconverged_modes == []
    assert model.M < meta.criteria.max_modes
    assert meta.amplitudes[-1] < meta.criteria.eps_enrichment


def _energy_error(model, basis, grid):
    """Parameter-weighted S-norm of the table error over every node of the parameter grid."""
    S = banded_to_dense(robin_system(grid, A, BI_OUT, BI_IN))
    doms = model.domains
    total = 0.0
    for i, b_in in enumerate(doms.b_in.nodes):
        for k, b_out in enumerate(doms.b_out.nodes):
            for iz in itertools.product(*(range(d.count) for d in doms.zeta)):
                zbar = np.array([doms.zeta[j].nodes[n] for j, n in enumerate(iz)])
                weight = doms.b_in.weights[i] * doms.b_out.weights[k]
                for j, n in enumerate(iz):
                    weight *= doms.zeta[j].weights[n]
                source = reconstruct(basis, denormalize(zbar, basis.ranges))
                err = pgd.evaluate(model, b_in, b_out, zbar) - solve_bvp(BvpInstance(A, source, b_in, b_out),
                                                                         BI_IN, BI_OUT, grid)
                total += weight * float(err @ S @ err)
    return total


def test_enrichment_never_increases_the_error(ranged_basis, small_grid):
    errors = []
    for cap in range(1, 7):
        criteria = StoppingCriteria(max_modes=cap)
        model = pgd.build(A, BI_IN, BI_OUT, ranged_basis, _domains(), criteria, seed=5)
        errors.append(_energy_error(model, ranged_basis, small_grid))
        if model.M < cap:
            break
    assert len(errors) > 1
    assert np.all(np.diff(errors) <= 1e-12 * errors[0])


def test_tables_match_direct_solves_between_nodes(small_model, ranged_basis, small_grid):
    rng = np.random.default_rng(21)
    doms = small_model.domains
    for _ in range(12):
        b_in = rng.uniform(doms.b_in.lo, doms.b_in.hi)
        b_out = rng.uniform(doms.b_out.lo, doms.b_out.hi)
        zbar = rng.uniform(0.0, 1.0, size=small_model.N)
        source = reconstruct(ranged_basis, denormalize(zbar, ranged_basis.ranges))
        exact = solve_bvp(BvpInstance(A, source, b_in, b_out), BI_IN, BI_OUT, small_grid)
        table = pgd.evaluate(small_model, b_in, b_out, zbar)
        scale = max(np.abs(exact).max(), 1e-3)
        np.testing.assert_allclose(table, exact, rtol=0, atol=1e-5 * scale)


def test_build_is_deterministic(ranged_basis):
    first = pgd.build(A, BI_IN, BI_OUT, ranged_basis, _domains(), seed=11)
    second = pgd.build(A, BI_IN, BI_OUT, ranged_basis, _domains(), seed=11)
    np.testing.assert_array_equal(first.X, second.X)
    for f, g in zip(first.factors, second.factors):
        np.testing.assert_array_equal(f, g)
    assert pgd.model_to_json(first) == pgd.model_to_json(second)


def test_build_validation(small_grid, ranged_basis):
    with pytest.raises(InvalidArgumentError):
        pgd.build(A, BI_IN, BI_OUT, chebyshev_basis(2, small_grid), _domains())
    with pytest.raises(ShapeError):
        pgd.build(A, BI_IN, BI_OUT, ranged_basis, _domains(N=3))


# ── online evaluation ─────────────────────────────────────────────────────────

def test_evaluate_clamps_and_counts(small_model):
    stats = ClampStats()
    inside = pgd.evaluate(small_model, 0.2, 0.0, [0.5, 0.5])
    outside = pgd.evaluate(small_model, 5.0, 0.0, [0.5, 0.5], stats=stats)
    np.testing.assert_array_equal(inside, outside)
    assert stats.evaluations == 1
    assert stats.by_parameter == {"b_in": 1}


def test_evaluate_shape_check(small_model):
    with pytest.raises(ShapeError):
        pgd.evaluate(small_model, 0.0, 0.0, [0.5])


def test_simulate_checks_step_and_units(small_model):
    problem = DimensionlessProblem(Bi_in=BI_IN, Bi_out=BI_OUT, t_ref=1.0, Gamma=1.0)
    times = A * np.arange(4)
    signals = BoundarySignals(times, np.zeros(4), np.zeros(4), np.zeros(4), dimensionless=True)
    initial = np.zeros(small_model.grid.size)
    series = pgd.simulate(small_model, problem, signals, A, initial)
    assert series.steps == 3
    assert pgd.simulate(small_model, problem, signals, A, initial, steps=2).steps == 2
    with pytest.raises(InvalidArgumentError):
        pgd.simulate(small_model, problem, signals, 2 * A, initial)
    with pytest.raises(InvalidArgumentError):
        pgd.simulate(small_model, problem, signals, A, initial, steps=4)
    with pytest.raises(ShapeError):
        pgd.simulate(small_model, problem, signals, A, np.zeros(3))
    physical = BoundarySignals(times, np.zeros(4), np.zeros(4), np.zeros(4))
    with pytest.raises(InvalidArgumentError):
        pgd.simulate(small_model, problem, physical, A, initial)


# ── files ─────────────────────────────────────────────────────────────────────

def test_model_file_round_trip(small_model, tmp_path):
    loaded = pgd.load(pgd.save(small_model, tmp_path / "model.json"))
    np.testing.assert_array_equal(loaded.X, small_model.X)
    for f, g in zip(loaded.factors, small_model.factors):
        np.testing.assert_array_equal(f, g)
    assert loaded.domains == small_model.domains
    assert loaded.metadata == small_model.metadata
    zbar = [0.25, 0.6]
    np.testing.assert_array_equal(pgd.evaluate(loaded, 0.05, -0.1, zbar),
                                  pgd.evaluate(small_model, 0.05, -0.1, zbar))


def test_model_file_version_mismatch(small_model, tmp_path):
    path = pgd.save(small_model, tmp_path / "model.json")
    doc = json.loads(path.read_text())
    doc["format_version"] = pgd.MODEL_FORMAT_VERSION + 1
    path.write_text(json.dumps(doc))
    with pytest.raises(ModelFormatError):
        pgd.load(path)


def test_model_file_missing_or_truncated(small_model, tmp_path):
    with pytest.raises(ModelFormatError):
        pgd.load(tmp_path / "absent.json")
    path = pgd.save(small_model, tmp_path / "model.json")
    path.write_text(path.read_text()[:200])
    with pytest.raises(ModelFormatError):
        pgd.load(path)
