"""
Separated parametric solution of the per-step boundary value problem.

    y(x; b_in, b_out, zbar_1..zbar_N) ~ sum_m X_m(x) E_m(b_in) F_m(b_out) prod_j G_m^j(zbar_j)

Offline, `build` adds one functional product at a time (enrichment); each product
is found by alternating directions on the Galerkin form, every parameter factor
being tabulated on a uniform grid of its domain. Online, `evaluate` reads the
tables by interpolation and `simulate` marches a whole time series with them.

The spatial operator is the one of `fdm.solve_bvp`, so the PGD error measured
against that solver is free of discretization error.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator
from scipy import linalg

from .bases import ApproximationBasis, BasisFile, ClampStats, basis_from_file, basis_to_file, normalize, project, quantize
from .errors import InvalidArgumentError, ModelFormatError, NumericalFailureError, ShapeError
from .fdm import FieldSeries, banded_to_dense, lumped_weights, robin_system
from .grid import SpatialGrid
from .physics import BoundarySignals, DimensionlessProblem, boundary_coefficients
from .serialization import ArrayPayload, atomic_write_text

logger = logging.getLogger(__name__)

MODEL_FORMAT_VERSION = 1

# tolerance when comparing a value to a grid node, in units of the grid step
_NODE_SNAP = 1e-9
# joint spatial re-solve is skipped beyond this condition number of the parameter Gram matrix
_GRAM_COND_LIMIT = 1e10


@dataclass(frozen=True)
class ParameterDomain:
    """
    Uniform grid lo, lo + delta, ... on [lo, hi]. A domain with lo == hi is collapsed
    to a single node; it pins a parameter that does not vary.
    """

    lo: float
    hi: float
    delta: float

    def __post_init__(self):
        if not self.delta > 0:
            raise InvalidArgumentError(f"Parameter grid step must be positive, got {self.delta}.")
        if self.hi < self.lo:
            raise InvalidArgumentError(f"Parameter domain needs lo <= hi, got [{self.lo}, {self.hi}].")
        if self.hi > self.lo and self.count < 2:
            raise InvalidArgumentError(
                f"Step {self.delta} is wider than the domain [{self.lo}, {self.hi}]; it needs at least two nodes."
            )

    @classmethod
    def fixed(cls, value: float) -> "ParameterDomain":
        return cls(float(value), float(value), 1.0)

    @property
    def collapsed(self) -> bool:
        return self.hi == self.lo

    @property
    def count(self) -> int:
        if self.collapsed:
            return 1
        return int(math.floor((self.hi - self.lo) / self.delta + _NODE_SNAP)) + 1

    @property
    def nodes(self) -> np.ndarray:
        return self.lo + self.delta * np.arange(self.count)

    @property
    def weights(self) -> np.ndarray:
        """Trapezoidal weights; a collapsed domain carries weight 1."""
        if self.collapsed:
            return np.ones(1)
        w = np.full(self.count, self.delta)
        w[0] = w[-1] = 0.5 * self.delta
        return w

    def locate(self, value: float, nearest: bool = False) -> Tuple[int, float, bool]:
        """(left node index, weight of the right node, clamped?) for piecewise-linear reads."""
        if self.collapsed:
            return 0, 0.0, abs(value - self.lo) > _NODE_SNAP * max(1.0, abs(self.lo))
        pos = (value - self.lo) / self.delta
        last = self.count - 1
        clamped = pos < -_NODE_SNAP or pos > last + _NODE_SNAP
        pos = min(max(pos, 0.0), float(last))
        if nearest or abs(pos - round(pos)) < _NODE_SNAP:
            pos = float(round(pos))
        idx = min(int(math.floor(pos)), last - 1)
        return idx, pos - idx, clamped


@dataclass(frozen=True)
class PgdDomains:
    b_in: ParameterDomain
    b_out: ParameterDomain
    zeta: Tuple[ParameterDomain, ...]

    def __post_init__(self):
        object.__setattr__(self, "zeta", tuple(self.zeta))

    @property
    def N(self) -> int:
        return len(self.zeta)

    @property
    def all(self) -> List[ParameterDomain]:
        return [self.b_in, self.b_out, *self.zeta]

    @property
    def names(self) -> List[str]:
        return ["b_in", "b_out"] + [f"zeta_{j + 1}" for j in range(self.N)]

    @property
    def dzeta(self) -> Optional[float]:
        steps = [d.delta for d in self.zeta if not d.collapsed]
        return steps[0] if steps else None


class StoppingCriteria(BaseModel):
    model_config = ConfigDict(frozen=True)

    eps_fixed_point: float = Field(1e-6, gt=0, lt=1)
    eps_enrichment: float = Field(1e-8, gt=0, lt=1)
    max_fixed_point_iters: int = Field(100, ge=1)
    max_modes: int = Field(60, ge=1)
    project_modes: bool = Field(True, description="re-solve every spatial mode jointly after each enrichment")


class BuildMetadata(BaseModel):
    seed: int
    criteria: StoppingCriteria
    iterations: List[int] = Field(default_factory=list)
    nonconverged_modes: List[int] = Field(default_factory=list)
    amplitudes: List[float] = Field(default_factory=list)
    stop_reason: str = ""


@dataclass(frozen=True, eq=False)
class PgdModel:
    """
    Tabulated separated solution. `X` is (M x Nx); `factors[d]` is (M x n_d) for the
    parameter dimensions in `domains.all` order (b_in, b_out, zbar_1..zbar_N).
    """

    grid: SpatialGrid
    a: float
    Bi_in: float
    Bi_out: float
    domains: PgdDomains
    X: np.ndarray
    factors: Tuple[np.ndarray, ...]
    basis: ApproximationBasis
    metadata: BuildMetadata

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.X, dtype=float))
        if X.shape[1] != self.grid.size or X.shape[0] < 1:
            raise ShapeError(f"Spatial factors have shape {X.shape}, grid has {self.grid.size} nodes.")
        object.__setattr__(self, "X", X)
        factors = tuple(np.atleast_2d(np.asarray(f, dtype=float)) for f in self.factors)
        if len(factors) != self.domains.N + 2:
            raise ShapeError(f"{len(factors)} parameter factors for {self.domains.N + 2} dimensions.")
        for name, dom, fac in zip(self.domains.names, self.domains.all, factors):
            if fac.shape != (X.shape[0], dom.count):
                raise ShapeError(f"Factor '{name}' has shape {fac.shape}, expected ({X.shape[0]}, {dom.count}).")
        object.__setattr__(self, "factors", factors)
        if self.basis.N != self.domains.N:
            raise ShapeError(f"Basis has {self.basis.N} modes but the model carries {self.domains.N} coefficients.")
        if self.basis.ranges is None:
            raise InvalidArgumentError("The model basis needs coefficient ranges.")

    @property
    def M(self) -> int:
        return self.X.shape[0]

    @property
    def N(self) -> int:
        return self.domains.N


def default_domains(b_in_samples, b_out_samples, N: int, dzeta: float,
                    delta_b_in: float = 1e-3, delta_b_out: float = 1e-4, margin: float = 0.1) -> PgdDomains:
    """Boundary-scalar domains from signal extrema widened by `margin` of their span (at least one step)."""

    def widened(samples, delta: float) -> ParameterDomain:
        samples = np.asarray(samples, dtype=float)
        lo, hi = float(samples.min()), float(samples.max())
        pad = max(margin * (hi - lo), delta)
        return ParameterDomain(lo - pad, hi + pad, delta)

    if not 0.0 < dzeta <= 1.0:
        raise InvalidArgumentError(f"Coefficient grid step must lie in (0, 1], got {dzeta}.")
    return PgdDomains(
        b_in=widened(b_in_samples, delta_b_in),
        b_out=widened(b_out_samples, delta_b_out),
        zeta=tuple(ParameterDomain(0.0, 1.0, dzeta) for _ in range(N)),
    )


@dataclass
class _SourceTerm:
    """phi(x) times prod_d h_d(p_d); `linear_dim` is the only dimension where h is not constant."""

    phi: np.ndarray
    linear_dim: Optional[int]


def _source_terms(basis: ApproximationBasis, grid: SpatialGrid, a: float) -> List[_SourceTerm]:
    """Right-hand side W b - a b_out e_0 + a b_in e_N with b = sum_j Psi_j (lo_j + span_j zbar_j)."""
    w = lumped_weights(grid)
    ranges = basis.ranges
    terms = [_SourceTerm(w * (basis.matrix @ ranges.lo), None)]
    e_in = np.zeros(grid.size)
    e_in[-1] = a
    e_out = np.zeros(grid.size)
    e_out[0] = -a
    terms.append(_SourceTerm(e_in, 0))
    terms.append(_SourceTerm(e_out, 1))
    for j in range(basis.N):
        terms.append(_SourceTerm(ranges.span[j] * w * basis.matrix[:, j], 2 + j))
    return terms


def _unit(vec: np.ndarray, weights: np.ndarray) -> Tuple[np.ndarray, float]:
    norm = math.sqrt(float(np.dot(weights, vec * vec)))
    if norm == 0.0:
        return vec, 0.0
    return vec / norm, norm


class _Moments:
    """Weighted inner products of the current parameter factors, refreshed one dimension at a time."""

    def __init__(self, P, Pk, nodes, weights):
        self.nodes = nodes
        self.weights = weights
        self.Pk = Pk
        D = len(P)
        self.pp = np.zeros(D)
        self.one = np.zeros(D)
        self.lin = np.zeros(D)
        self.kp = [np.zeros(0)] * D
        for d in range(D):
            self.refresh(d, P[d])

    def refresh(self, d: int, P_d: np.ndarray) -> None:
        wp = self.weights[d] * P_d
        self.pp[d] = float(np.dot(wp, P_d))
        self.one[d] = float(wp.sum())
        self.lin[d] = float(np.dot(wp, self.nodes[d]))
        self.kp[d] = self.Pk[d] @ wp

    def h(self, term: _SourceTerm, d: int) -> float:
        return self.lin[d] if term.linear_dim == d else self.one[d]


def _solve_space(chol, mom: _Moments, terms: List[_SourceTerm], SXk: np.ndarray) -> np.ndarray:
    D = mom.pp.size
    rhs = np.zeros(SXk.shape[1])
    for t in terms:
        rhs += math.prod(mom.h(t, d) for d in range(D)) * t.phi
    if SXk.shape[0]:
        kp = np.ones(SXk.shape[0])
        for d in range(D):
            kp *= mom.kp[d]
        rhs -= kp @ SXk
    return linalg.cho_solve(chol, rhs) / float(np.prod(mom.pp))


def _solve_parameter(e: int, mom: _Moments, terms: List[_SourceTerm], xphi: np.ndarray,
                     xsx: float, xsk: np.ndarray) -> np.ndarray:
    """Pointwise update of the factor of dimension e with every other factor frozen."""
    others = [d for d in range(mom.pp.size) if d != e]
    constant = 0.0
    slope = 0.0
    for s, t in enumerate(terms):
        coef = xphi[s] * math.prod(mom.h(t, d) for d in others)
        if t.linear_dim == e:
            slope += coef
        else:
            constant += coef
    num = constant + slope * mom.nodes[e]
    if xsk.size:
        kp = xsk.copy()
        for d in others:
            kp *= mom.kp[d]
        num = num - kp @ mom.Pk[e]
    den = xsx * math.prod(mom.pp[d] for d in others)
    if den == 0.0:
        return np.zeros_like(mom.nodes[e])
    return num / den


def _parameter_gram(P_modes: List[List[np.ndarray]], weights) -> np.ndarray:
    """G_ik = prod_d <P_i,d, P_k,d> over the current modes."""
    G = np.ones((len(P_modes[0]), len(P_modes[0])))
    for P_d, w in zip(P_modes, weights):
        P_d = np.asarray(P_d)
        G *= (P_d * w) @ P_d.T
    return G


def _solution_norm(X_modes: List[np.ndarray], G: np.ndarray) -> float:
    Xm = np.asarray(X_modes)
    return math.sqrt(max(float(np.sum((Xm @ Xm.T) * G)), 0.0))


def _project_space(chol, P_modes: List[List[np.ndarray]], nodes, weights, terms: List[_SourceTerm],
                   G: np.ndarray) -> Optional[np.ndarray]:
    """Spatial modes re-solved jointly with every parameter factor frozen; None when G is near singular."""
    if np.linalg.cond(G) > _GRAM_COND_LIMIT:
        return None
    F = np.zeros((G.shape[0], terms[0].phi.size))
    for t in terms:
        coeff = np.ones(G.shape[0])
        for d, (P_d, w) in enumerate(zip(P_modes, weights)):
            h = nodes[d] if t.linear_dim == d else np.ones_like(nodes[d])
            coeff *= np.asarray(P_d) @ (w * h)
        F += np.outer(coeff, t.phi)
    try:
        gram = linalg.cho_factor(G)
    except linalg.LinAlgError:
        return None
    return linalg.cho_solve(gram, linalg.cho_solve(chol, F.T).T)


def build(a: float, Bi_in: float, Bi_out: float, basis: ApproximationBasis, domains: PgdDomains,
          criteria: Optional[StoppingCriteria] = None, seed: int = 42) -> PgdModel:
    """
    Greedy enrichment with alternating-direction fixed points; deterministic for a given seed.
    Enrichment stops once the newest mode is below `eps_enrichment` of the accumulated solution.
    """
    criteria = criteria or StoppingCriteria()
    if basis.ranges is None:
        raise InvalidArgumentError("Building a model needs a basis with coefficient ranges.")
    if basis.N != domains.N:
        raise ShapeError(f"Basis has {basis.N} modes, domains cover {domains.N} coefficients.")
    grid = basis.grid
    doms = domains.all
    D = len(doms)
    nodes = [d.nodes for d in doms]
    weights = [d.weights for d in doms]
    S = banded_to_dense(robin_system(grid, a, Bi_out, Bi_in))
    try:
        chol = linalg.cho_factor(S)
    except linalg.LinAlgError as e:
        raise NumericalFailureError(f"Spatial operator is not positive definite: {e}") from e
    terms = _source_terms(basis, grid, a)

    rng = np.random.default_rng(seed)
    metadata = BuildMetadata(seed=seed, criteria=criteria)
    X_modes: List[np.ndarray] = []
    SX_modes: List[np.ndarray] = []
    P_modes: List[List[np.ndarray]] = [[] for _ in range(D)]
    accumulated = 0.0

    logger.info(f"Building PGD model: N={basis.N} ({basis.kind.value}), "
                f"nodes per parameter {[d.count for d in doms]}")

    while len(X_modes) < criteria.max_modes:
        m = len(X_modes)
        P = [_unit(rng.uniform(0.0, 1.0, d.count), w)[0] for d, w in zip(doms, weights)]
        Pk = [np.array(P_modes[d]) if m else np.zeros((0, doms[d].count)) for d in range(D)]
        SXk = np.array(SX_modes) if m else np.zeros((0, grid.size))
        Xk = np.array(X_modes) if m else np.zeros((0, grid.size))
        mom = _Moments(P, Pk, nodes, weights)

        X_prev = None
        converged = False
        degenerate = False
        iters = 0
        for iters in range(1, criteria.max_fixed_point_iters + 1):
            X = _solve_space(chol, mom, terms, SXk)
            if not np.any(X):
                degenerate = True
                break
            if accumulated > 0.0 and np.linalg.norm(X) < criteria.eps_enrichment * accumulated:
                # negligible correction
                converged = True
                break
            SX = S @ X
            xphi = np.array([float(X @ t.phi) for t in terms])
            xsx = float(X @ SX)
            xsk = Xk @ SX
            for e in range(D):
                P_new, norm = _unit(_solve_parameter(e, mom, terms, xphi, xsx, xsk), weights[e])
                if norm == 0.0:
                    degenerate = True
                    break
                if np.dot(weights[e], P_new * P[e]) < 0:
                    P_new = -P_new
                P[e] = P_new
                mom.refresh(e, P_new)
            if degenerate:
                break
            if X_prev is not None:
                change = np.linalg.norm(X - X_prev) / np.linalg.norm(X)
                logger.debug(f"mode {m + 1} iteration {iters}: relative change {change:.3e}")
                if change < criteria.eps_fixed_point:
                    converged = True
                    break
            X_prev = X

        X = np.zeros(grid.size) if degenerate else _solve_space(chol, mom, terms, SXk)
        if not np.all(np.isfinite(X)):
            raise NumericalFailureError(f"Mode {m + 1} produced non-finite values.")
        amplitude = float(np.linalg.norm(X))

        if amplitude == 0.0:
            if m == 0:
                # homogeneous problem: the solution is the single zero mode
                X_modes.append(np.zeros(grid.size))
                for d in range(D):
                    P_modes[d].append(np.ones(doms[d].count))
                metadata.iterations.append(iters)
                metadata.amplitudes.append(0.0)
            metadata.stop_reason = "zero-amplitude mode"
            break

        if not converged:
            metadata.nonconverged_modes.append(m + 1)
            logger.warning(f"Mode {m + 1}: fixed point not converged after {iters} iterations; keeping it")
        X_modes.append(X)
        for d in range(D):
            P_modes[d].append(P[d])
        metadata.iterations.append(iters)

        G = _parameter_gram(P_modes, weights)
        if criteria.project_modes and m > 0:
            projected = _project_space(chol, P_modes, nodes, weights, terms, G)
            if projected is None:
                logger.debug(f"mode {m + 1}: parameter Gram matrix near singular, projection skipped")
            else:
                X_modes = list(projected)
        SX_modes = [S @ x for x in X_modes]
        accumulated = _solution_norm(X_modes, G)

        relative = amplitude / accumulated if accumulated > 0.0 else 1.0
        metadata.amplitudes.append(relative)
        logger.debug(f"Accepted mode {m + 1}: relative amplitude {relative:.3e} after {iters} iterations")
        if relative < criteria.eps_enrichment:
            metadata.stop_reason = "enrichment tolerance reached"
            break
    else:
        metadata.stop_reason = "mode cap reached"
        logger.warning(f"PGD enrichment hit the cap of {criteria.max_modes} modes")

    model = PgdModel(
        grid=grid, a=a, Bi_in=Bi_in, Bi_out=Bi_out, domains=domains,
        X=np.array(X_modes), factors=tuple(np.array(P_modes[d]) for d in range(D)),
        basis=basis, metadata=metadata,
    )
    logger.info(f"PGD model built: M={model.M} ({metadata.stop_reason})")
    return model


def evaluate(model: PgdModel, b_in: float, b_out: float, zbar: Sequence[float],
             nearest: bool = False, stats: Optional[ClampStats] = None) -> np.ndarray:
    """Field on the model grid read from the factor tables."""
    zbar = np.asarray(zbar, dtype=float)
    if zbar.shape != (model.N,):
        raise ShapeError(f"{zbar.size} normalized coefficients for a model with N={model.N}.")
    values = [b_in, b_out, *zbar]
    coeff = np.ones(model.M)
    for name, dom, fac, v in zip(model.domains.names, model.domains.all, model.factors, values):
        idx, w, clamped = dom.locate(float(v), nearest=nearest)
        if clamped and stats is not None:
            stats.record(name)
        if dom.collapsed:
            coeff *= fac[:, 0]
        elif w == 0.0:
            coeff *= fac[:, idx]
        else:
            coeff *= (1.0 - w) * fac[:, idx] + w * fac[:, idx + 1]
    if stats is not None:
        stats.evaluations += 1
    return coeff @ model.X


def simulate(model: PgdModel, problem: DimensionlessProblem, signals: BoundarySignals, dt: float,
             initial, steps: Optional[int] = None, basis: Optional[ApproximationBasis] = None,
             nearest: bool = False, stats: Optional[ClampStats] = None) -> FieldSeries:
    """Online time marching: project, normalize, quantize and read the tables at every step."""
    basis = basis or model.basis
    if basis.N != model.N:
        raise ShapeError(f"Basis has {basis.N} modes, model expects {model.N}.")
    if not basis.grid.same_as(model.grid):
        raise ShapeError("Basis and model live on different grids.")
    if basis.ranges is None:
        raise InvalidArgumentError("Simulation needs a basis with coefficient ranges.")
    if not math.isclose(dt * problem.Fo, model.a, rel_tol=1e-12):
        raise InvalidArgumentError(f"Model was built for a = {model.a:g}, this run uses dt*Fo = {dt * problem.Fo:g}.")
    if not signals.dimensionless:
        raise InvalidArgumentError("simulate() expects dimensionless signals.")
    steps = signals.steps if steps is None else steps
    if steps < 1 or steps > signals.steps:
        raise InvalidArgumentError(f"Cannot run {steps} steps on {signals.steps} signal intervals.")
    u = np.asarray(initial, dtype=float)
    if u.shape != (model.grid.size,):
        raise ShapeError(f"Initial field has shape {u.shape}, model grid has {model.grid.size} nodes.")

    stats = stats if stats is not None else ClampStats()
    b_in, b_out = boundary_coefficients(problem, signals.u_out, signals.u_in, signals.q)
    dzeta = model.domains.dzeta
    profiles = np.empty((steps + 1, model.grid.size))
    profiles[0] = u
    for n in range(1, steps + 1):
        zbar = normalize(project(u, basis), basis.ranges, stats)
        if dzeta is not None:
            zbar = quantize(zbar, dzeta)
        u = evaluate(model, float(b_in[n]), float(b_out[n]), zbar, nearest=nearest, stats=stats)
        profiles[n] = u
    if stats.clamped:
        logger.warning(f"{stats.clamped} parameter values clamped over {stats.evaluations} evaluations: "
                       f"{stats.by_parameter}")
    return FieldSeries(signals.times[:steps + 1], profiles, model.grid)


class DomainSpec(BaseModel):
    lo: float
    hi: float
    delta: float


class ModelFile(BaseModel):
    format_version: int
    a: float
    Bi_in: float
    Bi_out: float
    grid: dict
    b_in: DomainSpec
    b_out: DomainSpec
    zeta: List[DomainSpec]
    X: ArrayPayload
    factors: List[ArrayPayload]
    basis: BasisFile
    metadata: BuildMetadata

    @field_validator("format_version")
    @classmethod
    def _known_version(cls, v: int) -> int:
        if v != MODEL_FORMAT_VERSION:
            raise ValueError(f"model format version {v} is not supported (expected {MODEL_FORMAT_VERSION})")
        return v


def _domain_spec(d: ParameterDomain) -> DomainSpec:
    return DomainSpec(lo=d.lo, hi=d.hi, delta=d.delta)


def _domain(spec: DomainSpec) -> ParameterDomain:
    return ParameterDomain(spec.lo, spec.hi, spec.delta)


def model_to_json(model: PgdModel) -> str:
    doc = ModelFile(
        format_version=MODEL_FORMAT_VERSION,
        a=model.a, Bi_in=model.Bi_in, Bi_out=model.Bi_out,
        grid=model.grid.to_dict(),
        b_in=_domain_spec(model.domains.b_in),
        b_out=_domain_spec(model.domains.b_out),
        zeta=[_domain_spec(d) for d in model.domains.zeta],
        X=ArrayPayload.encode(model.X),
        factors=[ArrayPayload.encode(f) for f in model.factors],
        basis=basis_to_file(model.basis),
        metadata=model.metadata,
    )
    return doc.model_dump_json(indent=2)


def save(model: PgdModel, path) -> Path:
    path = atomic_write_text(path, model_to_json(model))
    logger.info(f"Saved PGD model (M={model.M}, N={model.N}) to {path}")
    return path


def load(path) -> PgdModel:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
        doc = ModelFile.model_validate(raw)
    except (OSError, json.JSONDecodeError, ValidationError) as e:
        raise ModelFormatError(f"Cannot read model file {path}: {e}") from e
    try:
        return PgdModel(
            grid=SpatialGrid.from_dict(doc.grid),
            a=doc.a, Bi_in=doc.Bi_in, Bi_out=doc.Bi_out,
            domains=PgdDomains(_domain(doc.b_in), _domain(doc.b_out), tuple(_domain(z) for z in doc.zeta)),
            X=doc.X.decode(),
            factors=tuple(f.decode() for f in doc.factors),
            basis=basis_from_file(doc.basis),
            metadata=doc.metadata,
        )
    except ModelFormatError:
        raise
    except (KeyError, ValueError) as e:
        raise ModelFormatError(f"Inconsistent model file {path}: {e}") from e
