"""
wallpgd command line.

    wallpgd reference   FD reference of the configured case
    wallpgd build       approximation basis + PGD model (offline phase)
    wallpgd simulate    online replay of a model against the reference
    wallpgd sweep       grid of (basis, N, dzeta) builds, one CSV row per metric
    wallpgd model-error error field of the neglected inside radiation
    wallpgd uncertainty experimental uncertainty of the practical sensors
    wallpgd fixture     synthetic practical measurements

Every command writes its outputs plus a manifest.json under --out.
"""
from __future__ import annotations

import argparse
import logging
import platform
import sys
from concurrent.futures import ProcessPoolExecutor, as_completed
from importlib import metadata as importlib_metadata
from itertools import product
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field

from . import config as env
from . import pgd
from .bases import SnapshotMatrix, load_basis, pod_energy, save_basis
from .config import RunConfig, load_run_config
from .errors import (ConfigError, InvalidArgumentError, MeasurementParseError, ModelFormatError,
                     NumericalFailureError, ShapeError, SingularSystemError)
from .fdm import FieldSeries
from .grid import from_poly_interval
from .metrics import CpuLedger, epsilon, mu, nu, sensor_error
from .physics import redimensionalize
from .pipeline import (BasisSpec, build_model, case_reference, model_error_study, model_grid, prepare_basis, replay,
                       run_cell, training_snapshots)
from .serialization import atomic_write_text
from .studies import experimental_uncertainty, load_measurements, synthetic_measurements, write_measurements

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_UNEXPECTED = 1
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_NUMERICAL = 4


class RunManifest(BaseModel):
    command: str
    config_hash: str
    seed: int
    versions: Dict[str, str]
    host: str
    timings: Dict[str, float] = Field(default_factory=dict)
    outputs: List[str] = Field(default_factory=list)


def _versions() -> Dict[str, str]:
    versions = {"python": platform.python_version()}
    for package in ("wallpgd", "numpy", "scipy", "pandas", "pydantic"):
        try:
            versions[package] = importlib_metadata.version(package)
        except importlib_metadata.PackageNotFoundError:
            versions[package] = "unknown"
    return versions


def _manifest(args, config: RunConfig) -> RunManifest:
    return RunManifest(
        command=args.command,
        config_hash=config.digest(),
        seed=args.seed,
        versions=_versions(),
        host=f"{platform.system()} {platform.machine()} {platform.processor()}".strip(),
    )


def _finish(manifest: RunManifest, out_dir: Path, outputs: List[Path], ledger: Optional[CpuLedger] = None) -> None:
    manifest.outputs = [str(p) for p in outputs]
    if ledger is not None:
        manifest.timings = dict(ledger.durations)
    path = atomic_write_text(out_dir / "manifest.json", manifest.model_dump_json(indent=2))
    logger.info(f"Wrote {len(outputs)} output(s) and {path}")


def _write_json(path: Path, payload: BaseModel) -> Path:
    return atomic_write_text(path, payload.model_dump_json(indent=2))


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_reference(args, config: RunConfig) -> int:
    ledger = CpuLedger()
    run = ledger.time_block("reference", lambda: case_reference(config, args.nodes, args.dt))
    out = args.out / "reference.csv"
    run.reference.to_csv(out)
    logger.info(f"Reference series: {run.reference.steps} steps on {run.reference.grid.size} nodes -> {out}")
    _finish(_manifest(args, config), args.out, [out], ledger)
    return EXIT_OK


def _load_snapshots(path: Optional[Path]) -> Optional[SnapshotMatrix]:
    if path is None:
        return None
    snapshots = SnapshotMatrix.from_csv(path)
    logger.info(f"Loaded {snapshots.count} snapshots on {snapshots.grid.size} nodes from {path}")
    return snapshots


def cmd_build(args, config: RunConfig) -> int:
    spec = BasisSpec.parse(args.basis if args.train is None else f"{args.basis}:{args.train}")
    if spec.kind.value == "pod" and spec.period is None and args.snapshots is None:
        raise InvalidArgumentError("POD needs training snapshots: pass --snapshots <csv> or --train <period>.")
    criteria = config.pgd.model_copy(update={k: v for k, v in {
        "eps_fixed_point": args.eps_fixed, "eps_enrichment": args.eps_enrich, "max_modes": args.max_modes,
    }.items() if v is not None})

    ledger = CpuLedger()
    run = ledger.time_block("reference", lambda: case_reference(config, args.nodes, args.dt))
    grid = model_grid(config, run)
    snapshots = _load_snapshots(args.snapshots)
    basis = ledger.time_block("basis", lambda: prepare_basis(spec, args.modes, run, grid, snapshots))
    model = ledger.time_block("build", lambda: build_model(config, run, basis, args.dzeta, args.seed, criteria))

    outputs = [save_basis(basis, args.out / "basis.json"), pgd.save(model, args.out / "model.json")]
    if basis.singular_values is not None:
        energy = pod_energy(snapshots or training_snapshots(run, grid, spec.period))
        path = args.out / "pod_energy.csv"
        pd.DataFrame({"modes": np.arange(1, energy.size + 1), "energy": energy}).to_csv(path, index=False)
        outputs.append(path)
    offline = ledger.durations["basis"] + ledger.durations["build"]
    logger.info(f"Offline phase: {offline:.2f} s, M={model.M}; "
                f"rho_cpu(build) = {ledger.ratio('build', t0=offline).rho:.3f}")
    _finish(_manifest(args, config), args.out, outputs, ledger)
    return EXIT_OK


class SimulationReport(BaseModel):
    epsilon: float
    epsilon_argmax: int
    steps: int
    modes: int
    evaluations: int
    clamped: int
    clamped_by_parameter: Dict[str, int]


def cmd_simulate(args, config: RunConfig) -> int:
    model = pgd.load(args.model)
    basis = load_basis(args.basis) if args.basis is not None else model.basis
    if basis.N != model.N:
        raise ShapeError(f"Basis has {basis.N} modes, model was built for N={model.N}.")
    if args.basis is not None:
        model = pgd.PgdModel(model.grid, model.a, model.Bi_in, model.Bi_out, model.domains, model.X,
                             model.factors, basis, model.metadata)
    ledger = CpuLedger()
    run = ledger.time_block("reference", lambda: case_reference(config, args.nodes, args.dt))
    series, stats = ledger.time_block("simulate", lambda: replay(model, run, nearest=args.nearest))
    report = epsilon(run.reference, series)
    logger.info(f"epsilon = {report.value:.4e} (step {report.argmax}), "
                f"{stats.clamped} clamp(s) over {stats.evaluations} evaluations")

    outputs = [series.to_csv(args.out / "pgd_series.csv")]
    outputs.append(_write_json(args.out / "simulation.json", SimulationReport(
        epsilon=report.value, epsilon_argmax=report.argmax, steps=series.steps, modes=model.M,
        evaluations=stats.evaluations, clamped=stats.clamped, clamped_by_parameter=stats.by_parameter,
    )))
    _finish(_manifest(args, config), args.out, outputs, ledger)
    return EXIT_OK


_SWEEP_STATE: dict = {}


def _init_sweep_worker(config: RunConfig, run) -> None:
    _SWEEP_STATE["config"] = config
    _SWEEP_STATE["run"] = run


def _sweep_cell(label: str, N: int, dzeta: float, seed: int, metrics: List[str]) -> List[dict]:
    """Rows of one cell; failures are reported in the rows instead of raised."""
    config, run = _SWEEP_STATE["config"], _SWEEP_STATE["run"]
    base = {"basis": label, "N": N, "dzeta": dzeta}
    try:
        spec = BasisSpec.parse(label)
        result = run_cell(config, run, spec, N, dzeta, seed)
        rows = [dict(base, M=result.M, metric="epsilon", value=result.epsilon.value,
                     seconds=result.seconds, status="success", error="")]
        extra = [m for m in metrics if m != "epsilon"]
        if extra:
            grid = model_grid(config, run)
            basis = prepare_basis(spec, N, run, grid)
            reference = run.reference.resample(grid)
            for m in extra:
                value = mu(reference, basis).value if m == "mu" else nu(reference, basis, dzeta=dzeta).value
                rows.append(dict(base, M=result.M, metric=m, value=value,
                                 seconds=result.seconds, status="success", error=""))
        return rows
    except Exception as e:
        logger.warning(f"Sweep cell {label}/N={N}/dzeta={dzeta:g} failed: {e}")
        return [dict(base, M=0, metric="epsilon", value=float("nan"), seconds=0.0, status="failed", error=str(e))]


GNUPLOT_TEMPLATE = """# {title}
set datafile separator ','
set logscale y
set xlabel 'N'
set ylabel '{metric}'
set key outside
plot {plots}
"""


def _gnuplot(csv_path: Path, frame: pd.DataFrame, metric: str) -> Path:
    """Inline-data gnuplot script: one curve per (basis, dzeta) of `metric` against N."""
    groups = frame[(frame["metric"] == metric) & (frame["status"] == "success")].groupby(["basis", "dzeta"], sort=True)
    plots, blocks = [], []
    for (label, dzeta), group in groups:
        plots.append(f"'-' using 1:2 with linespoints title '{label} dzeta={dzeta:g}'")
        blocks.append("\n".join(f"{n} {v!r}" for n, v in zip(group["N"], group["value"])) + "\ne")
    body = GNUPLOT_TEMPLATE.format(title=csv_path.name, metric=metric, plots=", ".join(plots))
    path = csv_path.with_name(f"{csv_path.stem}_{metric}.gp")
    atomic_write_text(path, body + "\n".join(blocks) + "\n")
    return path


def cmd_sweep(args, config: RunConfig) -> int:
    sweep = config.sweep
    bases = args.bases or sweep.bases
    modes = args.modes_list or sweep.modes
    dzetas = args.dzetas or sweep.dzeta
    metrics = args.metrics or list(sweep.metrics)
    cells = list(product(bases, modes, dzetas))
    if not cells:
        raise ConfigError("The sweep grid is empty.")
    for label in bases:
        BasisSpec.parse(label)

    ledger = CpuLedger()
    run = ledger.time_block("reference", lambda: case_reference(config, args.nodes, args.dt))
    logger.info(f"Sweep: {len(cells)} cells on {args.threads} worker(s)")
    rows: List[dict] = []
    if args.threads <= 1:
        _init_sweep_worker(config, run)
        for label, N, dzeta in cells:
            rows.extend(_sweep_cell(label, N, dzeta, args.seed, metrics))
    else:
        with ProcessPoolExecutor(max_workers=args.threads, initializer=_init_sweep_worker,
                                 initargs=(config, run)) as pool:
            futures = [pool.submit(_sweep_cell, label, N, dzeta, args.seed, metrics) for label, N, dzeta in cells]
            for future in as_completed(futures):
                rows.extend(future.result())

    frame = pd.DataFrame(rows).sort_values(["basis", "N", "dzeta", "metric"], kind="stable").reset_index(drop=True)
    ok = frame["status"] == "success"
    t0 = frame.loc[ok, "seconds"].max() if ok.any() else float("nan")
    frame["rho_cpu"] = np.where(ok, frame["seconds"] / t0, np.nan)
    frame = frame[["basis", "N", "dzeta", "M", "metric", "value", "rho_cpu", "status", "error"]]
    out = args.out / "sweep.csv"
    frame.to_csv(out, index=False, float_format="%.10g")
    outputs = [out]
    if args.gnuplot:
        outputs.extend(_gnuplot(out, frame, m) for m in metrics)
    failed = int((~ok).sum())
    if failed:
        logger.warning(f"{failed} of {len(frame)} sweep rows failed; see the 'error' column")
    logger.info(f"Sweep finished: {len(frame)} rows, t0 = {t0:.2f} s")
    _finish(_manifest(args, config), args.out, outputs, ledger)
    return EXIT_OK


class ModelErrorReport(BaseModel):
    max_abs_error_K: float
    argmax_time_s: float
    argmax_position_m: float
    outside_max_abs_error_K: float
    qin_min: float
    qin_max: float


def cmd_model_error(args, config: RunConfig) -> int:
    if config.case != "theoretical":
        raise ConfigError("The model-error study runs on the theoretical case.")
    ledger = CpuLedger()
    run = ledger.time_block("reference", lambda: case_reference(config, args.nodes, args.dt))
    ref = run.reference
    study = ledger.time_block("model_error", lambda: model_error_study(run, f_w=args.f_w, f_g=args.f_g,
                                                                       eps_w=args.eps_w, eps_g=args.eps_g))
    qin = study.qin

    magnitude = np.abs(study.error.profiles)
    t_idx, x_idx = np.unravel_index(int(np.argmax(magnitude)), magnitude.shape)
    report = ModelErrorReport(
        max_abs_error_K=float(magnitude[t_idx, x_idx]),
        argmax_time_s=float(ref.times[t_idx] * run.problem.t_ref),
        argmax_position_m=float(from_poly_interval(ref.grid.nodes[x_idx]) * run.wall.L),
        outside_max_abs_error_K=float(magnitude[:, 0].max()),
        qin_min=float(np.min(qin)),
        qin_max=float(np.max(qin)),
    )
    logger.info(f"Model error: max |e| = {report.max_abs_error_K:.3f} K at x = {report.argmax_position_m:.3f} m; "
                f"q_in in [{report.qin_min:.1f}, {report.qin_max:.1f}] W/m2")

    qin_path = args.out / "qin.csv"
    pd.DataFrame({"time_s": ref.times * run.problem.t_ref, "q_in": qin}).to_csv(qin_path, index=False,
                                                                             float_format="%.10g")
    outputs = [qin_path, study.error.to_csv(args.out / "model_error.csv"),
               study.corrected.to_csv(args.out / "corrected.csv"),
               _write_json(args.out / "model_error.json", report)]
    _finish(_manifest(args, config), args.out, outputs, ledger)
    return EXIT_OK


class SensorUncertainty(BaseModel):
    sensor: str
    position_m: float
    sigma_mean_K: float
    sigma_max_K: float
    pgd_error_K: Optional[float] = None


class UncertaintyReport(BaseModel):
    sensors: List[SensorUncertainty]


def cmd_uncertainty(args, config: RunConfig) -> int:
    practical = config.practical
    path = args.measurements or practical.measurements
    if path is None:
        raise ConfigError("Pass --measurements <csv> or set [practical] measurements.")
    data = load_measurements(path, practical.positions, practical.sigma_m, practical.delta_x)

    simulated = None
    if args.model is not None:
        if config.case != "practical":
            raise ConfigError("Comparing a model with the sensors needs case = \"practical\".")
        model = pgd.load(args.model)
        run = case_reference(config)
        series, _ = replay(model, run)
        simulated = series

    rows = []
    frame_rows = []
    for j, name in enumerate(data.names):
        sigma, mean = experimental_uncertainty(data.temperatures, data.positions, j, data.sigma_m, data.delta_x)
        entry = SensorUncertainty(sensor=name, position_m=float(data.positions[j]),
                                  sigma_mean_K=mean, sigma_max_K=float(sigma.max()))
        if simulated is not None:
            record = data.temperatures[:simulated.times.size, j]
            kelvin = FieldSeries(simulated.times, redimensionalize(simulated.profiles, practical.u0), simulated.grid)
            entry.pgd_error_K = sensor_error(kelvin, data.positions[j] / practical.wall.L, record).value
        rows.append(entry)
        frame_rows.append(sigma)
        logger.info(f"{name} at {data.positions[j] * 100:.1f} cm: sigma_mean = {mean:.3f} K"
                    + (f", PGD max error = {entry.pgd_error_K:.3f} K" if entry.pgd_error_K is not None else ""))

    table = pd.DataFrame(np.column_stack([data.times] + frame_rows),
                         columns=["time_s"] + [f"sigma_{n}_K" for n in data.names])
    table_path = args.out / "uncertainty.csv"
    table.to_csv(table_path, index=False, float_format="%.10g")
    outputs = [table_path, _write_json(args.out / "uncertainty.json", UncertaintyReport(sensors=rows))]
    _finish(_manifest(args, config), args.out, outputs)
    return EXIT_OK


def cmd_fixture(args, config: RunConfig) -> int:
    frame = synthetic_measurements(config.practical)
    out = write_measurements(frame, args.out / "measurements.csv")
    logger.info(f"Synthetic measurements written to {out}")
    _finish(_manifest(args, config), args.out, [out])
    return EXIT_OK


COMMANDS = {
    "reference": cmd_reference,
    "build": cmd_build,
    "simulate": cmd_simulate,
    "sweep": cmd_sweep,
    "model-error": cmd_model_error,
    "uncertainty": cmd_uncertainty,
    "fixture": cmd_fixture,
}


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def _csv_list(kind):
    def parse(text: str):
        try:
            return [kind(item) for item in text.split(",") if item.strip()]
        except ValueError as e:
            raise argparse.ArgumentTypeError(str(e)) from e
    return parse


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wallpgd", description="PGD parametric models of wall heat conduction.")
    parser.add_argument("--config", type=Path, default=None, help="TOML run configuration")
    parser.add_argument("--out", type=Path, default=None, help=f"output directory (default: {env.OUT_DIR}/<command>)")
    parser.add_argument("--seed", type=int, default=env.SEED)
    parser.add_argument("--threads", type=int, default=env.THREADS)
    parser.add_argument("--log-level", default=env.LOG_LEVEL)
    sub = parser.add_subparsers(dest="command", required=True)

    def with_grid(p):
        p.add_argument("--nodes", type=int, default=None, help="reference node count")
        p.add_argument("--dt", type=float, default=None, help="dimensionless time step (theoretical case)")
        return p

    with_grid(sub.add_parser("reference", help="finite-difference reference solution"))

    p = with_grid(sub.add_parser("build", help="build an approximation basis and a PGD model"))
    p.add_argument("--basis", default="chebyshev", help="chebyshev, legendre, pod or pod:<period>")
    p.add_argument("-N", "--modes", type=int, default=4)
    p.add_argument("--dzeta", type=float, default=1e-4)
    p.add_argument("--snapshots", type=Path, default=None, help="snapshot CSV for POD")
    p.add_argument("--train", choices=["full", "half", "cycle1"], default=None, help="POD learning period")
    p.add_argument("--eps-fixed", type=float, default=None)
    p.add_argument("--eps-enrich", type=float, default=None)
    p.add_argument("--max-modes", type=int, default=None)

    p = with_grid(sub.add_parser("simulate", help="replay a model against the reference"))
    p.add_argument("--model", type=Path, required=True)
    p.add_argument("--basis", type=Path, default=None, help="basis file (default: the one stored in the model)")
    p.add_argument("--nearest", action="store_true", help="nearest-node table reads")

    p = with_grid(sub.add_parser("sweep", help="sweep basis kind, N and dzeta"))
    p.add_argument("--bases", type=_csv_list(str), default=None)
    p.add_argument("--modes", dest="modes_list", type=_csv_list(int), default=None)
    p.add_argument("--dzetas", type=_csv_list(float), default=None)
    p.add_argument("--metrics", type=_csv_list(str), default=None, help="epsilon,mu,nu")
    p.add_argument("--gnuplot", action="store_true", help="write a gnuplot script next to the CSV")

    p = with_grid(sub.add_parser("model-error", help="error of neglecting the inside radiation"))
    p.add_argument("--f-w", type=float, default=0.2)
    p.add_argument("--f-g", type=float, default=0.2)
    p.add_argument("--eps-w", type=float, default=0.9)
    p.add_argument("--eps-g", type=float, default=0.9)

    p = sub.add_parser("uncertainty", help="experimental uncertainty of the practical sensors")
    p.add_argument("--measurements", type=Path, default=None)
    p.add_argument("--model", type=Path, default=None, help="PGD model to compare with the sensors")

    sub.add_parser("fixture", help="write the synthetic practical measurements")
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, str(args.log_level).upper(), logging.INFO),
        format='%(asctime)s - %(name)s - %(levelname)s - %(message)s'
    )
    args.out = args.out or Path(env.OUT_DIR) / args.command

    try:
        config = load_run_config(args.config)
        if args.command in ("sweep",) and args.metrics:
            unknown = set(args.metrics) - {"epsilon", "mu", "nu"}
            if unknown:
                raise ConfigError(f"Unknown sweep metric(s): {', '.join(sorted(unknown))}")
        args.out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](args, config)
    except (ConfigError, InvalidArgumentError, ShapeError) as e:
        logger.error(f"Configuration error: {e}")
        return EXIT_CONFIG
    except (ModelFormatError, MeasurementParseError, OSError) as e:
        logger.error(f"I/O error: {e}")
        return EXIT_IO
    except (NumericalFailureError, SingularSystemError) as e:
        logger.error(f"Numerical failure: {e}")
        return EXIT_NUMERICAL
    except Exception as e:
        logger.error(f"Unexpected error in '{args.command}': {e}", exc_info=True)
        return EXIT_UNEXPECTED


if __name__ == "__main__":
    sys.exit(main())
