"""
wallpgd Acceptance Evaluation Script

This script checks the reduced-order models against the reference solver by:
1. Measuring the convergence of the Chebyshev, Legendre and POD bases (mu)
2. Locating the coefficient-discretization thresholds (nu)
3. Scoring the combined PGD models (epsilon) and their mode counts
4. Quantifying the model error of the neglected inside radiation
5. Comparing the PGD tables with direct BVP solves
6. Ordering the POD learning periods on the practical case
7. Checking that builds are deterministic and files load back exactly

Usage:
    python evaluation/evaluate_acceptance.py [criterion ids...]
"""

import json
import sys
import tempfile
import time
from datetime import datetime
from pathlib import Path
from typing import Any, Callable, Dict, List, Tuple

import numpy as np

ROOT = Path(__file__).resolve().parent.parent
sys.path.insert(0, str(ROOT))

from wallpgd import pgd  # noqa: E402
from wallpgd.bases import (chebyshev_basis, coefficient_ranges, denormalize, legendre_basis,  # noqa: E402
                           pod_basis, reconstruct, SnapshotMatrix)
from wallpgd.config import RunConfig  # noqa: E402
from wallpgd.fdm import solve_bvp  # noqa: E402
from wallpgd.grid import uniform_grid  # noqa: E402
from wallpgd.metrics import mu, nu  # noqa: E402
from wallpgd.physics import BvpInstance  # noqa: E402
from wallpgd.pipeline import (BasisSpec, build_model, case_reference, model_error_study,  # noqa: E402
                              model_grid, prepare_basis, replay, run_cell)
from wallpgd.studies import (LearningPeriod, PracticalCaseConfig, learning_split, load_measurements,  # noqa: E402
                             practical_reference, synthetic_measurements, write_measurements)

# Configuration
CASES_PATH = Path(__file__).parent / "acceptance_cases.json"
RESULTS_DIR = Path(__file__).parent / "results"
SEED = 42

# Ensure results directory exists
RESULTS_DIR.mkdir(parents=True, exist_ok=True)


class Colors:
    """ANSI color codes for terminal output"""
    HEADER = '\033[95m'
    OKBLUE = '\033[94m'
    OKCYAN = '\033[96m'
    OKGREEN = '\033[92m'
    WARNING = '\033[93m'
    FAIL = '\033[91m'
    ENDC = '\033[0m'
    BOLD = '\033[1m'


def print_section(title: str):
    print(f"\n{Colors.HEADER}{Colors.BOLD}{'='*80}{Colors.ENDC}")
    print(f"{Colors.HEADER}{Colors.BOLD}{title.center(80)}{Colors.ENDC}")
    print(f"{Colors.HEADER}{Colors.BOLD}{'='*80}{Colors.ENDC}\n")


def print_success(message: str):
    print(f"{Colors.OKGREEN}✓ {message}{Colors.ENDC}")


def print_error(message: str):
    print(f"{Colors.FAIL}✗ {message}{Colors.ENDC}")


def print_info(message: str):
    print(f"{Colors.OKCYAN}ℹ {message}{Colors.ENDC}")


def print_warning(message: str):
    print(f"{Colors.WARNING}⚠ {message}{Colors.ENDC}")


def load_cases() -> Dict[str, Any]:
    """
    Load the acceptance thresholds from JSON file.

    Returns:
        Dictionary with metadata and one entry per criterion
    """
    try:
        with open(CASES_PATH, 'r') as f:
            cases = json.load(f)
        print_success(f"Loaded {cases['metadata']['total_criteria']} criteria from {CASES_PATH.name}")
        return cases
    except FileNotFoundError:
        print_error(f"Acceptance cases not found at {CASES_PATH}")
        raise
    except json.JSONDecodeError as e:
        print_error(f"Invalid JSON in acceptance cases: {e}")
        raise


class Workbench:
    """Lazily computed runs shared between criteria."""

    def __init__(self, config: RunConfig):
        self.config = config
        self._theoretical = None
        self._practical = None

    @property
    def theoretical(self):
        if self._theoretical is None:
            print_info("Computing the theoretical FD reference...")
            self._theoretical = case_reference(self.config)
        return self._theoretical

    @property
    def practical(self):
        if self._practical is None:
            print_info("Generating synthetic practical measurements and their FD reference...")
            practical = PracticalCaseConfig()
            with tempfile.TemporaryDirectory() as tmp:
                path = write_measurements(synthetic_measurements(practical), Path(tmp) / "measurements.csv")
                data = load_measurements(path, practical.positions, practical.sigma_m, practical.delta_x)
            self._practical = practical_reference(data, practical)
        return self._practical

    def reference_snapshots(self) -> SnapshotMatrix:
        return SnapshotMatrix.from_series(self.theoretical.reference)


def _mu_curve(bench: Workbench, kind: str, modes: range) -> Dict[int, float]:
    ref = bench.theoretical.reference
    top = max(modes)
    if kind == "chebyshev":
        basis = chebyshev_basis(top, ref.grid)
    elif kind == "legendre":
        basis = legendre_basis(top, ref.grid)
    else:
        basis = pod_basis(bench.reference_snapshots(), top)
    return {n: mu(ref, basis, n).value for n in modes}


def _loglog_slope(n, values) -> float:
    return float(np.polyfit(np.log(np.asarray(n, dtype=float)), np.log(np.asarray(values, dtype=float)), 1)[0])


def check_convergence_rate(bench: Workbench, case: Dict) -> Tuple[bool, Dict]:
    lo, hi = case["modes"]
    curve = _mu_curve(bench, "chebyshev", range(lo, hi + 1))
    slope = _loglog_slope(list(curve), list(curve.values()))
    smin, smax = case["slope_range"]
    return smin <= slope <= smax, {"slope": slope, "mu": curve}


def check_chebyshev_legendre(bench: Workbench, case: Dict) -> Tuple[bool, Dict]:
    lo, hi = case["modes"]
    cheb = _mu_curve(bench, "chebyshev", range(lo, hi + 1))
    leg = _mu_curve(bench, "legendre", range(lo, hi + 1))
    ratios = {n: cheb[n] / leg[n] for n in cheb if leg[n] > 0}
    worst = max(max(r, 1.0 / r) for r in ratios.values())
    return worst <= case["max_ratio"], {"worst_ratio": worst, "ratios": ratios}


def check_pod_plateau(bench: Workbench, case: Dict) -> Tuple[bool, Dict]:
    lo, hi = case["modes"]
    pod = _mu_curve(bench, "pod", range(lo, hi + 1))
    cheb = _mu_curve(bench, "chebyshev", range(case["plateau_from"], hi + 1))
    values = [pod[n] for n in sorted(pod)]
    monotone = all(b <= a + case["monotone_tolerance"] for a, b in zip(values, values[1:]))
    start = pod[case["plateau_from"]]
    change = abs(start - pod[hi]) / start if start > 0 else 0.0
    crossing = [n for n in cheb if cheb[n] < pod[n]]
    passed = monotone and change < case["plateau_change"] and bool(crossing)
    return passed, {"monotone": monotone, "plateau_change": change,
                    "first_crossing": crossing[0] if crossing else None, "mu_pod": pod}


def check_discretization(bench: Workbench, case: Dict) -> Tuple[bool, Dict]:
    ref = bench.theoretical.reference
    lo, hi = case["modes"]
    basis = chebyshev_basis(hi + 1, ref.grid)
    basis = basis.with_ranges(coefficient_ranges(bench.reference_snapshots(), basis))
    details, passed = {}, True
    for onset_case in case["onsets"]:
        dzeta = onset_case["dzeta"]
        curve = {n: nu(ref, basis, n, dzeta).value for n in range(lo, hi + 2)}
        onset = next((n for n in range(lo, hi + 1)
                      if curve[n] > 0 and (curve[n] - curve[n + 1]) / curve[n] < case["improvement"]), None)
        ok = onset is not None and abs(onset - onset_case["expected"]) <= onset_case["tolerance"]
        passed &= ok
        details[f"{dzeta:g}"] = {"onset": onset, "expected": onset_case["expected"], "passed": ok}
    return passed, details


def check_combined_accuracy(bench: Workbench, case: Dict) -> Tuple[bool, Dict]:
    run = bench.theoretical
    details, passed = {}, True
    emin, emax = case["epsilon_range"]
    for label in case["bases"]:
        cell = run_cell(bench.config, run, BasisSpec.parse(label), case["modes"], case["dzeta"], SEED)
        ok = emin <= cell.epsilon.value <= emax
        passed &= ok
        details[label] = {"epsilon": cell.epsilon.value, "M": cell.M, "seconds": cell.seconds, "passed": ok}
    coarse = run_cell(bench.config, run, BasisSpec.parse("chebyshev"), case["coarse_modes"], case["dzeta"], SEED)
    ratio = coarse.epsilon.value / details["chebyshev"]["epsilon"]
    details["coarse_ratio"] = ratio
    return passed and ratio >= case["coarse_ratio"], details


def check_mode_growth(bench: Workbench, case: Dict) -> Tuple[bool, Dict]:
    run = bench.theoretical
    grid = model_grid(bench.config, run)
    counts = {}
    for n in case["modes"]:
        basis = prepare_basis(BasisSpec.parse("chebyshev"), n, run, grid)
        counts[n] = build_model(bench.config, run, basis, case["dzeta"], SEED).M
    seq = [counts[n] for n in case["modes"]]
    decreases = sum(b < a for a, b in zip(seq, seq[1:]))
    ties = sum(b == a for a, b in zip(seq, seq[1:]))
    return decreases == 0 and ties <= case["allowed_ties"], {"M": counts, "ties": ties}


def check_model_error(bench: Workbench, case: Dict) -> Tuple[bool, Dict]:
    study = model_error_study(bench.theoretical)
    magnitude = np.abs(study.error.profiles)
    _, node = np.unravel_index(int(np.argmax(magnitude)), magnitude.shape)
    peak = float(magnitude.max())
    qmin, qmax = float(study.qin.min()), float(study.qin.max())
    lo, hi = case["max_error_range_K"]
    qlo, qhi = case["qin_range"]
    inside = int(node) == magnitude.shape[1] - 1
    passed = lo <= peak <= hi and qlo <= qmin and qmax <= qhi and inside
    return passed, {"max_abs_error_K": peak, "argmax_node": int(node), "at_inside_face": inside,
                    "qin_min": qmin, "qin_max": qmax}


def _manufactured_error(n: int, a: float = 1e-2, bi_in: float = 0.5, bi_out: float = 1.3) -> float:
    """Max nodal error of the BVP solver against y = cos(pi x)."""
    grid = uniform_grid(n)
    x = grid.physical_nodes
    exact = np.cos(np.pi * x)
    # y'(0) = 0 = Bi_out*1 + b_out, y'(1) = 0 = -Bi_in*(-1) + b_in
    instance = BvpInstance(a, exact * (1.0 + a * np.pi ** 2), b_in=-bi_in, b_out=-bi_out)
    return float(np.abs(solve_bvp(instance, bi_in, bi_out, grid) - exact).max())


def check_oracle(bench: Workbench, case: Dict) -> Tuple[bool, Dict]:
    run = bench.theoretical
    grid = model_grid(bench.config, run)
    basis = prepare_basis(BasisSpec.parse("chebyshev"), case["modes"], run, grid)
    model = build_model(bench.config, run, basis, case["dzeta"], SEED)
    rng = np.random.default_rng(SEED)
    errors = []
    for _ in range(case["samples"]):
        b_in = rng.uniform(model.domains.b_in.lo, model.domains.b_in.hi)
        b_out = rng.uniform(model.domains.b_out.lo, model.domains.b_out.hi)
        zbar = rng.uniform(0.0, 1.0, size=model.N)
        source = reconstruct(basis, denormalize(zbar, basis.ranges))
        exact = solve_bvp(BvpInstance(model.a, source, b_in, b_out), model.Bi_in, model.Bi_out, grid)
        table = pgd.evaluate(model, b_in, b_out, zbar)
        errors.append(float(np.sqrt(np.mean((table - exact) ** 2))))
    refinements = case["refinements"]
    fd_errors = [_manufactured_error(n) for n in refinements]
    slope = -_loglog_slope(refinements, fd_errors)
    smin, smax = case["slope_range"]
    passed = max(errors) <= case["max_rmse"] and smin <= slope <= smax
    return passed, {"max_rmse": max(errors), "mean_rmse": float(np.mean(errors)), "M": model.M,
                    "fd_errors": dict(zip(refinements, fd_errors)), "fd_order": slope}


def check_learning_periods(bench: Workbench, case: Dict) -> Tuple[bool, Dict]:
    run = bench.practical
    ref = run.reference
    values = {}
    for period in (LearningPeriod.FULL, LearningPeriod.HALF, LearningPeriod.CYCLE1):
        snapshots = learning_split(ref, period, run.problem.t_ref)
        values[period.value] = mu(ref, pod_basis(snapshots, case["modes"])).value
    tol = case["tolerance"]
    passed = values["full"] <= values["half"] + tol and values["half"] <= values["cycle1"] + tol
    return passed, {"mu": values}


def check_determinism(bench: Workbench, case: Dict) -> Tuple[bool, Dict]:
    run = bench.theoretical
    grid = model_grid(bench.config, run)
    basis = prepare_basis(BasisSpec.parse("chebyshev"), case["modes"], run, grid)
    first = build_model(bench.config, run, basis, case["dzeta"], SEED)
    second = build_model(bench.config, run, basis, case["dzeta"], SEED)
    identical = pgd.model_to_json(first) == pgd.model_to_json(second)
    with tempfile.TemporaryDirectory() as tmp:
        loaded = pgd.load(pgd.save(first, Path(tmp) / "model.json"))
    exact = (np.array_equal(loaded.X, first.X)
             and all(np.array_equal(a, b) for a, b in zip(loaded.factors, first.factors)))
    series_a, _ = replay(first, run)
    series_b, _ = replay(loaded, run)
    replay_equal = np.array_equal(series_a.profiles, series_b.profiles)
    return identical and exact and replay_equal, {"identical_builds": identical, "exact_reload": exact,
                                                  "identical_replay": bool(replay_equal), "M": first.M}


CHECKS: Dict[str, Callable[[Workbench, Dict], Tuple[bool, Dict]]] = {
    "basis_convergence_rate": check_convergence_rate,
    "chebyshev_legendre_proximity": check_chebyshev_legendre,
    "pod_plateau_and_crossing": check_pod_plateau,
    "discretization_thresholds": check_discretization,
    "combined_model_accuracy": check_combined_accuracy,
    "mode_count_growth": check_mode_growth,
    "model_error": check_model_error,
    "oracle_equivalence": check_oracle,
    "learning_period_ordering": check_learning_periods,
    "determinism_and_serialization": check_determinism,
}


def run_evaluation(cases: Dict[str, Any], selected: List[int]) -> List[Dict[str, Any]]:
    """
    Run the selected criteria in order.

    Returns:
        One result dict per criterion with status, duration and details
    """
    bench = Workbench(RunConfig())
    results = []
    for case in cases["criteria"]:
        if selected and case["id"] not in selected:
            continue
        print_section(f"Criterion {case['id']}: {case['name']}")
        print_info(case["description"])
        start = time.time()
        try:
            passed, details = CHECKS[case["name"]](bench, case)
            status = "passed" if passed else "failed"
        except Exception as e:
            passed, details, status = False, {"error": str(e)}, "error"
        elapsed = time.time() - start
        if passed:
            print_success(f"Passed in {elapsed:.1f} s")
        elif status == "error":
            print_error(f"Error after {elapsed:.1f} s: {details['error']}")
        else:
            print_warning(f"Failed in {elapsed:.1f} s")
        results.append({"id": case["id"], "name": case["name"], "status": status,
                        "seconds": elapsed, "details": details})
    return results


def _jsonable(value):
    if isinstance(value, dict):
        return {str(k): _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, (np.floating, np.integer, np.bool_)):
        return value.item()
    return value


def generate_report(results: List[Dict[str, Any]]) -> str:
    lines = ["wallpgd acceptance report", f"Generated: {datetime.now().isoformat(timespec='seconds')}", ""]
    passed = sum(r["status"] == "passed" for r in results)
    lines.append(f"Passed {passed} of {len(results)} criteria")
    lines.append("")
    for r in results:
        lines.append(f"[{r['status'].upper():6}] {r['id']:2d} {r['name']} ({r['seconds']:.1f} s)")
        for key, value in r["details"].items():
            if not isinstance(value, dict):
                lines.append(f"         {key}: {value}")
    return "\n".join(lines) + "\n"


def main():
    print_section("wallpgd Acceptance Evaluation")
    try:
        cases = load_cases()
    except (FileNotFoundError, json.JSONDecodeError):
        return 1

    selected = [int(a) for a in sys.argv[1:]]
    results = run_evaluation(cases, selected)

    timestamp = datetime.now().strftime('%Y%m%d_%H%M%S')
    results_path = RESULTS_DIR / f"acceptance_results_{timestamp}.json"
    with open(results_path, 'w') as f:
        json.dump(_jsonable(results), f, indent=2)
    report_path = RESULTS_DIR / f"acceptance_report_{timestamp}.txt"
    report_path.write_text(generate_report(results))

    print_section("Summary")
    failed = [r for r in results if r["status"] != "passed"]
    for r in results:
        (print_success if r["status"] == "passed" else print_error)(f"{r['id']:2d} {r['name']}")
    print_info(f"Results saved to {results_path}")
    print_info(f"Report saved to {report_path}")
    return 1 if failed else 0


if __name__ == "__main__":
    exit(main())
