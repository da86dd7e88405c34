"""
End-to-end certification: datum -> approximant -> tautological estimators -> constants
-> control solution -> (optional) validation against a refined Galerkin reference.
"""

import math
import time
from contextlib import contextmanager
from typing import Dict, Optional, Union

import numpy as np
from pydantic import ValidationError

from app.core.config import settings
from app.core.errors import CertificationError, ConfigValidationError, IntegratorError
from app.core.logging_config import app_logger, error_logger
from app.models.approximant import ApproximantTrace
from app.models.certification import CertificationReport, CertifyConfig, ValidationBlock
from app.models.constants import ConstantTable, LatticeTruncation
from app.models.control import ControlSolution, EstimatorSet
from app.models.spectral import ProblemSpec
from app.services import approximants, control_solver, tame_constants
from app.services import spectral_core as sc
from app.services.datum_factory import DatumFactory

BETWEEN_SAMPLES_CAVEAT = "Estimators are linearly interpolated between samples; bounds between samples are heuristic."
CLOSED_FORM_FRACTION = 0.95
REFINEMENT_CAVEAT = 0.01


@contextmanager
def _timed(timings: Dict[str, float], stage: str):
    start = time.perf_counter()
    try:
        yield
    finally:
        timings[stage] = time.perf_counter() - start


def parse_config(config: Union[CertifyConfig, dict]) -> CertifyConfig:
    if isinstance(config, CertifyConfig):
        return config
    try:
        return CertifyConfig(**config)
    except ValidationError as exc:
        raise ConfigValidationError(f"Invalid configuration: {exc}") from exc


def build_problem(config: CertifyConfig) -> ProblemSpec:
    try:
        datum = DatumFactory.build(config.datum, config.dim, seed=config.seed)
        forcing = DatumFactory.forcing(config.forcing, config.dim)
        return ProblemSpec(
            dim=config.dim, nu=config.nu, n=config.n, orders=config.orders,
            datum=datum, forcing=forcing, t_max=config.T_max,
        )
    except (ValueError, ValidationError) as exc:
        raise ConfigValidationError(f"Invalid problem data: {exc}") from exc


def build_trace(config: CertifyConfig, spec: ProblemSpec) -> ApproximantTrace:
    approx = config.approximant
    horizon = min(approx.T_a or config.T_max, config.T_max)
    if approx.kind == "zero":
        return approximants.zero_approximant(spec.dim, horizon, approx.samples, nu=spec.nu)
    if approx.kind == "galerkin":
        return approximants.galerkin_evolve(spec, approx.M, horizon=horizon, samples=approx.samples)
    taylor = approximants.taylor_coefficients(spec.datum, spec.forcing, approx.N, nu=spec.nu)
    return approximants.taylor_trace(taylor, horizon, approx.samples)


def fetch_constants(config: CertifyConfig, workers: Optional[int] = None) -> ConstantTable:
    pairs = tame_constants.required_pairs(config.n, config.orders)
    spec = config.constants
    if spec.uses_cache_only:
        return tame_constants.load_table(config.dim, pairs, spec.cache_path)
    defaults = LatticeTruncation()
    trunc = LatticeTruncation(
        sum_radius=spec.H or defaults.sum_radius,
        sup_radius=spec.Kmax or defaults.sup_radius,
        tail_margin=spec.tail_margin or defaults.tail_margin,
    )
    return tame_constants.load_or_compute(
        config.dim, pairs, trunc,
        cache_dir=spec.cache_path, allow_compute=spec.allow_compute, workers=workers,
    )


def _relative_gap(a: np.ndarray, b: np.ndarray) -> float:
    if a.size == 0:
        return 0.0
    scale = np.maximum(np.abs(b), np.finfo(float).tiny)
    gaps = np.where(a == b, 0.0, np.abs(a - b) / scale)
    return float(np.max(gaps))


def closed_form_check(
    closed: ControlSolution,
    spec: ProblemSpec,
    estimators: EstimatorSet,
    table: ConstantTable,
) -> Dict[str, float]:
    """Integrator and quadrature against the closed forms on [0, 0.95 T_c] (or the whole grid when T_c = inf)."""
    limit = CLOSED_FORM_FRACTION * closed.t_c if math.isfinite(closed.t_c) else math.inf
    times = np.asarray([t for t in estimators.times if t <= limit])
    if times.size < 2:
        return {}
    numeric = control_solver.solve_control_system(
        estimators, table, spec.nu, spec.orders, times=times, t_max=float(times[-1]),
    )
    keep = np.isin(closed.times, numeric.times)
    check = {"t_end": float(times[-1]), f"R_{spec.n}": _relative_gap(numeric.r_n, closed.r_n[keep])}
    for p, curve in numeric.curves.items():
        check[f"R_{p}"] = _relative_gap(curve.bound, closed.curves[p].bound[keep])
    app_logger.info(f"Closed-form agreement of the integrated control solution: {check}")
    return check


def _certified_label(solution: ControlSolution) -> str:
    if solution.certified_globally:
        return "globally"
    if solution.blew_up:
        return "until control blow-up"
    return "to horizon"


def _problem_echo(config: CertifyConfig) -> dict:
    return config.model_dump(mode="json", exclude={"out_dir"})


def run_certification(
    config: Union[CertifyConfig, dict],
    workers: Optional[int] = None,
    validate: bool = True,
) -> CertificationReport:
    """Run the whole pipeline. Integrator failures raise with a partial report attached."""
    config = parse_config(config)
    timings: Dict[str, float] = {}
    report = CertificationReport(problem=_problem_echo(config), caveats=[BETWEEN_SAMPLES_CAVEAT])
    report._timings = timings
    app_logger.info(f"Certification started: d={config.dim} nu={config.nu} n={config.n} orders={config.orders}")

    try:
        with _timed(timings, "datum"):
            spec = build_problem(config)
        with _timed(timings, "approximant"):
            try:
                trace = build_trace(config, spec)
            except ValueError as exc:
                raise IntegratorError(f"Approximant construction failed: {exc}") from exc
        report._trace = trace
        report.approximant = trace.header()
        if trace.stopped_early:
            report.caveats.append(f"Approximant integration stopped early at T_a={trace.horizon}")

        with _timed(timings, "constants"):
            table = fetch_constants(config, workers)
        report.constants = table
        if not table.all_plateaued:
            report.caveats.append("Lattice sup search did not plateau for every pair; constants may be underestimated")
        if table.worst_refinement > REFINEMENT_CAVEAT:
            report.caveats.append(
                f"Constants change by up to {table.worst_refinement:.2%} from the half-size lattice truncation"
            )
        report.caveats.append(
            f"Constants are empirical upper estimates from finite lattice sums "
            f"(H={table.truncation.sum_radius}, Kmax={table.truncation.sup_radius}, "
            f"tail margin {table.truncation.tail_margin})"
        )

        with _timed(timings, "estimators"):
            estimators = approximants.tautological_estimators(trace, spec, workers=workers)
        report._estimators = estimators
        report.delta = {str(q): v for q, v in estimators.delta.items()}

        with _timed(timings, "control"):
            if trace.provenance == "zero" and spec.forcing_is_zero:
                norms = sc.sobolev_norms_array(spec.datum.coeffs, spec.dim, spec.datum.truncation, spec.bound_orders)
                solution = control_solver.zero_control_solution(
                    spec.nu, table, spec.n, spec.orders, norms, trace.times,
                )
                report.closed_form_check = closed_form_check(solution, spec, estimators, table)
            else:
                solution = control_solver.solve_control_system(
                    estimators, table, spec.nu, spec.orders, times=trace.times, t_max=config.T_max,
                )
        report._solution = solution
        report.t_c = solution.t_c
        report.certified = _certified_label(solution)
        report.blew_up = solution.blew_up
        report.blowup_time_estimate = solution.blowup_time_estimate
        report.control = {
            "constants_used": solution.constants_used,
            "tolerances": solution.tolerances,
            "stop_reason": solution.stop_reason,
            "closed_form": solution.closed_form,
        }

        if validate and config.validation is not None:
            with _timed(timings, "validation"):
                report.validation = validate_against_reference(
                    spec, trace, solution, config.validation.ref_M,
                    rtol=config.validation.rtol, atol=config.validation.atol,
                )
    except CertificationError as exc:
        error_logger.error(f"Certification failed: {exc}")
        report.status, report.error = "partial", str(exc)
        exc.partial_report = report
        raise

    app_logger.info(f"Certification finished: T_c={solution.t_c} ({report.certified}); timings={timings}")
    return report


def integration_floor(trace: ApproximantTrace, index: int, orders) -> Dict[float, float]:
    """
    Accumulated local-error allowance of a time-stepped trace at one sample:
    steps * (rtol ||ua||_q + atol (sum_k |k|^2q)^(1/2)). Zero for traces that were not time stepped.
    """
    steps = float(trace.metadata.get("steps", 0.0))
    if steps == 0:
        return {float(q): 0.0 for q in orders}
    rtol = float(trace.metadata.get("rtol", 0.0))
    atol = float(trace.metadata.get("atol", 0.0))
    field = trace.field(index)
    norms = sc.sobolev_norms_array(field.coeffs, field.dim, field.truncation, orders)
    floors = {}
    for q in orders:
        weight = float(np.sqrt(field.dim * np.sum(sc.sobolev_weights(field.dim, field.truncation, q))))
        floors[float(q)] = steps * (rtol * norms[float(q)] + atol * weight)
    return floors


def _ratio(gap: float, bound: float) -> float:
    if gap == 0:
        return 0.0
    return gap / bound if bound > 0 else math.inf


def validate_against_reference(
    spec: ProblemSpec,
    trace: ApproximantTrace,
    solution: ControlSolution,
    ref_M: int,
    rtol: Optional[float] = None,
    atol: Optional[float] = None,
) -> ValidationBlock:
    """
    max_i ||u_ref(t_i) - ua(t_i)||_q / R_q(t_i) for q in {n} u P; passes when every ratio <= 1 + slack.
    The same distances reduced by the integration allowance of both runs are kept as a diagnostic.
    """
    if ref_M <= trace.truncation:
        raise ConfigValidationError(
            f"Reference truncation {ref_M} must exceed the approximant truncation {trace.truncation}"
        )
    rtol = rtol or settings.REFERENCE_RTOL
    atol = atol or settings.REFERENCE_ATOL
    times = np.asarray(solution.times, dtype=float)
    if times.size < 2:
        raise IntegratorError(f"Validation needs at least two grid points inside [0, T_c), T_c={solution.t_c}")

    try:
        reference = approximants.galerkin_evolve(spec, ref_M, rtol=rtol, atol=atol, times=times)
    except ValueError as exc:
        raise IntegratorError(f"Reference integration failed: {exc}") from exc
    if reference.size < times.size:
        raise IntegratorError(f"Reference integration failed at t={reference.horizon} before the end of the grid")

    orders = spec.bound_orders
    ratios: Dict[str, list] = {str(q): [] for q in orders}
    adjusted: Dict[str, list] = {str(q): [] for q in orders}
    floors: Dict[str, list] = {str(q): [] for q in orders}
    for i, t in enumerate(times):
        j = int(np.argmin(np.abs(trace.times - t)))
        distance = sc.field_axpy(-1.0, trace.field(j), reference.field(i))
        norms = sc.sobolev_norms_array(distance.coeffs, distance.dim, distance.truncation, orders)
        ref_floor = integration_floor(reference, i, orders)
        own_floor = integration_floor(trace, j, orders)
        for q in orders:
            floor = ref_floor[q] + own_floor[q]
            bound = float(solution.bound_for(q)[i])
            floors[str(q)].append(floor)
            ratios[str(q)].append(_ratio(norms[q], bound))
            adjusted[str(q)].append(_ratio(max(norms[q] - floor, 0.0), bound))

    slack = settings.VALIDATION_SLACK
    max_ratio = {q: max(values) for q, values in ratios.items()}
    adjusted_max_ratio = {q: max(values) for q, values in adjusted.items()}
    passed = all(value <= 1.0 + slack for value in max_ratio.values())
    app_logger.info(
        f"Validation at ref_M={ref_M}: max ratios {max_ratio}, passed={passed}; "
        f"integration-adjusted {adjusted_max_ratio}"
    )
    if not passed:
        app_logger.warning(f"Validation ratios exceed 1 + {slack}: {max_ratio}")
    return ValidationBlock(
        reference_M=ref_M, reference_rtol=rtol, reference_atol=atol, slack=slack,
        times=[float(t) for t in times], ratios=ratios, max_ratio=max_ratio, passed=passed,
        floors=floors, adjusted_ratios=adjusted, adjusted_max_ratio=adjusted_max_ratio,
        reference_stopped_early=reference.stopped_early,
    )
