"""
Approximate solutions ua of the Cauchy problem and their tautological estimators.

    e(ua) = dua/dt - nu Lap ua - P(ua, ua) - f        differential error
    eps_q(t) = ||e(ua)(t)||_q,  delta_q = ||ua(0) - u0||_q,  D_q(t) = ||ua(t)||_q

Three approximants: the zero field, a spectral Galerkin solution on the cube |k|_inf <= M,
and (nu = 0) the truncated time-Taylor expansion sum_j t^j u_j.
"""

from concurrent.futures import ThreadPoolExecutor
from typing import List, Optional, Sequence

import numpy as np

from app.core.config import settings
from app.core.logging_config import app_logger
from app.models.approximant import ApproximantTrace, TaylorCoefficients
from app.models.control import EstimatorSet
from app.models.spectral import ProblemSpec, SpectralField, squared_norms
from app.services import spectral_core as sc
from app.services.integrators import march


def required_orders(spec: ProblemSpec) -> List[float]:
    """Orders whose estimators the control system reads: each bound order q and its partner q+1."""
    orders = set()
    for q in spec.bound_orders:
        orders.update((float(q), float(q) + 1.0))
    return sorted(orders)


def forcing_at(spec: ProblemSpec, t: float) -> SpectralField:
    """f(t) = sum_j t^j f_j; the zero field when no terms are given."""
    if not spec.forcing:
        return SpectralField.zeros(spec.dim)
    m = max(term.truncation for term in spec.forcing)
    coeffs = sum((t ** j) * sc.pad_array(term.coeffs, spec.dim, term.truncation, m) for j, term in enumerate(spec.forcing))
    return SpectralField.from_arithmetic(spec.dim, m, coeffs)


def _forcing_array(spec: ProblemSpec, t: float, truncation: int) -> np.ndarray:
    side = 2 * truncation + 1
    total = np.zeros((spec.dim,) + (side,) * spec.dim, dtype=np.complex128)
    for j, term in enumerate(spec.forcing):
        total += (t ** j) * sc.truncate_array(term.coeffs, spec.dim, term.truncation, truncation)
    return total


def _sample_times(horizon: float, samples: Optional[int]) -> np.ndarray:
    samples = samples or settings.DEFAULT_SAMPLES
    if samples < 2:
        raise ValueError("A trace needs at least two samples")
    return np.linspace(0.0, horizon, samples)


def zero_approximant(dim: int, horizon: float, samples: Optional[int] = None, nu: float = 0.0) -> ApproximantTrace:
    times = _sample_times(horizon, samples)
    zeros = np.zeros((times.size, dim, 1) + (1,) * (dim - 1), dtype=np.complex128)
    return ApproximantTrace(
        dim=dim, truncation=0, provenance="zero", nu=nu,
        times=times, values=zeros, derivatives=zeros.copy(), horizon=horizon,
    )


def galerkin_evolve(
    spec: ProblemSpec,
    truncation: int,
    horizon: Optional[float] = None,
    samples: Optional[int] = None,
    rtol: Optional[float] = None,
    atol: Optional[float] = None,
    times: Optional[np.ndarray] = None,
) -> ApproximantTrace:
    """
    Integrate dua/dt = nu Lap ua + Pi_M P(ua, ua) + Pi_M f on |k|_inf <= M with RK45.
    Derivative samples are the right-hand side evaluated on the samples.
    A failed integration ends the trace early; T_a becomes the last accepted time.
    """
    if truncation < 1:
        raise ValueError("Galerkin truncation must be at least 1")
    if times is not None:
        times = np.asarray(times, dtype=float)
        horizon = float(times[-1])
    horizon = horizon or spec.t_max
    rtol = rtol or settings.GALERKIN_RTOL
    atol = atol or settings.GALERKIN_ATOL
    dim, nu, m = spec.dim, spec.nu, truncation
    side = 2 * m + 1
    shape = (dim,) + (side,) * dim
    damping = -nu * squared_norms(dim, m)[None]

    def rhs(t, y):
        u = y.reshape(shape)
        du = damping * u + sc.bilinear_array(u, m, u, m, dim, m)
        if spec.forcing:
            du = du + _forcing_array(spec, t, m)
        return du.ravel()

    u0 = sc.truncate_array(spec.datum.coeffs, dim, spec.datum.truncation, m)
    times = _sample_times(horizon, samples) if times is None else times
    app_logger.info(f"Galerkin evolution: d={dim} M={m} nu={nu} T_a={horizon} samples={times.size}")
    result = march(rhs, 0.0, np.asarray(u0, dtype=np.complex128).ravel(), horizon, rtol, atol, t_eval=times)

    stopped_early = not result.completed
    t_a = horizon
    if stopped_early:
        t_a = result.t_last
        app_logger.warning(f"Galerkin integration stopped ({result.status}: {result.message}) at t={t_a:.10g}")
    if result.t_eval.size == 0 or t_a <= 0:
        raise ValueError(f"Galerkin integration failed before the first sample: {result.message}")

    values = result.y_eval.reshape((-1,) + shape)
    derivatives = np.stack([rhs(t, y).reshape(shape) for t, y in zip(result.t_eval, result.y_eval)])
    app_logger.info(f"Galerkin evolution done: {result.steps} steps, {result.t_eval.size} samples")
    return ApproximantTrace(
        dim=dim, truncation=m, provenance="galerkin", nu=nu,
        times=result.t_eval, values=values, derivatives=derivatives,
        horizon=t_a, stopped_early=stopped_early,
        metadata={"rtol": rtol, "atol": atol, "steps": result.steps},
    )


def _product_sum(coefficients: Sequence[SpectralField], j: int) -> Optional[SpectralField]:
    """sum over i + l = j of P(u_i, u_l), None when no pair exists."""
    total = None
    for i in range(j + 1):
        l = j - i
        if i >= len(coefficients) or l >= len(coefficients):
            continue
        term = sc.bilinear_p(coefficients[i], coefficients[l])
        total = term if total is None else sc.field_axpy(1.0, term, total)
    return total


def _forcing_term(forcing: Sequence[SpectralField], j: int, dim: int) -> SpectralField:
    return forcing[j] if j < len(forcing) else SpectralField.zeros(dim)


def taylor_coefficients(
    u0: SpectralField,
    forcing: Sequence[SpectralField],
    order: int,
    nu: float = 0.0,
) -> TaylorCoefficients:
    """u_(j+1) = (sum_(i+l=j) P(u_i, u_l) + f_j) / (j + 1), so e(ua) = O(t^N)."""
    if nu != 0:
        raise ValueError("The time-Taylor approximant is defined for nu = 0 only")
    if order < 0:
        raise ValueError(f"Taylor order must be nonnegative, got {order}")
    for term in forcing:
        if term.dim != u0.dim:
            raise ValueError("Forcing dimension does not match the datum")

    coefficients = [u0]
    for j in range(order):
        source = sc.field_axpy(1.0, _product_sum(coefficients, j), _forcing_term(forcing, j, u0.dim))
        coefficients.append(sc.field_scale(1.0 / (j + 1), source))
    return TaylorCoefficients(order=order, coefficients=coefficients)


def taylor_residual_coefficients(
    taylor: TaylorCoefficients,
    forcing: Sequence[SpectralField],
    nu: float = 0.0,
) -> List[SpectralField]:
    """Time-power coefficients of e(ua) for ua = sum_j t^j u_j, as exact polynomial algebra."""
    u = taylor.coefficients
    top = max(2 * taylor.order, len(forcing) - 1)
    residual = []
    for j in range(top + 1):
        term = SpectralField.zeros(taylor.dim)
        if j + 1 < len(u):
            term = sc.field_axpy(j + 1.0, u[j + 1], term)
        if j < len(u) and nu:
            term = sc.field_axpy(-nu, sc.laplacian(u[j]), term)
        products = _product_sum(u, j)
        if products is not None:
            term = sc.field_axpy(-1.0, products, term)
        term = sc.field_axpy(-1.0, _forcing_term(forcing, j, taylor.dim), term)
        residual.append(term)
    return residual


def taylor_trace(taylor: TaylorCoefficients, horizon: float, samples: Optional[int] = None) -> ApproximantTrace:
    dim, m = taylor.dim, taylor.truncation
    stacked = np.stack([sc.pad_array(c.coeffs, dim, c.truncation, m) for c in taylor.coefficients])
    times = _sample_times(horizon, samples)
    powers = np.arange(taylor.order + 1)

    def evaluate(weights: np.ndarray) -> np.ndarray:
        return np.tensordot(weights, stacked, axes=1)

    values = np.stack([evaluate(t ** powers) for t in times])
    slopes = []
    for t in times:
        weights = np.zeros(powers.size)
        weights[1:] = powers[1:] * t ** (powers[1:] - 1)
        slopes.append(evaluate(weights))
    return ApproximantTrace(
        dim=dim, truncation=m, provenance="taylor", nu=0.0,
        times=times, values=values, derivatives=np.stack(slopes), horizon=horizon,
        metadata={"N": taylor.order},
    )


def differential_error(ua: SpectralField, dua: SpectralField, t: float, spec: ProblemSpec) -> SpectralField:
    """e(ua)(t) = dua/dt - nu Lap ua - P(ua, ua) - f(t), evaluated exactly on the needed modes."""
    if ua.dim != spec.dim or dua.dim != spec.dim:
        raise ValueError(f"Dimension mismatch: fields of dimension {ua.dim}/{dua.dim}, problem of dimension {spec.dim}")
    error = sc.field_axpy(-spec.nu, sc.laplacian(ua), dua)
    error = sc.field_axpy(-1.0, sc.bilinear_p(ua, ua), error)
    return sc.field_axpy(-1.0, forcing_at(spec, t), error)


def tautological_estimators(
    trace: ApproximantTrace,
    spec: ProblemSpec,
    orders: Optional[Sequence[float]] = None,
    workers: Optional[int] = None,
) -> EstimatorSet:
    orders = sorted({float(q) for q in (orders if orders is not None else required_orders(spec))})
    for q in spec.bound_orders:
        if q not in orders:
            raise ValueError(f"Order {q} is required by the problem but was not requested")
        if q + 1.0 not in orders:
            raise ValueError(f"Order {q} lacks its growth partner {q + 1.0}")
    workers = workers or settings.THREADS

    def sample(index: int):
        ua = trace.field(index)
        error = differential_error(ua, trace.derivative(index), float(trace.times[index]), spec)
        eps = sc.sobolev_norms_array(error.coeffs, error.dim, error.truncation, orders)
        growth = sc.sobolev_norms_array(ua.coeffs, ua.dim, ua.truncation, orders)
        return eps, growth

    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        rows = list(pool.map(sample, range(trace.size)))

    datum_error = sc.field_axpy(-1.0, spec.datum, trace.field(0))
    delta = sc.sobolev_norms_array(datum_error.coeffs, datum_error.dim, datum_error.truncation, orders)
    estimators = EstimatorSet(
        base_order=float(spec.n),
        orders=orders,
        times=np.asarray(trace.times, dtype=float),
        eps={q: np.array([row[0][q] for row in rows]) for q in orders},
        delta=delta,
        growth={q: np.array([row[1][q] for row in rows]) for q in orders},
        horizon=trace.horizon,
    )
    app_logger.info(
        f"Estimators for {trace.provenance} trace: max eps_{spec.n}={np.max(estimators.eps[float(spec.n)]):.3e}, "
        f"delta_{spec.n}={estimators.delta[float(spec.n)]:.3e}"
    )
    return estimators
