"""
Control inequalities solved as equalities.

Order n (Riccati):  R_n' = -nu R_n + (G_n D_n + K_n D_(n+1)) R_n + G_n R_n^2 + eps_n,  R_n(0) = delta_n
Order p (linear):   R_p(t) = exp(-nu t + A_p(t)) (delta_p + int_0^t exp(nu s - A_p(s)) eps_p(s) ds),
                    A_p(t) = int_0^t (G_p D_p + K_p D_(p+1) + G_pn R_n)

plus the closed forms for the zero approximate solution with zero forcing.
"""

import math
from typing import Callable, Dict, Optional, Sequence

import numpy as np
from scipy import integrate

from app.core.config import settings
from app.core.errors import IntegratorError, QuadratureError
from app.core.logging_config import app_logger, error_logger
from app.models.constants import ConstantTable
from app.models.control import ControlCurve, ControlSolution, EstimatorSet
from app.services.integrators import march

SERIES_THRESHOLD = 1e-8


def e_nu(nu: float, t: float) -> float:
    """(1 - exp(-nu t)) / nu, continued by t at nu = 0."""
    if nu < 0 or t < 0:
        raise ValueError(f"e_nu needs nu >= 0 and t >= 0, got nu={nu}, t={t}")
    if nu == 0:
        return float(t)
    x = nu * t
    if x < SERIES_THRESHOLD:
        return float(t * (1.0 - x / 2.0 + x * x / 6.0))
    return float(-math.expm1(-x) / nu)


def zero_tc(nu: float, Gn: float, u0n: float) -> float:
    if Gn <= 0:
        raise ValueError(f"G_n must be positive, got {Gn}")
    if nu < 0 or u0n < 0:
        raise ValueError("nu and ||u0||_n must be nonnegative")
    if u0n == 0:
        return math.inf
    if nu > 0:
        if u0n <= nu / Gn:
            return math.inf
        return -math.log1p(-nu / (Gn * u0n)) / nu
    return 1.0 / (Gn * u0n)


def _check_before_tc(nu: float, Gn: float, u0n: float, t: float) -> None:
    t_c = zero_tc(nu, Gn, u0n)
    if t >= t_c:
        raise ValueError(f"t={t} is not below the blow-up time T_c={t_c}")


def zero_rn(nu: float, Gn: float, u0n: float, t: float) -> float:
    _check_before_tc(nu, Gn, u0n, t)
    return float(u0n * math.exp(-nu * t) / (1.0 - Gn * u0n * e_nu(nu, t)))


def zero_rp(nu: float, Gn: float, Gpn: float, u0n: float, u0p: float, t: float) -> float:
    _check_before_tc(nu, Gn, u0n, t)
    if Gpn <= 0:
        raise ValueError(f"G_pn must be positive, got {Gpn}")
    base = 1.0 - Gn * u0n * e_nu(nu, t)
    return float(u0p * math.exp(-nu * t) / base ** (Gpn / Gn))


def _zero_exponent(nu: float, Gn: float, Gpn: float, u0n: float, t: float) -> float:
    # G_pn times the integral of the closed-form R_n
    return float(-(Gpn / Gn) * math.log1p(-Gn * u0n * e_nu(nu, t)))


def zero_control_solution(
    nu: float,
    table: ConstantTable,
    n: float,
    orders: Sequence[float],
    u0_norms: Dict[float, float],
    times: np.ndarray,
) -> ControlSolution:
    """Closed-form control solution for the zero approximate solution and zero forcing."""
    Gn = table.G_n(n)
    u0n = u0_norms[float(n)]
    t_c = zero_tc(nu, Gn, u0n)
    grid = np.asarray([t for t in times if t < t_c], dtype=float)

    r_n = np.array([zero_rn(nu, Gn, u0n, t) for t in grid])
    curves: Dict[float, ControlCurve] = {}
    constants_used = {f"G_{n}": Gn, f"K_{n}": table.K_n(n)}
    for p in orders:
        if float(p) == float(n):
            continue
        Gpn = table.G(p, n)
        constants_used[f"G_{p}_{n}"] = Gpn
        curves[float(p)] = ControlCurve(
            order=float(p),
            bound=np.array([zero_rp(nu, Gn, Gpn, u0n, u0_norms[float(p)], t) for t in grid]),
            exponent=np.array([_zero_exponent(nu, Gn, Gpn, u0n, t) for t in grid]),
        )

    solution = ControlSolution(
        base_order=float(n),
        t_c=t_c,
        times=grid,
        r_n=r_n,
        curves=curves,
        constants_used=constants_used,
        blew_up=math.isfinite(t_c),
        blowup_time_estimate=t_c if math.isfinite(t_c) else None,
        closed_form=True,
        stop_reason="closed form",
    )
    solution._rn_function = lambda t: zero_rn(nu, Gn, u0n, t)
    app_logger.info(f"Closed-form control: T_c={t_c} (||u0||_{n}={u0n:.6g}, G_n={Gn:.6g}, nu={nu})")
    return solution


def solve_riccati_control(
    est: EstimatorSet,
    Kn: float,
    Gn: float,
    nu: float,
    times: Optional[np.ndarray] = None,
    t_max: Optional[float] = None,
    rtol: Optional[float] = None,
    atol: Optional[float] = None,
    cap: Optional[float] = None,
) -> ControlSolution:
    """Integrate the order-n Riccati equality; blow-up is a value cap or a collapsed step."""
    rtol = rtol or settings.RICCATI_RTOL
    atol = atol or settings.RICCATI_ATOL
    cap = cap or settings.BLOWUP_CAP
    if Gn < 0 or Kn < 0 or nu < 0:
        raise ValueError("Constants and viscosity must be nonnegative")

    n = est.base_order
    horizon = est.horizon if t_max is None else min(est.horizon, t_max)
    eps = est.eps_at(n)
    growth_n = est.growth_at(n)
    growth_n1 = est.growth_at(n + 1)
    delta = est.delta_of(n)

    def rhs(t, y):
        r = y[0]
        value = -nu * r + (Gn * growth_n(t) + Kn * growth_n1(t)) * r + Gn * r * r + eps(t)
        if not math.isfinite(value):
            raise IntegratorError(f"Non-finite Riccati right-hand side at t={t}")
        return np.array([value])

    grid = np.asarray(est.times if times is None else times, dtype=float)
    grid = grid[(grid >= 0) & (grid <= horizon)]
    result = march(rhs, 0.0, np.array([delta]), horizon, rtol, atol, t_eval=grid, cap=cap, keep_dense=True)

    if result.status == "nonfinite":
        raise IntegratorError(f"Riccati integration failed: {result.message}")

    blew_up = result.status in ("cap", "collapse")
    t_c = result.t_last if blew_up else horizon
    estimate = None
    if blew_up:
        r_last = float(result.y_last[0])
        estimate = t_c + 1.0 / (Gn * r_last) if Gn > 0 and r_last > 0 else None
        app_logger.warning(
            f"Riccati solution stopped by {result.status} at t={t_c:.10g} (R_n={r_last:.3e}); "
            f"blow-up estimate {estimate}"
        )

    keep = result.t_eval < t_c if blew_up else result.t_eval <= t_c
    samples = result.y_eval[keep, 0].real if result.y_eval.size else np.empty(0)
    solution = ControlSolution(
        base_order=float(n),
        t_c=float(t_c),
        times=result.t_eval[keep],
        r_n=np.asarray(samples, dtype=float),
        constants_used={f"G_{n}": Gn, f"K_{n}": Kn},
        tolerances={"rtol": rtol, "atol": atol, "cap": cap},
        blew_up=blew_up,
        blowup_time_estimate=estimate,
        stop_reason=result.status if blew_up else "horizon",
    )
    if result.dense is not None:
        dense = result.dense
        solution._rn_function = lambda t: float(dense(t)[0].real)
    else:
        solution._rn_function = lambda t: delta
    app_logger.info(f"Riccati control solved: T_c={t_c:.10g}, steps={result.steps}, blew_up={blew_up}")
    return solution


def _quad(fun: Callable[[float], float], a: float, b: float, breaks: np.ndarray, rtol: float, limit: int) -> float:
    if b <= a:
        return 0.0
    inner = breaks[(breaks > a) & (breaks < b)]
    out = integrate.quad(
        fun, a, b,
        epsabs=settings.RICCATI_ATOL, epsrel=rtol, limit=limit,
        points=inner if inner.size else None,
        full_output=1,
    )
    if len(out) > 3:
        error_logger.error(f"Quadrature on [{a}, {b}] did not converge: {out[3]}")
        raise QuadratureError(f"Quadrature on [{a}, {b}] did not converge: {out[3]}")
    return float(out[0])


def solve_linear_control(
    est: EstimatorSet,
    rn: ControlSolution,
    Kp: float,
    Gp: float,
    Gpn: float,
    nu: float,
    p: float,
    rtol: Optional[float] = None,
) -> ControlCurve:
    """Explicit order-p bound on the grid of the order-n solution, by adaptive Gauss-Kronrod quadrature."""
    rtol = rtol or settings.QUADRATURE_RTOL
    limit = settings.QUADRATURE_LIMIT
    times = np.asarray(rn.times, dtype=float)
    if times.size and (times[-1] > rn.t_c or (rn.blew_up and times[-1] >= rn.t_c)):
        raise ValueError(f"Grid reaches beyond T_c={rn.t_c}")

    eps = est.eps_at(p)
    growth_p = est.growth_at(p)
    growth_p1 = est.growth_at(p + 1)
    delta = est.delta_of(p)
    breaks = np.asarray(est.times, dtype=float)

    def rate(s: float) -> float:
        return Gp * growth_p(s) + Kp * growth_p1(s) + Gpn * rn.rn_at(s)

    exponent = np.zeros(times.size)
    for i in range(1, times.size):
        exponent[i] = exponent[i - 1] + _quad(rate, times[i - 1], times[i], breaks, rtol, limit)

    forcing = np.zeros(times.size)
    if not est.eps_vanishes(p):
        for i in range(1, times.size):
            t_left, a_left = times[i - 1], exponent[i - 1]

            def weighted(s: float) -> float:
                a_s = a_left + _quad(rate, t_left, s, breaks, rtol, limit)
                return math.exp(nu * s - a_s) * eps(s)

            forcing[i] = forcing[i - 1] + _quad(weighted, t_left, times[i], breaks, rtol, limit)

    bound = np.exp(-nu * times + exponent) * (delta + forcing)
    return ControlCurve(order=float(p), bound=bound, exponent=exponent)


def solve_control_system(
    est: EstimatorSet,
    table: ConstantTable,
    nu: float,
    orders: Sequence[float],
    times: Optional[np.ndarray] = None,
    t_max: Optional[float] = None,
) -> ControlSolution:
    """Riccati solve at the base order followed by one linear solve per higher order."""
    n = est.base_order
    solution = solve_riccati_control(est, table.K_n(n), table.G_n(n), nu, times=times, t_max=t_max)
    for p in orders:
        if float(p) == float(n):
            continue
        Kp, Gp, Gpn = table.K_n(p), table.G_n(p), table.G(p, n)
        solution.curves[float(p)] = solve_linear_control(est, solution, Kp, Gp, Gpn, nu, p)
        solution.constants_used.update({f"K_{p}": Kp, f"G_{p}": Gp, f"G_{p}_{n}": Gpn})
    return solution
