"""
Step-by-step driver around scipy's Dormand-Prince 5(4) pair (RK45).

Running the stepper by hand lets callers check a value cap and a step-collapse rule after
every accepted step, and keeps the dense output of every accepted step.
"""

from typing import Callable, List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.integrate import RK45, OdeSolution

from app.core.config import settings


class MarchResult(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    t_eval: np.ndarray
    y_eval: np.ndarray
    t_last: float
    y_last: np.ndarray
    status: str
    steps: int
    dense: Optional[OdeSolution] = None
    message: str = ""
    step_sizes: List[float] = Field(default_factory=list)

    @property
    def completed(self) -> bool:
        return self.status == "completed"


def march(
    fun: Callable[[float, np.ndarray], np.ndarray],
    t0: float,
    y0: np.ndarray,
    t_bound: float,
    rtol: float,
    atol: float,
    t_eval: Optional[np.ndarray] = None,
    cap: Optional[float] = None,
    min_step_ratio: Optional[float] = None,
    keep_dense: bool = False,
) -> MarchResult:
    """
    Integrate y' = fun(t, y) from t0 towards t_bound.

    status is "completed", "cap" (max |y| exceeded cap after an accepted step),
    "collapse" (step below min_step_ratio * (t_bound - t0), or scipy gave up) or
    "nonfinite" (the right-hand side produced inf/nan).
    """
    min_step_ratio = settings.STEP_COLLAPSE_RATIO if min_step_ratio is None else min_step_ratio
    y0 = np.asarray(y0)
    t_eval = np.asarray([] if t_eval is None else t_eval, dtype=float)
    min_step = min_step_ratio * abs(t_bound - t0)

    outputs: List[np.ndarray] = []
    reached: List[float] = []
    cursor = 0
    while cursor < t_eval.size and t_eval[cursor] <= t0:
        reached.append(float(t_eval[cursor]))
        outputs.append(np.array(y0))
        cursor += 1

    if t_bound <= t0:
        y_eval = np.array(outputs) if outputs else np.empty((0,) + y0.shape, dtype=y0.dtype)
        return MarchResult(
            t_eval=np.array(reached), y_eval=y_eval, t_last=float(t0), y_last=y0, status="completed", steps=0,
        )

    solver = RK45(fun, t0, y0, t_bound, rtol=rtol, atol=atol)
    interpolants = []
    ts = [t0]
    status = "completed"
    message = ""
    steps = 0
    step_sizes: List[float] = []

    while solver.status == "running":
        t_prev = solver.t
        message = solver.step() or ""
        if solver.status == "failed":
            status = "collapse"
            break
        if not np.all(np.isfinite(solver.y)):
            status, message = "nonfinite", "non-finite state"
            break

        steps += 1
        step = solver.t - t_prev
        step_sizes.append(step)
        interpolant = solver.dense_output()
        if keep_dense:
            interpolants.append(interpolant)
            ts.append(solver.t)

        while cursor < t_eval.size and t_eval[cursor] <= solver.t:
            reached.append(float(t_eval[cursor]))
            outputs.append(interpolant(t_eval[cursor]))
            cursor += 1

        if cap is not None and np.max(np.abs(solver.y)) > cap:
            status = "cap"
            break
        if solver.status == "running" and step < min_step:
            status, message = "collapse", f"step {step:.3e} below {min_step:.3e}"
            break

    dense = OdeSolution(ts, interpolants) if keep_dense and interpolants else None
    y_eval = np.array(outputs) if outputs else np.empty((0,) + y0.shape, dtype=y0.dtype)
    return MarchResult(
        t_eval=np.array(reached),
        y_eval=y_eval,
        t_last=float(solver.t),
        y_last=np.array(solver.y),
        status=status,
        steps=steps,
        dense=dense,
        message=message,
        step_sizes=step_sizes,
    )
