import math
from typing import Callable, Dict, List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, PrivateAttr, field_serializer, model_validator


def _order_key(q: float) -> float:
    return float(q)


class EstimatorSet(BaseModel):
    """
    Differential, datum and growth estimators eps_q, delta_q, D_q sampled on a time grid.
    Between samples the estimators are linearly interpolated (not inflated).
    """

    model_config = ConfigDict(arbitrary_types_allowed=True)

    base_order: float
    orders: List[float]
    times: np.ndarray
    eps: Dict[float, np.ndarray]
    delta: Dict[float, float]
    growth: Dict[float, np.ndarray]
    horizon: float = Field(gt=0.0)

    @model_validator(mode="after")
    def check_samples(self) -> "EstimatorSet":
        times = np.asarray(self.times, dtype=float)
        if times.ndim != 1 or times.size == 0:
            raise ValueError("Estimator times must be a nonempty 1-d array")
        if times.size > 1 and np.any(np.diff(times) <= 0):
            raise ValueError("Estimator times must be strictly increasing")
        for name, table in (("eps", self.eps), ("growth", self.growth)):
            for q, values in table.items():
                values = np.asarray(values, dtype=float)
                if values.shape != times.shape:
                    raise ValueError(f"{name}[{q}] does not match the time grid")
                if not np.all(np.isfinite(values)) or np.any(values < 0):
                    raise ValueError(f"{name}[{q}] must be finite and nonnegative")
        for q, value in self.delta.items():
            if not value >= 0 or not math.isfinite(value):
                raise ValueError(f"delta[{q}] must be finite and nonnegative")
        return self

    @classmethod
    def constant(
        cls,
        base_order: float,
        orders: List[float],
        horizon: float,
        eps: Dict[float, float],
        delta: Dict[float, float],
        growth: Dict[float, float],
    ) -> "EstimatorSet":
        times = np.array([0.0, float(horizon)])
        return cls(
            base_order=base_order,
            orders=orders,
            times=times,
            eps={_order_key(q): np.full(2, float(v)) for q, v in eps.items()},
            delta={_order_key(q): float(v) for q, v in delta.items()},
            growth={_order_key(q): np.full(2, float(v)) for q, v in growth.items()},
            horizon=horizon,
        )

    def _sampler(self, table: Dict[float, np.ndarray], q: float, name: str) -> Callable[[float], float]:
        key = _order_key(q)
        if key not in table:
            raise KeyError(f"No {name} estimator of order {q}")
        values = np.asarray(table[key], dtype=float)
        times = np.asarray(self.times, dtype=float)
        if times.size == 1:
            return lambda t: float(values[0])
        return lambda t: float(np.interp(t, times, values))

    def eps_at(self, q: float) -> Callable[[float], float]:
        return self._sampler(self.eps, q, "differential error")

    def growth_at(self, q: float) -> Callable[[float], float]:
        return self._sampler(self.growth, q, "growth")

    def delta_of(self, q: float) -> float:
        key = _order_key(q)
        if key not in self.delta:
            raise KeyError(f"No datum error estimator of order {q}")
        return float(self.delta[key])

    def eps_vanishes(self, q: float) -> bool:
        return not np.any(np.asarray(self.eps[_order_key(q)]))


class ControlCurve(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True)

    order: float
    bound: np.ndarray
    exponent: np.ndarray


class ControlSolution(BaseModel):
    """Bound curves R_n, R_p on a grid inside [0, T_c) and the certified horizon T_c."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    base_order: float
    t_c: float
    times: np.ndarray
    r_n: np.ndarray
    curves: Dict[float, ControlCurve] = Field(default_factory=dict)
    constants_used: Dict[str, float] = Field(default_factory=dict)
    tolerances: Dict[str, float] = Field(default_factory=dict)
    blew_up: bool = False
    blowup_time_estimate: Optional[float] = None
    closed_form: bool = False
    stop_reason: str = "horizon"

    _rn_function: Optional[Callable[[float], float]] = PrivateAttr(default=None)

    @field_serializer("t_c")
    def serialize_t_c(self, value: float):
        return "inf" if math.isinf(value) else value

    @property
    def certified_globally(self) -> bool:
        return math.isinf(self.t_c)

    def rn_at(self, t: float) -> float:
        if self._rn_function is not None:
            return float(self._rn_function(t))
        return float(np.interp(t, self.times, self.r_n))

    def bound_for(self, q: float) -> np.ndarray:
        if float(q) == float(self.base_order):
            return self.r_n
        return self.curves[float(q)].bound
