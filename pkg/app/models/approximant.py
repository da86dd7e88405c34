from typing import Dict, List, Literal

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from app.models.spectral import SpectralField

Provenance = Literal["zero", "galerkin", "taylor"]


class ApproximantTrace(BaseModel):
    """
    Samples of an approximate solution ua and of dua/dt on a common cube |k|_inf <= truncation.
    values and derivatives have shape (samples, dim, side, ..., side).
    """

    model_config = ConfigDict(arbitrary_types_allowed=True)

    dim: int = Field(ge=2)
    truncation: int = Field(ge=0)
    provenance: Provenance
    nu: float = Field(default=0.0, ge=0.0)
    times: np.ndarray
    values: np.ndarray
    derivatives: np.ndarray
    horizon: float = Field(gt=0.0)
    stopped_early: bool = False
    metadata: Dict[str, float] = Field(default_factory=dict)

    @model_validator(mode="after")
    def check_samples(self) -> "ApproximantTrace":
        times = np.asarray(self.times, dtype=float)
        if times.ndim != 1 or times.size == 0:
            raise ValueError("A trace needs at least one sample time")
        if np.any(np.diff(times) <= 0):
            raise ValueError("Trace sample times must be strictly increasing")
        if times[0] < 0 or times[-1] > self.horizon:
            raise ValueError("Trace sample times must lie in [0, T_a]")
        side = 2 * self.truncation + 1
        expected = (times.size, self.dim) + (side,) * self.dim
        for name in ("values", "derivatives"):
            if getattr(self, name).shape != expected:
                raise ValueError(f"Trace {name} have shape {getattr(self, name).shape}, expected {expected}")
        return self

    @property
    def size(self) -> int:
        return int(self.times.size)

    def field(self, index: int) -> SpectralField:
        return SpectralField.from_arithmetic(self.dim, self.truncation, self.values[index])

    def derivative(self, index: int) -> SpectralField:
        return SpectralField.from_arithmetic(self.dim, self.truncation, self.derivatives[index])

    def header(self) -> dict:
        return {
            "d": self.dim,
            "M": self.truncation,
            "nu": self.nu,
            "provenance": self.provenance,
            "T_a": self.horizon,
            "samples": self.size,
            "stopped_early": self.stopped_early,
            **self.metadata,
        }


class TaylorCoefficients(BaseModel):
    """ua(t) = sum_j t^j u_j for j = 0..order; u_0 is the datum."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    order: int = Field(ge=0)
    coefficients: List[SpectralField]

    @model_validator(mode="after")
    def check_length(self) -> "TaylorCoefficients":
        if len(self.coefficients) != self.order + 1:
            raise ValueError(f"Order {self.order} needs {self.order + 1} coefficients, got {len(self.coefficients)}")
        dims = {c.dim for c in self.coefficients}
        if len(dims) != 1:
            raise ValueError("Taylor coefficients must share one dimension")
        return self

    @property
    def dim(self) -> int:
        return self.coefficients[0].dim

    @property
    def truncation(self) -> int:
        return max(c.truncation for c in self.coefficients)
