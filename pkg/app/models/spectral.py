from functools import lru_cache
from typing import Dict, Iterator, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from app.core.config import settings

WaveVector = Tuple[int, ...]


@lru_cache(maxsize=32)
def lattice(dim: int, truncation: int) -> np.ndarray:
    """
    Integer wave vectors of the centered cube |k|_inf <= M, shape (dim, 2M+1, ..., 2M+1).
    Entry [:, i_1, ..., i_d] is the wave vector (i_1 - M, ..., i_d - M).
    """
    axis = np.arange(-truncation, truncation + 1)
    grid = np.stack(np.meshgrid(*([axis] * dim), indexing="ij"))
    grid.setflags(write=False)
    return grid


@lru_cache(maxsize=32)
def squared_norms(dim: int, truncation: int) -> np.ndarray:
    k2 = np.sum(lattice(dim, truncation) ** 2, axis=0)
    k2.setflags(write=False)
    return k2


def reflect(coeffs: np.ndarray) -> np.ndarray:
    """Coefficient array evaluated at -k (reverses every spatial axis)."""
    spatial = tuple(range(1, coeffs.ndim))
    return np.flip(coeffs, axis=spatial)


def is_canonical(k: Sequence[int]) -> bool:
    for component in k:
        if component != 0:
            return component > 0
    return False


class SpectralField(BaseModel):
    """
    Truncated Fourier coefficients of a real, divergence-free, mean-zero vector field on T^d.

    The field is v(x) = (2 pi)^(-d/2) sum_k c_k exp(i k.x); coefficients are stored on the
    centered cube |k|_inf <= truncation, one complex array per component.
    """

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    dim: int = Field(ge=2)
    truncation: int = Field(ge=0)
    coeffs: np.ndarray

    @field_validator("coeffs", mode="before")
    @classmethod
    def freeze_coeffs(cls, value) -> np.ndarray:
        array = np.array(value, dtype=np.complex128, copy=True)
        array.setflags(write=False)
        return array

    @model_validator(mode="after")
    def check_invariants(self) -> "SpectralField":
        side = 2 * self.truncation + 1
        expected = (self.dim,) + (side,) * self.dim
        if self.coeffs.shape != expected:
            raise ValueError(f"Coefficient shape {self.coeffs.shape} does not match {expected}")

        scale = float(np.max(np.abs(self.coeffs))) if self.coeffs.size else 0.0
        if scale == 0.0:
            return self
        tol = settings.FIELD_TOLERANCE * scale

        center = (slice(None),) + (self.truncation,) * self.dim
        if np.max(np.abs(self.coeffs[center])) > tol:
            raise ValueError("Field has a nonzero mean (mode k=0)")
        divergence, reality = invariant_defects(self)
        if divergence > tol:
            raise ValueError(f"Field is not divergence free (max |k.c_k| = {divergence:.3e})")
        if reality > tol:
            raise ValueError(f"Field violates c_(-k) = conj(c_k) (defect {reality:.3e})")
        return self

    @classmethod
    def zeros(cls, dim: int, truncation: int = 0) -> "SpectralField":
        side = 2 * truncation + 1
        return cls(dim=dim, truncation=truncation, coeffs=np.zeros((dim,) + (side,) * dim, dtype=np.complex128))

    @classmethod
    def from_arithmetic(cls, dim: int, truncation: int, coeffs: np.ndarray) -> "SpectralField":
        """
        Field computed from valid fields (linear combinations, products, projections).
        Its invariant defects are roundoff of the operands, not of the result, so the
        array is symmetrized and its mean dropped instead of checked against its own size.
        """
        side = 2 * truncation + 1
        expected = (dim,) + (side,) * dim
        array = np.asarray(coeffs, dtype=np.complex128)
        if array.shape != expected:
            raise ValueError(f"Coefficient shape {array.shape} does not match {expected}")
        array = 0.5 * (array + np.conj(reflect(array)))
        array[(slice(None),) + (truncation,) * dim] = 0.0
        array.setflags(write=False)
        return cls.model_construct(dim=dim, truncation=truncation, coeffs=array)

    @classmethod
    def from_modes(
        cls,
        dim: int,
        modes: Mapping[WaveVector, Sequence[complex]],
        truncation: Optional[int] = None,
    ) -> "SpectralField":
        """
        Build a field from explicit coefficients {k: c_k}.
        Missing partners -k are filled with conj(c_k); given partners must agree.
        """
        keys = [tuple(int(x) for x in k) for k in modes]
        for k in keys:
            if len(k) != dim:
                raise ValueError(f"Wave vector {k} does not have dimension {dim}")
        needed = max((max(abs(x) for x in k) for k in keys), default=0)
        truncation = needed if truncation is None else truncation
        if needed > truncation:
            raise ValueError(f"Mode with |k|_inf = {needed} exceeds truncation {truncation}")

        side = 2 * truncation + 1
        coeffs = np.zeros((dim,) + (side,) * dim, dtype=np.complex128)
        given: Dict[WaveVector, np.ndarray] = {}
        for k, value in zip(keys, modes.values()):
            vec = np.asarray(value, dtype=np.complex128)
            if vec.shape != (dim,):
                raise ValueError(f"Coefficient at {k} must have {dim} components")
            given[k] = vec

        for k, vec in given.items():
            minus = tuple(-x for x in k)
            if minus in given and not np.allclose(given[minus], np.conj(vec), rtol=0.0, atol=settings.FIELD_TOLERANCE * max(1.0, float(np.max(np.abs(vec))))):
                raise ValueError(f"Coefficients at {k} and {minus} are not complex conjugate")
            coeffs[(slice(None),) + tuple(x + truncation for x in k)] = vec
            if minus not in given:
                coeffs[(slice(None),) + tuple(x + truncation for x in minus)] = np.conj(vec)

        return cls(dim=dim, truncation=truncation, coeffs=coeffs)

    @property
    def side(self) -> int:
        return 2 * self.truncation + 1

    def coefficient(self, k: Sequence[int]) -> np.ndarray:
        if len(k) != self.dim:
            raise ValueError(f"Wave vector {tuple(k)} does not have dimension {self.dim}")
        if max(abs(x) for x in k) > self.truncation:
            return np.zeros(self.dim, dtype=np.complex128)
        return np.array(self.coeffs[(slice(None),) + tuple(x + self.truncation for x in k)])

    def support(self) -> np.ndarray:
        return np.any(self.coeffs != 0, axis=0)

    def canonical_modes(self) -> Iterator[Tuple[WaveVector, np.ndarray]]:
        """Nonzero modes with lexicographically positive leading entry, in array order."""
        waves = lattice(self.dim, self.truncation)
        for index in zip(*np.nonzero(self.support())):
            k = tuple(int(waves[(axis,) + index]) for axis in range(self.dim))
            if is_canonical(k):
                yield k, np.array(self.coeffs[(slice(None),) + index])

    def to_json_dict(self) -> dict:
        modes: List[dict] = []
        for k, vec in self.canonical_modes():
            modes.append({
                "k": list(k),
                "re": [float(x) for x in vec.real],
                "im": [float(x) for x in vec.imag],
            })
        return {"dim": self.dim, "truncation": self.truncation, "modes": modes}

    @classmethod
    def from_json_dict(cls, data: Mapping) -> "SpectralField":
        dim = int(data["dim"])
        modes = {
            tuple(entry["k"]): np.asarray(entry["re"], dtype=float) + 1j * np.asarray(entry["im"], dtype=float)
            for entry in data.get("modes", [])
        }
        return cls.from_modes(dim, modes, truncation=data.get("truncation"))


def invariant_defects(field: SpectralField) -> Tuple[float, float]:
    """(max_k |k.c_k|, max_k |c_(-k) - conj(c_k)|) for a field."""
    waves = lattice(field.dim, field.truncation)
    divergence = np.abs(np.sum(waves * field.coeffs, axis=0))
    reality = np.abs(reflect(field.coeffs) - np.conj(field.coeffs))
    return float(np.max(divergence)), float(np.max(reality))


class ProblemSpec(BaseModel):
    """Cauchy problem data: viscosity, orders, datum, polynomial-in-time forcing sum_j t^j f_j."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    dim: int = Field(ge=2)
    nu: float = Field(ge=0.0)
    n: float
    orders: List[float] = Field(default_factory=list)
    datum: SpectralField
    forcing: List[SpectralField] = Field(default_factory=list)
    t_max: float = Field(default_factory=lambda: settings.DEFAULT_T_MAX, gt=0.0)

    @model_validator(mode="after")
    def check_orders(self) -> "ProblemSpec":
        if not self.n > self.dim / 2 + 1:
            raise ValueError(f"Base order n={self.n} must exceed d/2 + 1 = {self.dim / 2 + 1}")
        for p in self.orders:
            if p < self.n:
                raise ValueError(f"Bound order p={p} is below the base order n={self.n}")
        if self.datum.dim != self.dim:
            raise ValueError("Datum dimension does not match the problem dimension")
        for term in self.forcing:
            if term.dim != self.dim:
                raise ValueError("Forcing dimension does not match the problem dimension")
        return self

    @property
    def bound_orders(self) -> List[float]:
        """Base order followed by the distinct requested orders above it."""
        result = [float(self.n)]
        for p in self.orders:
            if float(p) not in result:
                result.append(float(p))
        return result

    @property
    def forcing_is_zero(self) -> bool:
        return all(not np.any(term.coeffs) for term in self.forcing)
