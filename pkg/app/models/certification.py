import math
from typing import Any, Dict, List, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, PrivateAttr, field_serializer, model_validator

from app.core.config import settings
from app.models.constants import ConstantTable


# ---------- problem configuration ----------

class ModeSpec(BaseModel):
    k: List[int]
    re: List[float]
    im: Optional[List[float]] = None


class NormTarget(BaseModel):
    order: float
    value: float = Field(ge=0.0)


class DatumSpec(BaseModel):
    kind: Literal["explicit", "taylor_green", "random_band"]
    amplitude: float = 1.0
    modes: List[ModeSpec] = Field(default_factory=list)
    project: bool = False
    truncation: Optional[int] = Field(default=None, ge=0)
    k_min: float = 1.0
    k_max: float = 2.0
    decay: float = 0.0
    seed: Optional[int] = None
    norm_target: Optional[NormTarget] = None


class ForcingSpec(BaseModel):
    """f(t) = sum_j t^j f_j with f_j given as explicit mode lists."""

    taylor: List[List[ModeSpec]] = Field(default_factory=list)
    project: bool = False


class ApproximantSpec(BaseModel):
    kind: Literal["zero", "galerkin", "taylor"] = "zero"
    M: Optional[int] = Field(default=None, ge=1)
    N: Optional[int] = Field(default=None, ge=0)
    T_a: Optional[float] = Field(default=None, gt=0.0)
    samples: Optional[int] = Field(default=None, ge=2)

    @model_validator(mode="after")
    def check_resolution(self) -> "ApproximantSpec":
        if self.kind == "galerkin" and self.M is None:
            raise ValueError("A Galerkin approximant needs the truncation M")
        if self.kind == "taylor" and self.N is None:
            raise ValueError("A time-Taylor approximant needs the order N")
        return self


class ConstantsSpec(BaseModel):
    H: Optional[int] = Field(default=None, gt=0)
    Kmax: Optional[int] = Field(default=None, gt=0)
    tail_margin: Optional[float] = Field(default=None, ge=1.0)
    cache_path: Optional[str] = None
    allow_compute: bool = True

    @property
    def uses_cache_only(self) -> bool:
        return self.cache_path is not None and self.H is None and self.Kmax is None


class ValidationSpec(BaseModel):
    ref_M: int = Field(ge=1)
    rtol: Optional[float] = None
    atol: Optional[float] = None


class CertifyConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")

    dim: int = Field(ge=2)
    nu: float = Field(ge=0.0)
    n: float
    orders: List[float] = Field(default_factory=list)
    datum: DatumSpec
    forcing: Union[Literal["zero"], ForcingSpec] = "zero"
    approximant: ApproximantSpec = Field(default_factory=ApproximantSpec)
    constants: ConstantsSpec = Field(default_factory=ConstantsSpec)
    T_max: float = Field(default_factory=lambda: settings.DEFAULT_T_MAX, gt=0.0)
    seed: Optional[int] = None
    out_dir: Optional[str] = None
    validation: Optional[ValidationSpec] = None
    save_trace: bool = False

    @model_validator(mode="after")
    def check_orders(self) -> "CertifyConfig":
        if not self.n > self.dim / 2 + 1:
            raise ValueError(f"Base order n={self.n} must exceed d/2 + 1 = {self.dim / 2 + 1}")
        for p in self.orders:
            if p < self.n:
                raise ValueError(f"Bound order p={p} is below the base order n={self.n}")
        if self.approximant.kind == "taylor" and self.nu != 0:
            raise ValueError("The time-Taylor approximant requires nu = 0")
        if (
            self.validation is not None
            and self.approximant.kind == "galerkin"
            and self.validation.ref_M <= self.approximant.M
        ):
            raise ValueError(
                f"Reference truncation ref_M={self.validation.ref_M} must exceed the approximant truncation "
                f"M={self.approximant.M}"
            )
        return self


# ---------- report ----------

class ValidationBlock(BaseModel):
    reference_M: int
    reference_rtol: float
    reference_atol: float
    slack: float
    times: List[float]
    ratios: Dict[str, List[float]]
    max_ratio: Dict[str, float]
    passed: bool
    # distances reduced by steps * (rtol ||.||_q + atol (d sum |k|^2q)^(1/2)) of both runs
    floors: Dict[str, List[float]] = Field(default_factory=dict)
    adjusted_ratios: Dict[str, List[float]] = Field(default_factory=dict)
    adjusted_max_ratio: Dict[str, float] = Field(default_factory=dict)
    reference_stopped_early: bool = False
    caveat: str = (
        "The reference is itself a Galerkin approximation, so ratios are a numerical check of the bounds, "
        "not a proof. Where bounds fall below integrator noise the integration-adjusted ratios are the "
        "meaningful diagnostic."
    )


class CertificationReport(BaseModel):
    """Outcome of one pipeline run. Timings and curve samples are kept out of the JSON body."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    status: Literal["complete", "partial"] = "complete"
    error: Optional[str] = None
    problem: Dict[str, Any]
    approximant: Dict[str, Any] = Field(default_factory=dict)
    constants: Optional[ConstantTable] = None
    t_c: Optional[float] = None
    certified: Optional[str] = None
    blew_up: bool = False
    blowup_time_estimate: Optional[float] = None
    control: Dict[str, Any] = Field(default_factory=dict)
    delta: Dict[str, float] = Field(default_factory=dict)
    closed_form_check: Optional[Dict[str, Any]] = None
    validation: Optional[ValidationBlock] = None
    caveats: List[str] = Field(default_factory=list)
    files: Dict[str, str] = Field(default_factory=dict)

    _solution: Any = PrivateAttr(default=None)
    _estimators: Any = PrivateAttr(default=None)
    _trace: Any = PrivateAttr(default=None)
    _timings: Dict[str, float] = PrivateAttr(default_factory=dict)

    @field_serializer("t_c")
    def serialize_t_c(self, value: Optional[float]):
        if value is not None and math.isinf(value):
            return "inf"
        return value

    @property
    def solution(self):
        return self._solution

    @property
    def estimators(self):
        return self._estimators

    @property
    def trace(self):
        return self._trace

    @property
    def timings(self) -> Dict[str, float]:
        return self._timings
