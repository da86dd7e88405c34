from typing import Dict, List, Tuple

from pydantic import BaseModel, ConfigDict, Field, model_validator

from app.core.config import settings


class LatticeTruncation(BaseModel):
    """Finite stand-in for the infinite lattice sums and sups; carried into every report."""

    model_config = ConfigDict(frozen=True)

    sum_radius: int = Field(default_factory=lambda: settings.CONSTANTS_SUM_RADIUS, gt=0)
    sup_radius: int = Field(default_factory=lambda: settings.CONSTANTS_SUP_RADIUS, gt=0)
    tail_margin: float = Field(default_factory=lambda: settings.CONSTANTS_TAIL_MARGIN, ge=1.0)

    @model_validator(mode="after")
    def check_radii(self) -> "LatticeTruncation":
        if self.sum_radius < 2 * self.sup_radius:
            raise ValueError(
                f"Sum radius H={self.sum_radius} must be at least twice the sup radius Kmax={self.sup_radius}"
            )
        return self


class ConstantEntry(BaseModel):
    """One (d, p, n) evaluation; this is also the layout of a cache file."""

    d: int
    p: float
    n: float
    H: int
    Kmax: int
    tail_margin: float
    K_pn: float = Field(gt=0.0)
    G_pn: float = Field(gt=0.0)
    argmax_k: Dict[str, List[int]]
    plateau: bool
    plateau_detail: Dict[str, bool] = Field(default_factory=dict)
    k_evaluated: int = 0
    # relative change of K_pn, G_pn from the half-size truncation (H//2, Kmax//2)
    refinement: Dict[str, float] = Field(default_factory=dict)
    label: str = "empirical upper estimate"

    @property
    def truncation(self) -> LatticeTruncation:
        return LatticeTruncation(sum_radius=self.H, sup_radius=self.Kmax, tail_margin=self.tail_margin)

    def matches(self, d: int, p: float, n: float, truncation: LatticeTruncation) -> bool:
        return (
            self.d == d
            and float(self.p) == float(p)
            and float(self.n) == float(n)
            and self.truncation == truncation
        )


class ConstantTable(BaseModel):
    d: int
    truncation: LatticeTruncation
    entries: List[ConstantEntry]

    def entry(self, p: float, n: float) -> ConstantEntry:
        for item in self.entries:
            if float(item.p) == float(p) and float(item.n) == float(n):
                return item
        raise KeyError(f"No constants for (p, n) = ({p}, {n}) in dimension {self.d}")

    def K(self, p: float, n: float) -> float:
        return self.entry(p, n).K_pn

    def G(self, p: float, n: float) -> float:
        return self.entry(p, n).G_pn

    def K_n(self, n: float) -> float:
        return self.K(n, n)

    def G_n(self, n: float) -> float:
        return self.G(n, n)

    @property
    def pairs(self) -> List[Tuple[float, float]]:
        return [(item.p, item.n) for item in self.entries]

    @property
    def all_plateaued(self) -> bool:
        return all(item.plateau for item in self.entries)

    @property
    def worst_refinement(self) -> float:
        changes = [value for item in self.entries for value in item.refinement.values()]
        return max(changes, default=0.0)
