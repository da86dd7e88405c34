from typing import Optional

import numpy as np

from app.models.certification import DatumSpec, ForcingSpec
from app.models.spectral import SpectralField, squared_norms
from app.services import spectral_core as sc


class DatumFactory:
    @staticmethod
    def _modes_to_dict(modes):
        return {tuple(m.k): np.asarray(m.re, dtype=float) + 1j * np.asarray(m.im or [0.0] * len(m.re), dtype=float) for m in modes}

    @staticmethod
    def explicit(dim: int, modes: list, project: bool = False, truncation: Optional[int] = None) -> SpectralField:
        raw = DatumFactory._modes_to_dict(modes)
        if project:
            field = sc.leray_project(raw, dim)
            return field if truncation is None else sc.pad(field, max(truncation, field.truncation))
        return SpectralField.from_modes(dim, raw, truncation=truncation)

    @staticmethod
    def taylor_green(dim: int, amplitude: float = 1.0) -> SpectralField:
        """
        d=3: A (sin x cos y cos z, -cos x sin y cos z, 0);  d=2: A (sin x cos y, -cos x sin y).
        Coefficients live on k in {-1, 1}^d.
        """
        if dim not in (2, 3):
            raise ValueError(f"Taylor-Green datum is defined for d=2 and d=3, got d={dim}")
        scale = (2.0 * np.pi) ** (dim / 2.0) * amplitude / 2 ** dim
        modes = {}
        for signs in np.ndindex(*(2,) * dim):
            s = tuple(1 if bit else -1 for bit in signs)
            vec = np.zeros(dim, dtype=np.complex128)
            vec[0] = -1j * s[0] * scale
            vec[1] = 1j * s[1] * scale
            modes[s] = vec
        return SpectralField.from_modes(dim, modes)

    @staticmethod
    def random_band(
        dim: int,
        k_min: float,
        k_max: float,
        seed: Optional[int] = None,
        amplitude: float = 1.0,
        decay: float = 0.0,
    ) -> SpectralField:
        """Gaussian coefficients on the shell k_min <= |k| <= k_max, weighted by |k|^-decay and projected."""
        if not 0 < k_min <= k_max:
            raise ValueError(f"Invalid shell [{k_min}, {k_max}]")
        truncation = int(np.floor(k_max))
        rng = np.random.default_rng(seed)
        shape = (dim,) + (2 * truncation + 1,) * dim
        raw = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)

        k_norm = np.sqrt(squared_norms(dim, truncation))
        shell = (k_norm >= k_min) & (k_norm <= k_max)
        weight = np.where(shell, np.where(k_norm > 0, k_norm, 1.0) ** (-decay), 0.0)
        field = sc.project_coefficients(amplitude * weight[None] * raw, dim, truncation)
        if not np.any(field.coeffs):
            raise ValueError(f"Shell [{k_min}, {k_max}] contains no admissible wave vector")
        return field

    @staticmethod
    def rescale(field: SpectralField, order: float, value: float) -> SpectralField:
        current = sc.sobolev_norm(field, order)
        if current == 0:
            if value == 0:
                return field
            raise ValueError("Cannot rescale the zero field to a nonzero norm")
        return sc.field_scale(value / current, field)

    @staticmethod
    def build(spec: DatumSpec, dim: int, seed: Optional[int] = None) -> SpectralField:
        if spec.kind == "explicit":
            field = DatumFactory.explicit(dim, spec.modes, spec.project, spec.truncation)
        elif spec.kind == "taylor_green":
            field = DatumFactory.taylor_green(dim, spec.amplitude)
        elif spec.kind == "random_band":
            field = DatumFactory.random_band(
                dim, spec.k_min, spec.k_max,
                seed=spec.seed if spec.seed is not None else seed,
                amplitude=spec.amplitude, decay=spec.decay,
            )
        else:
            raise ValueError(f"Unknown datum kind: {spec.kind}")

        if spec.norm_target is not None:
            field = DatumFactory.rescale(field, spec.norm_target.order, spec.norm_target.value)
        return field

    @staticmethod
    def forcing(spec, dim: int) -> list:
        """Polynomial-in-time forcing terms f_0, f_1, ...; "zero" gives no terms."""
        if spec is None or spec == "zero":
            return []
        if not isinstance(spec, ForcingSpec):
            raise ValueError(f"Unsupported forcing specification: {spec!r}")
        return [DatumFactory.explicit(dim, term, project=spec.project) for term in spec.taylor]

