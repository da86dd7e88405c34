"""
Exact arithmetic on truncated Fourier representations of divergence-free, mean-zero
vector fields on the d-torus: Leray projection, Laplacian, Sobolev inner products and
norms of real order, and the Navier-Stokes bilinear map P(v, w) = -L(v . grad w).

Products are evaluated on a zero-padded periodic grid whose side exceeds the sum of the
input bands and the output band, so the discrete convolution is reproduced without
aliasing (only binary64 roundoff separates it from the double sum).
"""

from typing import Mapping, Optional, Sequence

import numpy as np
import scipy.fft

from app.core.config import settings
from app.models.spectral import SpectralField, WaveVector, lattice, reflect, squared_norms


def fourier_normalization(dim: int) -> float:
    return (2.0 * np.pi) ** (-dim / 2.0)


def _check_same_dim(v: SpectralField, w: SpectralField) -> None:
    if v.dim != w.dim:
        raise ValueError(f"Dimension mismatch: {v.dim} vs {w.dim}")


def _spatial_axes(dim: int) -> tuple:
    return tuple(range(-dim, 0))


def pad_array(coeffs: np.ndarray, dim: int, truncation: int, target: int) -> np.ndarray:
    if target == truncation:
        return coeffs
    if target < truncation:
        raise ValueError(f"Cannot pad from truncation {truncation} down to {target}")
    shift = target - truncation
    lead = coeffs.ndim - dim
    widths = [(0, 0)] * lead + [(shift, shift)] * dim
    return np.pad(coeffs, widths)


def truncate_array(coeffs: np.ndarray, dim: int, truncation: int, target: int) -> np.ndarray:
    if target >= truncation:
        return pad_array(coeffs, dim, truncation, target)
    cut = truncation - target
    window = (Ellipsis,) + (slice(cut, cut + 2 * target + 1),) * dim
    return coeffs[window]


def pad(v: SpectralField, truncation: int) -> SpectralField:
    return SpectralField.from_arithmetic(v.dim, truncation, pad_array(v.coeffs, v.dim, v.truncation, truncation))


def truncate(v: SpectralField, truncation: int) -> SpectralField:
    """Pi_M: keep the modes with |k|_inf <= truncation."""
    if truncation < 0:
        raise ValueError("Truncation must be nonnegative")
    return SpectralField.from_arithmetic(v.dim, truncation, truncate_array(v.coeffs, v.dim, v.truncation, truncation))


def _aligned(v: SpectralField, w: SpectralField):
    _check_same_dim(v, w)
    m = max(v.truncation, w.truncation)
    return m, pad_array(v.coeffs, v.dim, v.truncation, m), pad_array(w.coeffs, w.dim, w.truncation, m)


def hermitian_part(coeffs: np.ndarray) -> np.ndarray:
    """Enforce c_(-k) = conj(c_k): absent partners get the conjugate, present pairs are averaged."""
    present = np.any(coeffs != 0, axis=0)
    mirrored = np.conj(reflect(coeffs))
    filled = np.where(present[None], coeffs, mirrored)
    return 0.5 * (filled + np.conj(reflect(filled)))


def leray_array(coeffs: np.ndarray, dim: int, truncation: int) -> np.ndarray:
    waves = lattice(dim, truncation)
    k2 = squared_norms(dim, truncation)
    safe = np.where(k2 > 0, k2, 1)
    k_dot_c = np.sum(waves * coeffs, axis=0)
    projected = coeffs - waves * (k_dot_c / safe)[None]
    projected[(slice(None),) + (truncation,) * dim] = 0.0
    return projected


def leray_project(raw: Mapping[WaveVector, Sequence[complex]], dim: int) -> SpectralField:
    """
    Project raw coefficients {k: c_k} onto divergence-free, mean-zero, real fields:
    c_k -> c_k - (k.c_k) k / |k|^2, mode 0 dropped, missing -k partners filled by conjugation.
    """
    if dim < 2:
        raise ValueError(f"Dimension must be at least 2, got {dim}")
    keys = [tuple(int(x) for x in k) for k in raw]
    truncation = max((max(abs(x) for x in k) for k in keys), default=0)
    side = 2 * truncation + 1
    coeffs = np.zeros((dim,) + (side,) * dim, dtype=np.complex128)
    for k, value in zip(keys, raw.values()):
        if len(k) != dim:
            raise ValueError(f"Wave vector {k} does not have dimension {dim}")
        coeffs[(slice(None),) + tuple(x + truncation for x in k)] = np.asarray(value, dtype=np.complex128)
    return project_coefficients(coeffs, dim, truncation)


def project_coefficients(coeffs: np.ndarray, dim: int, truncation: int) -> SpectralField:
    if dim < 2:
        raise ValueError(f"Dimension must be at least 2, got {dim}")
    projected = leray_array(hermitian_part(np.asarray(coeffs, dtype=np.complex128)), dim, truncation)
    return SpectralField.from_arithmetic(dim, truncation, projected)


def sobolev_weights(dim: int, truncation: int, s: float) -> np.ndarray:
    """|k|^(2s) on the cube, zero at k = 0; computed as exp(s log |k|^2)."""
    k2 = squared_norms(dim, truncation)
    weights = np.zeros(k2.shape)
    nonzero = k2 > 0
    weights[nonzero] = np.exp(s * np.log(k2[nonzero]))
    return weights


def sobolev_inner(v: SpectralField, w: SpectralField, s: float) -> float:
    m, a, b = _aligned(v, w)
    products = np.sum(np.conj(a) * b, axis=0).real
    return float(np.sum(sobolev_weights(v.dim, m, s) * products))


def sobolev_norm(v: SpectralField, s: float) -> float:
    return float(np.sqrt(max(sobolev_inner(v, v, s), 0.0)))


def sobolev_norms_array(coeffs: np.ndarray, dim: int, truncation: int, orders: Sequence[float]) -> dict:
    power = np.sum(np.abs(coeffs) ** 2, axis=0)
    return {
        float(q): float(np.sqrt(np.sum(sobolev_weights(dim, truncation, q) * power)))
        for q in orders
    }


def laplacian(v: SpectralField) -> SpectralField:
    k2 = squared_norms(v.dim, v.truncation)
    return SpectralField.from_arithmetic(v.dim, v.truncation, -k2[None] * v.coeffs)


def field_axpy(a: float, v: SpectralField, w: SpectralField) -> SpectralField:
    m, x, y = _aligned(v, w)
    return SpectralField.from_arithmetic(v.dim, m, a * x + y)


def field_scale(a: float, v: SpectralField) -> SpectralField:
    return SpectralField.from_arithmetic(v.dim, v.truncation, a * v.coeffs)


def _grid_side(v_trunc: int, w_trunc: int, out_trunc: int) -> int:
    # alias free for the kept modes, and large enough to hold every input cube
    needed = max(v_trunc + w_trunc + out_trunc + 1, 2 * max(v_trunc, w_trunc, out_trunc) + 1)
    return scipy.fft.next_fast_len(needed)


def _to_grid(coeffs: np.ndarray, dim: int, truncation: int, side: int) -> np.ndarray:
    idx = np.arange(-truncation, truncation + 1) % side
    grid = np.zeros(coeffs.shape[: coeffs.ndim - dim] + (side,) * dim, dtype=np.complex128)
    grid[(Ellipsis,) + np.ix_(*([idx] * dim))] = coeffs
    return grid


def _from_grid(grid: np.ndarray, dim: int, truncation: int) -> np.ndarray:
    side = grid.shape[-1]
    idx = np.arange(-truncation, truncation + 1) % side
    return grid[(Ellipsis,) + np.ix_(*([idx] * dim))]


def advection_array(
    v: np.ndarray,
    v_trunc: int,
    w: np.ndarray,
    w_trunc: int,
    dim: int,
    out_trunc: int,
    workers: Optional[int] = None,
) -> np.ndarray:
    """
    Coefficients of v . grad w on the cube |k|_inf <= out_trunc:
    (2 pi)^(-d/2) sum_h i (v_h . (k - h)) w_(k-h).
    """
    workers = workers or settings.THREADS
    side = _grid_side(v_trunc, w_trunc, out_trunc)
    axes = _spatial_axes(dim)

    waves = lattice(dim, w_trunc)
    gradient = 1j * waves[:, None] * w[None, :]

    v_phys = scipy.fft.ifftn(_to_grid(v, dim, v_trunc, side), axes=axes, workers=workers)
    g_phys = scipy.fft.ifftn(_to_grid(gradient, dim, w_trunc, side), axes=axes, workers=workers)
    product = np.einsum("j...,ji...->i...", v_phys, g_phys)

    spectrum = scipy.fft.fftn(product, axes=axes, workers=workers)
    scale = fourier_normalization(dim) * float(side) ** dim
    return scale * _from_grid(spectrum, dim, out_trunc)


def bilinear_array(
    v: np.ndarray,
    v_trunc: int,
    w: np.ndarray,
    w_trunc: int,
    dim: int,
    out_trunc: int,
    workers: Optional[int] = None,
) -> np.ndarray:
    """Pi_out P(v, w) as a raw coefficient array."""
    advected = advection_array(v, v_trunc, w, w_trunc, dim, out_trunc, workers)
    return -leray_array(advected, dim, out_trunc)


def _minkowski_support(v: SpectralField, w: SpectralField, out_trunc: int) -> np.ndarray:
    side = _grid_side(v.truncation, w.truncation, out_trunc)
    axes = _spatial_axes(v.dim)
    a = scipy.fft.ifftn(_to_grid(v.support().astype(np.complex128), v.dim, v.truncation, side), axes=axes)
    b = scipy.fft.ifftn(_to_grid(w.support().astype(np.complex128), w.dim, w.truncation, side), axes=axes)
    counts = scipy.fft.fftn(a * b, axes=axes).real * float(side) ** v.dim
    return _from_grid(counts, v.dim, out_trunc) > 0.5


def bilinear_p(v: SpectralField, w: SpectralField) -> SpectralField:
    """P(v, w) = -L(v . grad w) on the full Minkowski sum of the two mode sets."""
    _check_same_dim(v, w)
    out_trunc = v.truncation + w.truncation
    coeffs = bilinear_array(v.coeffs, v.truncation, w.coeffs, w.truncation, v.dim, out_trunc)
    coeffs = np.where(_minkowski_support(v, w, out_trunc)[None], coeffs, 0.0)
    return SpectralField.from_arithmetic(v.dim, out_trunc, coeffs)
