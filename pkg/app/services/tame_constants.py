"""
Lattice-sum constants K_pn, G_pn of the tame basic and Kato inequalities for P.

    K_pn = (2 pi)^(-d/2) sqrt(sup_k KK_pn(k)),   G_pn = (2 pi)^(-d/2) sqrt(sup_k GG_pn(k))

The sums over h run over the ball 0 < |h| <= H (h != k) and the sup over 0 < |k| <= Kmax,
inflated by a tail margin. Both lattice functions are invariant under signed coordinate
permutations of k, so only k with 0 <= k_1 <= ... <= k_d is evaluated.
"""

import json
import os
from concurrent.futures import ThreadPoolExecutor
from functools import lru_cache
from pathlib import Path
from typing import Iterable, List, Optional, Sequence, Tuple

import numpy as np

from app.core.config import settings
from app.core.errors import ConstantsUnavailableError
from app.core.logging_config import app_logger
from app.models.constants import ConstantEntry, ConstantTable, LatticeTruncation
from app.models.spectral import lattice

PLATEAU_RTOL = 1e-3


def coupling_coefficient(h: Sequence[int], k: Sequence[int]) -> float:
    """C_hk = |h ^ k| / |h| = |k| sin(angle(h, k)), via the exact integer Gram determinant."""
    h = np.asarray(h, dtype=np.int64)
    k = np.asarray(k, dtype=np.int64)
    if h.shape != k.shape:
        raise ValueError("h and k must have the same dimension")
    h2 = int(h @ h)
    if h2 == 0:
        raise ValueError("C_hk is undefined for h = 0")
    gram = h2 * int(k @ k) - int(h @ k) ** 2
    return float(np.sqrt(gram / h2))


@lru_cache(maxsize=8)
def _ball(dim: int, radius: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Lattice points 0 < |h| <= radius ordered by (|h|^2, lexicographic), with |h|^2 and |h|."""
    points = lattice(dim, radius).reshape(dim, -1).T.astype(np.int64)
    h2 = np.sum(points ** 2, axis=1)
    keep = (h2 > 0) & (h2 <= radius * radius)
    points, h2 = points[keep], h2[keep]
    order = np.lexsort(tuple(points[:, i] for i in reversed(range(dim))) + (h2,))
    points, h2 = points[order], h2[order]
    for array in (points, h2):
        array.setflags(write=False)
    norms = np.sqrt(h2.astype(float))
    norms.setflags(write=False)
    return points, h2, norms


def canonical_wave_vectors(dim: int, radius: int) -> np.ndarray:
    """k with 0 <= k_1 <= ... <= k_d and 0 < |k| <= radius, ordered by (|k|^2, lexicographic)."""
    points, _, _ = _ball(dim, radius)
    sorted_rows = np.all(points >= 0, axis=1) & np.all(np.diff(points, axis=1) >= 0, axis=1)
    return points[sorted_rows]


def _check_orders(dim: int, p: float, n: float) -> None:
    if not n > dim / 2:
        raise ValueError(f"Order n={n} must exceed d/2 = {dim / 2}")
    if p < n:
        raise ValueError(f"Order p={p} must be at least n={n}")


def _lattice_terms(k: Sequence[int], trunc: LatticeTruncation):
    k = np.asarray(k, dtype=np.int64)
    dim = k.shape[0]
    k2 = int(k @ k)
    if k2 == 0:
        raise ValueError("Lattice functions are defined for k != 0 only")
    points, h2, h_norm = _ball(dim, trunc.sum_radius)
    rest = k[None, :] - points
    rest2 = np.sum(rest ** 2, axis=1)
    keep = rest2 > 0
    gram = h2 * k2 - (points @ k) ** 2
    coupling2 = gram[keep] / h2[keep]
    return float(np.sqrt(k2)), h_norm[keep], np.sqrt(rest2[keep].astype(float)), coupling2


def kk_pn_at_k(k: Sequence[int], p: float, n: float, trunc: LatticeTruncation) -> float:
    """Partial sum 4|k|^2p sum_h C_hk^2 / (|h|^p |k-h|^(n+1) + |h|^n |k-h|^(p+1))^2."""
    _check_orders(len(k), p, n)
    k_norm, h, q, c2 = _lattice_terms(k, trunc)
    denominator = h ** p * q ** (n + 1) + h ** n * q ** (p + 1)
    return float(4.0 * k_norm ** (2 * p) * np.sum(c2 / denominator ** 2))


def gg_pn_at_k(k: Sequence[int], p: float, n: float, trunc: LatticeTruncation) -> float:
    """Partial sum 4 sum_h (|k|^p - |k-h|^p)^2 C_hk^2 / (|h|^p |k-h|^n + |h|^n |k-h|^p)^2."""
    _check_orders(len(k), p, n)
    k_norm, h, q, c2 = _lattice_terms(k, trunc)
    denominator = h ** p * q ** n + h ** n * q ** p
    return float(4.0 * np.sum((k_norm ** p - q ** p) ** 2 * c2 / denominator ** 2))


def kk_n_at_k(k: Sequence[int], n: float, trunc: LatticeTruncation) -> float:
    """Diagonal K-function |k|^2n sum_h C_hk^2 / (|h|^2n |k-h|^(2n+2))."""
    _check_orders(len(k), n, n)
    k_norm, h, q, c2 = _lattice_terms(k, trunc)
    return float(k_norm ** (2 * n) * np.sum(c2 / (h ** (2 * n) * q ** (2 * n + 2))))


def gg_n_at_k(k: Sequence[int], n: float, trunc: LatticeTruncation) -> float:
    """Diagonal G-function sum_h (|k|^n - |k-h|^n)^2 C_hk^2 / (|h|^2n |k-h|^2n)."""
    _check_orders(len(k), n, n)
    k_norm, h, q, c2 = _lattice_terms(k, trunc)
    return float(np.sum((k_norm ** n - q ** n) ** 2 * c2 / (h ** (2 * n) * q ** (2 * n))))


def _plateaued(k_norms: np.ndarray, values: np.ndarray, sup_radius: int) -> bool:
    inner = k_norms <= 2.0 * sup_radius / 3.0
    if not np.any(inner) or np.all(inner):
        return False
    return bool(np.max(values[~inner]) <= (1.0 + PLATEAU_RTOL) * np.max(values[inner]))


def _sup(dim: int, evaluate, trunc: LatticeTruncation, workers: int):
    ks = canonical_wave_vectors(dim, trunc.sup_radius)
    with ThreadPoolExecutor(max_workers=max(1, workers)) as pool:
        values = np.array(list(pool.map(evaluate, ks)))
    best = int(np.argmax(values))
    k_norms = np.sqrt(np.sum(ks ** 2, axis=1).astype(float))
    return float(values[best]), [int(x) for x in ks[best]], _plateaued(k_norms, values, trunc.sup_radius), len(ks)


def _to_constant(dim: int, sup_value: float, trunc: LatticeTruncation) -> float:
    return (2.0 * np.pi) ** (-dim / 2.0) * float(np.sqrt(trunc.tail_margin * sup_value))


def half_truncation(trunc: LatticeTruncation) -> Optional[LatticeTruncation]:
    if trunc.sup_radius < 2:
        return None
    return LatticeTruncation(
        sum_radius=trunc.sum_radius // 2, sup_radius=trunc.sup_radius // 2, tail_margin=trunc.tail_margin,
    )


def _refinement(dim: int, p: float, n: float, trunc: LatticeTruncation, workers: int, K_pn: float, G_pn: float) -> dict:
    """Relative change of both constants when the truncation is doubled from its half size."""
    half = half_truncation(trunc)
    if half is None:
        return {}
    k_half = _to_constant(dim, _sup(dim, lambda k: kk_pn_at_k(k, p, n, half), half, workers)[0], half)
    g_half = _to_constant(dim, _sup(dim, lambda k: gg_pn_at_k(k, p, n, half), half, workers)[0], half)
    return {"K": abs(K_pn - k_half) / K_pn, "G": abs(G_pn - g_half) / G_pn}


def compute_entry(dim: int, p: float, n: float, trunc: LatticeTruncation, workers: Optional[int] = None) -> ConstantEntry:
    if not n > dim / 2 + 1:
        raise ValueError(f"G_pn needs n > d/2 + 1 = {dim / 2 + 1}, got n={n}")
    _check_orders(dim, p, n)
    workers = workers or settings.THREADS

    k_sup, k_arg, k_flat, count = _sup(dim, lambda k: kk_pn_at_k(k, p, n, trunc), trunc, workers)
    g_sup, g_arg, g_flat, _ = _sup(dim, lambda k: gg_pn_at_k(k, p, n, trunc), trunc, workers)
    K_pn, G_pn = _to_constant(dim, k_sup, trunc), _to_constant(dim, g_sup, trunc)

    entry = ConstantEntry(
        d=dim, p=float(p), n=float(n),
        H=trunc.sum_radius, Kmax=trunc.sup_radius, tail_margin=trunc.tail_margin,
        K_pn=K_pn,
        G_pn=G_pn,
        argmax_k={"K": k_arg, "G": g_arg},
        plateau=k_flat and g_flat,
        plateau_detail={"K": k_flat, "G": g_flat},
        k_evaluated=count,
        refinement=_refinement(dim, p, n, trunc, workers, K_pn, G_pn),
    )
    app_logger.info(
        f"Constants d={dim} (p,n)=({p},{n}) H={trunc.sum_radius} Kmax={trunc.sup_radius}: "
        f"K_pn={entry.K_pn:.6g} G_pn={entry.G_pn:.6g} plateau={entry.plateau} refinement={entry.refinement}"
    )
    if not entry.plateau:
        app_logger.warning(f"Sup search for (p,n)=({p},{n}) did not plateau over the outer third of the k-shell")
    return entry


def diagonal_constants(dim: int, n: float, trunc: LatticeTruncation, workers: Optional[int] = None) -> Tuple[float, float]:
    """(K_n, G_n) through the dedicated p = n formulas."""
    workers = workers or settings.THREADS
    k_sup = _sup(dim, lambda k: kk_n_at_k(k, n, trunc), trunc, workers)[0]
    g_sup = _sup(dim, lambda k: gg_n_at_k(k, n, trunc), trunc, workers)[0]
    return _to_constant(dim, k_sup, trunc), _to_constant(dim, g_sup, trunc)


def _with_diagonals(pairs: Iterable[Tuple[float, float]]) -> List[Tuple[float, float]]:
    result: List[Tuple[float, float]] = []
    for p, n in pairs:
        for pair in ((float(n), float(n)), (float(p), float(n))):
            if pair not in result:
                result.append(pair)
    return result


def required_pairs(n: float, orders: Sequence[float]) -> List[Tuple[float, float]]:
    """Pairs used by the control system: (n,n), and (p,p), (p,n) for each bound order p."""
    pairs = [(float(n), float(n))]
    for p in orders:
        for pair in ((float(p), float(p)), (float(p), float(n))):
            if pair not in pairs:
                pairs.append(pair)
    return pairs


def compute_constants(
    dim: int,
    pairs: Sequence[Tuple[float, float]],
    trunc: Optional[LatticeTruncation] = None,
    workers: Optional[int] = None,
) -> ConstantTable:
    trunc = trunc or LatticeTruncation()
    entries = [compute_entry(dim, p, n, trunc, workers) for p, n in _with_diagonals(pairs)]
    return ConstantTable(d=dim, truncation=trunc, entries=entries)


def cache_file_name(dim: int, p: float, n: float, trunc: LatticeTruncation) -> str:
    return (
        f"constants_d{dim}_p{float(p)!r}_n{float(n)!r}"
        f"_H{trunc.sum_radius}_K{trunc.sup_radius}_m{trunc.tail_margin!r}.json"
    )


def write_entry(entry: ConstantEntry, directory: str) -> str:
    os.makedirs(directory, exist_ok=True)
    path = os.path.join(directory, cache_file_name(entry.d, entry.p, entry.n, entry.truncation))
    with open(path, "w", encoding="utf-8") as handle:
        handle.write(entry.model_dump_json(indent=2))
    return path


def read_entries(path: str) -> List[ConstantEntry]:
    """Entries from one cache file (object or list) or from every *.json file of a directory."""
    target = Path(path)
    files = sorted(target.glob("*.json")) if target.is_dir() else [target]
    entries: List[ConstantEntry] = []
    for file in files:
        if not file.exists():
            continue
        data = json.loads(file.read_text(encoding="utf-8"))
        items = data if isinstance(data, list) else [data]
        entries.extend(ConstantEntry(**item) for item in items)
    return entries


def load_table(dim: int, pairs: Sequence[Tuple[float, float]], path: str) -> ConstantTable:
    """Table assembled from cache files only; every pair must be present with one truncation."""
    entries = [e for e in read_entries(path) if e.d == dim]
    chosen: List[ConstantEntry] = []
    for p, n in _with_diagonals(pairs):
        match = next((e for e in entries if float(e.p) == p and float(e.n) == n), None)
        if match is None:
            raise ConstantsUnavailableError(f"No cached constants for d={dim}, (p,n)=({p},{n}) under {path}")
        chosen.append(match)
    truncations = {e.truncation for e in chosen}
    if len(truncations) != 1:
        raise ConstantsUnavailableError(f"Cached constants under {path} mix different lattice truncations")
    return ConstantTable(d=dim, truncation=truncations.pop(), entries=chosen)


def load_or_compute(
    dim: int,
    pairs: Sequence[Tuple[float, float]],
    trunc: Optional[LatticeTruncation] = None,
    cache_dir: Optional[str] = None,
    allow_compute: bool = True,
    workers: Optional[int] = None,
) -> ConstantTable:
    trunc = trunc or LatticeTruncation()
    cache_dir = cache_dir or settings.CONSTANTS_CACHE_DIR
    cached = read_entries(cache_dir) if os.path.isdir(cache_dir) else []

    entries: List[ConstantEntry] = []
    for p, n in _with_diagonals(pairs):
        hit = next((e for e in cached if e.matches(dim, p, n, trunc)), None)
        if hit is None:
            if not allow_compute:
                raise ConstantsUnavailableError(
                    f"Constants for d={dim}, (p,n)=({p},{n}) are not cached in {cache_dir} and computation is disabled"
                )
            hit = compute_entry(dim, p, n, trunc, workers)
            write_entry(hit, cache_dir)
        else:
            app_logger.info(f"Constants d={dim} (p,n)=({p},{n}) read from cache {cache_dir}")
        entries.append(hit)
    return ConstantTable(d=dim, truncation=trunc, entries=entries)
