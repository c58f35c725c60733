import logging
from concurrent.futures import ThreadPoolExecutor

import numpy as np
from numpy.typing import ArrayLike, NDArray

from errors import AntipodalInputs, DimensionMismatch, OutOfRange, ZeroVector
from geometry.types import ZERO_NORM, Batch

logger = logging.getLogger(__name__)

ANTIPODAL_MARGIN = 1e-6
NEAR_PARALLEL = 1e-6
CHUNK_ROWS = 64


def _vector(v: ArrayLike, name: str) -> NDArray[np.float64]:
    arr = np.asarray(v, dtype=np.float64)
    if arr.ndim != 1 or arr.shape[0] < 2:
        raise DimensionMismatch(f"{name} must be a vector with d >= 2, got shape {arr.shape}")
    return arr


def _check_ratio(lam: float) -> float:
    lam = float(lam)
    if not 0.0 <= lam <= 1.0:
        raise OutOfRange(f"mixing ratio {lam} is outside [0, 1]")
    return lam


def _same_shape(a: NDArray, b: NDArray) -> None:
    if a.shape != b.shape:
        raise DimensionMismatch(f"shapes {a.shape} and {b.shape} differ")


def l2_normalize(v: ArrayLike) -> NDArray[np.float64]:
    arr = _vector(v, "vector")
    norm = np.linalg.norm(arr)
    if norm < ZERO_NORM:
        raise ZeroVector("cannot normalize a zero vector")
    return arr / norm


def normalize_rows(rows: ArrayLike) -> Batch:
    """Row-wise l2 normalization; a zero row raises ZeroVector with its index."""
    arr = np.asarray(rows, dtype=np.float64)
    norms = np.linalg.norm(arr, axis=1)
    zero = np.flatnonzero(norms < ZERO_NORM)
    if zero.size:
        raise ZeroVector("cannot normalize a zero row", row=int(zero[0]))
    return arr / norms[:, None]


def cosine_sim(a: ArrayLike, b: ArrayLike) -> float:
    a, b = _vector(a, "a"), _vector(b, "b")
    _same_shape(a, b)
    return float(np.clip(a @ b, -1.0, 1.0))


def linear_mix_normalized(lam: float, a: ArrayLike, b: ArrayLike) -> NDArray[np.float64]:
    lam = _check_ratio(lam)
    a, b = _vector(a, "a"), _vector(b, "b")
    _same_shape(a, b)
    return l2_normalize(lam * a + (1.0 - lam) * b)


def geodesic_mix(lam: float, a: ArrayLike, b: ArrayLike) -> NDArray[np.float64]:
    """Point at fraction ``lam`` of the way from b to a along the great circle.

    m = a·sin(λθ)/sin θ + b·sin((1−λ)θ)/sin θ, with θ = arccos(a·b).
    λ = 1 returns a and λ = 0 returns b exactly.
    """
    lam = _check_ratio(lam)
    a, b = _vector(a, "a"), _vector(b, "b")
    _same_shape(a, b)

    theta = float(np.arccos(np.clip(a @ b, -1.0, 1.0)))
    if theta > np.pi - ANTIPODAL_MARGIN:
        raise AntipodalInputs(f"inputs are antipodal (angle {theta:.8f}), geodesic is not unique")
    if lam == 1.0:
        return a.copy()
    if lam == 0.0:
        return b.copy()

    sin_theta = np.sin(theta)
    if sin_theta < NEAR_PARALLEL:
        return l2_normalize(lam * a + (1.0 - lam) * b)
    return (a * np.sin(lam * theta) + b * np.sin((1.0 - lam) * theta)) / sin_theta


def _row_angles(a: Batch, b: Batch) -> NDArray[np.float64]:
    theta = np.arccos(np.clip(np.einsum("ij,ij->i", a, b), -1.0, 1.0))
    antipodal = np.flatnonzero(theta > np.pi - ANTIPODAL_MARGIN)
    if antipodal.size:
        raise AntipodalInputs("inputs are antipodal, geodesic is not unique", row=int(antipodal[0]))
    return theta


def batch_geodesic_mix(lam: float, a: ArrayLike, b: ArrayLike) -> Batch:
    """Row-wise geodesic_mix; errors carry the offending row index."""
    lam = _check_ratio(lam)
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    _same_shape(a, b)

    theta = _row_angles(a, b)
    if lam == 1.0:
        return a.copy()
    if lam == 0.0:
        return b.copy()

    out = np.empty_like(a)
    sin_theta = np.sin(theta)
    near = sin_theta < NEAR_PARALLEL
    far = ~near
    if far.any():
        th, s = theta[far], sin_theta[far]
        out[far] = (a[far] * (np.sin(lam * th) / s)[:, None] + b[far] * (np.sin((1.0 - lam) * th) / s)[:, None])
    if near.any():
        out[near] = normalize_rows(lam * a[near] + (1.0 - lam) * b[near])
    return out


def batch_linear_mix(lam: float, a: ArrayLike, b: ArrayLike) -> Batch:
    lam = _check_ratio(lam)
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    _same_shape(a, b)
    return normalize_rows(lam * a + (1.0 - lam) * b)


def batch_geodesic_mix_vjp(lam: float, a: Batch, b: Batch, grad: Batch) -> tuple[Batch, Batch]:
    """Pull a gradient on batch_geodesic_mix(lam, a, b) back onto a and b."""
    grad_a = np.zeros_like(a)
    grad_b = np.zeros_like(b)
    if lam == 1.0:
        return grad.copy(), grad_b
    if lam == 0.0:
        return grad_a, grad.copy()

    theta = _row_angles(a, b)
    sin_theta = np.sin(theta)
    near = sin_theta < NEAR_PARALLEL
    far = ~near

    if far.any():
        th, s = theta[far], sin_theta[far]
        ra, rb, u = a[far], b[far], grad[far]
        cos_th = np.cos(th)
        f = np.sin(lam * th) / s
        g = np.sin((1.0 - lam) * th) / s
        df = (lam * np.cos(lam * th) * s - np.sin(lam * th) * cos_th) / s**2
        dg = ((1.0 - lam) * np.cos((1.0 - lam) * th) * s - np.sin((1.0 - lam) * th) * cos_th) / s**2
        # d theta / d cos(theta) = -1 / sin(theta)
        k = -(np.einsum("ij,ij->i", u, ra) * df + np.einsum("ij,ij->i", u, rb) * dg) / s
        grad_a[far] = f[:, None] * u + k[:, None] * rb
        grad_b[far] = g[:, None] * u + k[:, None] * ra

    if near.any():
        v = lam * a[near] + (1.0 - lam) * b[near]
        norm = np.linalg.norm(v, axis=1)
        m = v / norm[:, None]
        u = grad[near]
        gv = (u - np.einsum("ij,ij->i", u, m)[:, None] * m) / norm[:, None]
        grad_a[near] = lam * gv
        grad_b[near] = (1.0 - lam) * gv

    return grad_a, grad_b


def flip_batch(rows: ArrayLike) -> Batch:
    """Reverse row order: row i becomes row M-1-i."""
    return np.asarray(rows, dtype=np.float64)[::-1].copy()


def pairwise_similarity(a: ArrayLike, b: ArrayLike, *, threads: int = 1) -> NDArray[np.float64]:
    """S[i, j] = a_i · b_j for unit rows, clamped to [-1, 1] and computed in fixed 64-row chunks.

    Each chunk is an independent matmul, so the result is identical for any thread count.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise DimensionMismatch(f"cannot compare batches of shape {a.shape} and {b.shape}")

    out = np.empty((a.shape[0], b.shape[0]))
    starts = range(0, a.shape[0], CHUNK_ROWS)

    def fill(start: int) -> None:
        out[start : start + CHUNK_ROWS] = a[start : start + CHUNK_ROWS] @ b.T

    if threads <= 1 or a.shape[0] <= CHUNK_ROWS:
        for start in starts:
            fill(start)
    else:
        logger.debug(f"Similarity matrix {a.shape[0]}x{b.shape[0]} on {threads} threads")
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(fill, starts))
    np.clip(out, -1.0, 1.0, out=out)
    return out
