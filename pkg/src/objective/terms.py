"""Forward and backward passes of the individual contrastive terms.

Every term takes unit-norm image rows ``I`` and text rows ``T`` (M×d) plus its
temperature and returns the loss together with exact gradients with respect to
``I``, ``T`` and ``log τ``. Logits are similarities divided by τ; the
cross-entropy is averaged over rows and, for the symmetric terms, over both
orientations of the logit matrix.
"""

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray
from scipy.special import log_softmax

from errors import BatchTooSmall
from geometry.sphere import batch_geodesic_mix, batch_geodesic_mix_vjp

Matrix = NDArray[np.float64]


@dataclass(frozen=True)
class TermResult:
    value: float
    d_image: Matrix
    d_text: Matrix
    d_log_tau: float


def _soft_cross_entropy(logits: Matrix, targets: Matrix) -> tuple[float, Matrix]:
    """Mean over rows of −Σ_j y_ij log softmax(z_i)_j, and its gradient in z."""
    log_p = log_softmax(logits, axis=1)
    m = logits.shape[0]
    loss = -(targets * log_p).sum(axis=1).mean()
    grad = (np.exp(log_p) * targets.sum(axis=1, keepdims=True) - targets) / m
    return float(loss), grad


def _symmetric(S: Matrix, targets: Matrix, tau: float) -> tuple[float, Matrix, float]:
    """Average of the row-wise and column-wise losses of one similarity matrix.

    Returns the loss, dL/dS and dL/dlog τ.
    """
    Z = S / tau
    rows, g_rows = _soft_cross_entropy(Z, targets)
    cols, g_cols = _soft_cross_entropy(Z.T, targets.T)
    dZ = 0.5 * (g_rows + g_cols.T)
    return 0.5 * (rows + cols), dZ / tau, float(-(dZ * Z).sum())


def _anti_diagonal(m: int) -> Matrix:
    return np.eye(m)[::-1]


def clip_term(I: Matrix, T: Matrix, tau: float) -> TermResult:
    S = I @ T.T
    loss, dS, d_log_tau = _symmetric(S, np.eye(I.shape[0]), tau)
    return TermResult(loss, dS @ T, dS.T @ I, d_log_tau)


def m2mix_term(I: Matrix, T: Matrix, tau: float, lam: float) -> TermResult:
    """Positives I_i·T_i against negatives built from mix_i = m_λ(I_i, T_i).

    Image direction: row i holds I_i·T_i on the diagonal and mix_i·T_j elsewhere.
    Text direction: row i holds T_i·I_i on the diagonal and mix_i·I_j elsewhere.
    """
    m = I.shape[0]
    if m < 2:
        raise BatchTooSmall("m2-mix needs at least one negative, M >= 2")
    eye = np.eye(m)
    off = 1.0 - eye
    mix = batch_geodesic_mix(lam, I, T)
    positive = np.einsum("ij,ij->i", I, T)

    A = np.diag(positive) + off * (mix @ T.T)
    B = np.diag(positive) + off * (mix @ I.T)
    loss_a, g_a = _soft_cross_entropy(A / tau, eye)
    loss_b, g_b = _soft_cross_entropy(B / tau, eye)
    d_log_tau = float(-0.5 * ((g_a * A).sum() + (g_b * B).sum()) / tau)
    dA = 0.5 * g_a / tau
    dB = 0.5 * g_b / tau

    d_pos = np.diag(dA) + np.diag(dB)
    d_image = d_pos[:, None] * T + (off * dB).T @ mix
    d_text = d_pos[:, None] * I + (off * dA).T @ mix
    d_mix = (off * dA) @ T + (off * dB) @ I
    g_i, g_t = batch_geodesic_mix_vjp(lam, I, T, d_mix)
    return TermResult(0.5 * (loss_a + loss_b), d_image + g_i, d_text + g_t, d_log_tau)


def _flipped_mix_mask(m: int, lam: float) -> tuple[NDArray[np.bool_], Matrix]:
    eye = np.eye(m)
    anti = _anti_diagonal(m)
    mask = (eye + anti) > 0
    # odd M: the centre entry sits on both diagonals and gets target 1
    targets = np.where(mask, lam * eye + (1.0 - lam) * anti, 0.0)
    return mask, targets


def vmix_term(I: Matrix, T: Matrix, tau: float, lam: float) -> TermResult:
    """Image rows mixed with their flipped partners; soft targets λ and 1−λ."""
    m = I.shape[0]
    mask, targets = _flipped_mix_mask(m, lam)
    flipped = I[::-1]
    mix = batch_geodesic_mix(lam, I, flipped)

    S = I @ T.T
    S_mix = mix @ T.T
    loss, dS, d_log_tau = _symmetric(np.where(mask, S_mix, S), targets, tau)
    d_orig = np.where(mask, 0.0, dS)
    d_mixed = np.where(mask, dS, 0.0)

    d_image = d_orig @ T
    d_text = d_orig.T @ I + d_mixed.T @ mix
    g_a, g_b = batch_geodesic_mix_vjp(lam, I, flipped, d_mixed @ T)
    return TermResult(loss, d_image + g_a + g_b[::-1], d_text, d_log_tau)


def lmix_term(I: Matrix, T: Matrix, tau: float, lam: float) -> TermResult:
    """Text-side mirror of vmix_term."""
    m = I.shape[0]
    mask, targets = _flipped_mix_mask(m, lam)
    flipped = T[::-1]
    mix = batch_geodesic_mix(lam, T, flipped)

    S = I @ T.T
    S_mix = I @ mix.T
    loss, dS, d_log_tau = _symmetric(np.where(mask, S_mix, S), targets, tau)
    d_orig = np.where(mask, 0.0, dS)
    d_mixed = np.where(mask, dS, 0.0)

    d_image = d_orig @ T + d_mixed @ mix
    d_text = d_orig.T @ I
    g_a, g_b = batch_geodesic_mix_vjp(lam, T, flipped, d_mixed.T @ I)
    return TermResult(loss, d_image, d_text + g_a + g_b[::-1], d_log_tau)


def vlmix_term(I: Matrix, T: Matrix, tau: float, lam: float) -> TermResult:
    """Both modalities mixed with the same λ; mixed pairs are positives, original negatives kept."""
    m = I.shape[0]
    eye = np.eye(m)
    flip_i, flip_t = I[::-1], T[::-1]
    mix_i = batch_geodesic_mix(lam, I, flip_i)
    mix_t = batch_geodesic_mix(lam, T, flip_t)

    S = I @ T.T
    S_mix = mix_i @ mix_t.T
    loss, dS, d_log_tau = _symmetric(eye * S_mix + (1.0 - eye) * S, eye, tau)
    d_orig = (1.0 - eye) * dS
    d_mixed = eye * dS

    d_image = d_orig @ T
    d_text = d_orig.T @ I
    ga_i, gb_i = batch_geodesic_mix_vjp(lam, I, flip_i, d_mixed @ mix_t)
    ga_t, gb_t = batch_geodesic_mix_vjp(lam, T, flip_t, d_mixed.T @ mix_i)
    return TermResult(loss, d_image + ga_i + gb_i[::-1], d_text + ga_t + gb_t[::-1], d_log_tau)
