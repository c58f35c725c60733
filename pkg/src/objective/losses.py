import logging
from collections.abc import Mapping, Sequence
from dataclasses import dataclass

import numpy as np
import pandas as pd
from numpy.typing import NDArray
from scipy.special import logsumexp

from errors import BatchTooSmall, OutOfRange
from geometry.sphere import batch_geodesic_mix, normalize_rows
from geometry.types import PairedEmbeddings
from objective.config import TERM_COMPONENT, TERMS, LossValue, MixLossConfig
from objective.terms import TermResult, clip_term, lmix_term, m2mix_term, vlmix_term, vmix_term

logger = logging.getLogger(__name__)

EVAL_STEP = 2**32 - 1

_TERM_FN = {"m2": m2mix_term, "v": vmix_term, "l": lmix_term, "vl": vlmix_term}


def _check_tau(tau: float) -> float:
    if not tau > 0:
        raise OutOfRange(f"temperature must be positive, got {tau}")
    return float(tau)


def clip_loss(P: PairedEmbeddings, tau: float) -> float:
    return clip_term(P.image, P.text, _check_tau(tau)).value


def m2mix_loss(P: PairedEmbeddings, tau2: float, lam: float) -> float:
    return m2mix_term(P.image, P.text, _check_tau(tau2), lam).value


def vmix_loss(P: PairedEmbeddings, tau: float, lam: float) -> float:
    return vmix_term(P.image, P.text, _check_tau(tau), lam).value


def lmix_loss(P: PairedEmbeddings, tau: float, lam: float) -> float:
    return lmix_term(P.image, P.text, _check_tau(tau), lam).value


def vlmix_loss(P: PairedEmbeddings, tau: float, lam: float) -> float:
    return vlmix_term(P.image, P.text, _check_tau(tau), lam).value


def sample_lambdas(cfg: MixLossConfig, rng_seed: int, epoch: int, step: int = 0) -> dict[str, float]:
    """Draw one mixing ratio per term, always in the order m2, v, l, vl."""
    rng = np.random.default_rng(np.random.SeedSequence([rng_seed, epoch, step]))
    lambdas = {}
    for term in TERMS:
        alpha = cfg.alpha_m2 if term == "m2" else cfg.alpha_uni
        lambdas[term] = float(rng.beta(alpha, alpha))
    return lambdas


@dataclass(frozen=True)
class LossGradients:
    loss: LossValue
    d_image: NDArray[np.float64]
    d_text: NDArray[np.float64]
    d_log_tau1: float
    d_log_tau2: float


def _resolve_lambdas(
    cfg: MixLossConfig, rng_seed: int, epoch: int, step: int, lambdas: Mapping[str, float] | None
) -> dict[str, float]:
    drawn = sample_lambdas(cfg, rng_seed, epoch, step)
    if lambdas:
        unknown = set(lambdas) - set(TERMS)
        if unknown:
            raise OutOfRange(f"unknown mixup terms {sorted(unknown)}")
        drawn.update({term: float(value) for term, value in lambdas.items()})
    return drawn


def _combined(
    I: NDArray, T: NDArray, cfg: MixLossConfig, lambdas: dict[str, float], epoch: int
) -> tuple[LossValue, NDArray, NDArray, float, float]:
    weights = cfg.effective_weights(epoch)

    clip = clip_term(I, T, cfg.tau1)
    components = {"clip": clip.value}
    total = clip.value
    d_image, d_text = clip.d_image.copy(), clip.d_text.copy()
    d_log_tau1, d_log_tau2 = clip.d_log_tau, 0.0

    for term in TERMS:
        w = weights[term]
        if w == 0.0:
            continue
        tau = cfg.tau2 if term == "m2" else cfg.tau1
        result: TermResult = _TERM_FN[term](I, T, tau, lambdas[term])
        components[TERM_COMPONENT[term]] = result.value
        total += w * result.value
        d_image += w * result.d_image
        d_text += w * result.d_text
        if term == "m2":
            d_log_tau2 += w * result.d_log_tau
        else:
            d_log_tau1 += w * result.d_log_tau

    value = LossValue(total=total, components=components, lambda_used=lambdas, weights=weights)
    return value, d_image, d_text, d_log_tau1, d_log_tau2


def m3mix_loss(
    P: PairedEmbeddings,
    cfg: MixLossConfig,
    rng_seed: int,
    epoch: int,
    step: int = 0,
    lambdas: Mapping[str, float] | None = None,
) -> LossValue:
    """CLIP loss plus the weighted m²-, V-, L- and VL-Mix terms.

    Args:
        P: unit-norm pairs.
        cfg: weights, Beta parameters and temperatures.
        rng_seed, epoch, step: seed the per-batch λ draws.
        lambdas: optional per-term overrides of the sampled ratios.
    """
    used = _resolve_lambdas(cfg, rng_seed, epoch, step, lambdas)
    value, *_ = _combined(P.image, P.text, cfg, used, epoch)
    return value


def _normalization_vjp(raw: NDArray, unit: NDArray, grad: NDArray) -> NDArray:
    norms = np.linalg.norm(raw, axis=1, keepdims=True)
    return (grad - np.einsum("ij,ij->i", grad, unit)[:, None] * unit) / norms


def loss_gradients(
    P_raw: PairedEmbeddings,
    cfg: MixLossConfig,
    rng_seed: int,
    epoch: int,
    step: int = 0,
    lambdas: Mapping[str, float] | None = None,
) -> LossGradients:
    """Exact gradients of m3mix_loss with respect to raw rows and log-temperatures.

    Rows are normalized here; the returned row gradients include that Jacobian.
    """
    used = _resolve_lambdas(cfg, rng_seed, epoch, step, lambdas)
    I = normalize_rows(P_raw.image)
    T = normalize_rows(P_raw.text)
    value, d_unit_i, d_unit_t, d_log_tau1, d_log_tau2 = _combined(I, T, cfg, used, epoch)
    return LossGradients(
        loss=value,
        d_image=_normalization_vjp(P_raw.image, I, d_unit_i),
        d_text=_normalization_vjp(P_raw.text, T, d_unit_t),
        d_log_tau1=d_log_tau1,
        d_log_tau2=d_log_tau2,
    )


def _hinge(S: NDArray) -> float:
    positive = np.diag(S)
    negatives = S.copy()
    np.fill_diagonal(negatives, -np.inf)
    rows = np.maximum(negatives.max(axis=1) - positive, 0.0).mean()
    cols = np.maximum(negatives.max(axis=0) - positive, 0.0).mean()
    return float(0.5 * (rows + cols))


def _uniformity_proxy(mix: NDArray, I: NDArray, T: NDArray, tau: float) -> float:
    """τ·mean_i logsumexp_{j≠i}(mix_i·X_j/τ), averaged over X = T and X = I."""
    off = ~np.eye(mix.shape[0], dtype=bool)
    sides = []
    for other in (T, I):
        Z = np.where(off, mix @ other.T / tau, -np.inf)
        sides.append(tau * logsumexp(Z, axis=1).mean())
    return float(np.mean(sides))


def limiting_behavior_probe(P: PairedEmbeddings, taus: Sequence[float], lam: float = 0.5) -> pd.DataFrame:
    """Scaled losses next to their zero-temperature limits for a descending τ ladder."""
    if P.size < 2:
        raise BatchTooSmall("limiting probe needs M >= 2")
    taus = [float(t) for t in taus]
    if not taus or any(t <= 0 for t in taus):
        raise OutOfRange("temperatures must be positive")
    if any(a < b for a, b in zip(taus, taus[1:])):
        raise OutOfRange("temperatures must be sorted in descending order")

    S = P.image @ P.text.T
    hinge = _hinge(S)
    mix = batch_geodesic_mix(lam, P.image, P.text)
    rows = []
    for tau in taus:
        rows.append(
            {
                "tau": tau,
                "tau_clip_loss": tau * clip_loss(P, tau),
                "hinge": hinge,
                "tau_m2_loss": tau * m2mix_loss(P, tau, lam),
                "neg_uniformity_proxy": _uniformity_proxy(mix, P.image, P.text, tau),
            }
        )
    return pd.DataFrame(rows)
