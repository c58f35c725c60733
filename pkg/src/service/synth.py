import logging
import math

import numpy as np
from numpy.typing import NDArray
from pydantic import BaseModel, ConfigDict, Field, field_validator
from scipy.stats import vonmises_fisher

from geometry.sphere import normalize_rows
from geometry.types import PairedEmbeddings

logger = logging.getLogger(__name__)


class SynthConfig(BaseModel):
    """Knobs of the two-cluster paired embedding generator.

    Concentrations are per unit of tangent spread: draws use κ·(d−1), so the
    typical angle to the centroid does not shrink as d grows.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    M: int = Field(default=128, ge=1)
    d: int = Field(default=32, ge=2)
    gap_angle: float = Field(default=math.pi / 3, gt=0.0, lt=math.pi)
    kappa_modality: float = Field(default=50.0, gt=0.0)
    kappa_shared: float = Field(default=5.0, gt=0.0)
    pair_coupling: float = Field(default=0.5, ge=0.0, le=1.0)
    seed: int = 0

    @field_validator("kappa_modality", "kappa_shared")
    @classmethod
    def finite(cls, v: float) -> float:
        if not math.isfinite(v):
            raise ValueError("must be finite")
        return v


def _centroids(cfg: SynthConfig) -> tuple[NDArray, NDArray, NDArray]:
    half = cfg.gap_angle / 2.0
    axis, side = np.zeros(cfg.d), np.zeros(cfg.d)
    axis[0], side[1] = 1.0, 1.0
    image = math.cos(half) * axis + math.sin(half) * side
    text = math.cos(half) * axis - math.sin(half) * side
    return image, text, axis


def _vmf_rows(mu: NDArray, kappa: float, n: int, rng: np.random.Generator) -> NDArray:
    return np.asarray(vonmises_fisher(mu, kappa).rvs(size=n, random_state=rng)).reshape(n, mu.shape[0])


def synth_bipartite(cfg: SynthConfig) -> PairedEmbeddings:
    rng = np.random.default_rng(cfg.seed)
    c_image, c_text, midpoint = _centroids(cfg)
    scale = cfg.d - 1

    # 1. shared per-pair directions around the midpoint
    shared = _vmf_rows(midpoint, cfg.kappa_shared * scale, cfg.M, rng)
    # 2. modality-specific draws around each centroid
    v_image = _vmf_rows(c_image, cfg.kappa_modality * scale, cfg.M, rng)
    v_text = _vmf_rows(c_text, cfg.kappa_modality * scale, cfg.M, rng)

    c = cfg.pair_coupling
    image = normalize_rows((1.0 - c) * v_image + c * shared)
    text = normalize_rows((1.0 - c) * v_text + c * shared)
    logger.debug(f"Generated {cfg.M} pairs in d={cfg.d} (gap {cfg.gap_angle:.3f} rad, coupling {c})")
    return PairedEmbeddings(image, text)


def separating_normal(cfg: SynthConfig) -> NDArray[np.float64]:
    """Normal of the hyperplane bisecting the two centroids (image side positive)."""
    c_image, c_text, _ = _centroids(cfg)
    normal = c_image - c_text
    return normal / np.linalg.norm(normal)
