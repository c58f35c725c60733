import itertools
import logging
import math
from collections.abc import Sequence

import numpy as np
import pandas as pd
from numpy.typing import NDArray
from pydantic import BaseModel, ConfigDict, Field, field_validator

from errors import DomainPrecondition, OutOfRange, UndefinedDirection
from theory.bessel import log_bessel_i0, mean_resultant, mean_resultant_inverse

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi
MIN_MC_SAMPLES = 1_000
# "sufficiently large" concentration for asserting the mixing inequality
THEOREM_KAPPA_MIN = 20.0


class VmfParams(BaseModel):
    """von Mises distribution on the circle: mean direction as an angle, concentration κ."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    mean_angle: float
    kappa: float = Field(ge=0.0)

    @field_validator("mean_angle")
    @classmethod
    def wrap_angle(cls, v: float) -> float:
        if not math.isfinite(v):
            raise ValueError("mean angle must be finite")
        return v % TWO_PI

    @field_validator("kappa")
    @classmethod
    def finite_kappa(cls, v: float) -> float:
        if not math.isfinite(v):
            raise ValueError("kappa must be finite")
        return v


class SumVmfApprox(BaseModel):
    model_config = ConfigDict(frozen=True)

    mean_angle: float
    kappa_tilde: float = Field(ge=0.0)

    def as_params(self) -> VmfParams:
        return VmfParams(mean_angle=self.mean_angle, kappa=self.kappa_tilde)


class McEstimate(BaseModel):
    model_config = ConfigDict(frozen=True)

    estimate: float
    std_error: float
    n: int
    shards: int = 1


class TheoremRecord(BaseModel):
    model_config = ConfigDict(frozen=True)

    kappa: float
    delta_mu: float
    kappa_tilde: float
    kl_mixed: float
    kl_cross: float
    mc_estimate: float
    mc_std_error: float
    holds: bool


def vmf_log_density(p: VmfParams, angles: NDArray[np.float64]) -> NDArray[np.float64]:
    return p.kappa * np.cos(angles - p.mean_angle) - math.log(TWO_PI) - log_bessel_i0(p.kappa)


def _sample_angles(p: VmfParams, n: int, rng: np.random.Generator) -> NDArray[np.float64]:
    return rng.vonmises(p.mean_angle, p.kappa, size=n)


def vmf_sample_2d(p: VmfParams, n: int, seed: int) -> NDArray[np.float64]:
    """n unit vectors on the circle, shape (n, 2)."""
    if n < 1:
        raise OutOfRange(f"sample count must be positive, got {n}")
    angles = _sample_angles(p, n, np.random.default_rng(seed))
    return np.column_stack([np.cos(angles), np.sin(angles)])


def vmf_kl_closed(p1: VmfParams, p2: VmfParams) -> float:
    """KL(p1 || p2) for two circular von Mises distributions."""
    a1 = mean_resultant(p1.kappa)
    kl = (
        log_bessel_i0(p2.kappa)
        - log_bessel_i0(p1.kappa)
        + p1.kappa * a1
        - p2.kappa * a1 * math.cos(p1.mean_angle - p2.mean_angle)
    )
    return max(kl, 0.0) if kl > -1e-12 else kl


def vmf_kl_monte_carlo(p1: VmfParams, p2: VmfParams, n: int, seed: int) -> McEstimate:
    if n < MIN_MC_SAMPLES:
        raise OutOfRange(f"Monte-Carlo KL needs at least {MIN_MC_SAMPLES} samples, got {n}")
    angles = _sample_angles(p1, n, np.random.default_rng(seed))
    diffs = vmf_log_density(p1, angles) - vmf_log_density(p2, angles)
    return McEstimate(estimate=float(diffs.mean()), std_error=float(diffs.std(ddof=1) / math.sqrt(n)), n=n)


def sum_vmf_approx(p1: VmfParams, p2: VmfParams) -> SumVmfApprox:
    """Approximate the distribution of x1 + x2 by a single von Mises."""
    if not math.isclose(p1.kappa, p2.kappa, rel_tol=1e-12, abs_tol=1e-12):
        raise DomainPrecondition(f"summands must share a concentration, got {p1.kappa} and {p2.kappa}")
    x = math.cos(p1.mean_angle) + math.cos(p2.mean_angle)
    y = math.sin(p1.mean_angle) + math.sin(p2.mean_angle)
    if math.hypot(x, y) < 1e-12:
        raise UndefinedDirection("mean directions are antipodal; the summed direction is undefined")
    a = mean_resultant(p1.kappa)
    return SumVmfApprox(mean_angle=math.atan2(y, x) % TWO_PI, kappa_tilde=mean_resultant_inverse(a * a))


def vmf_sum_sample_2d(p1: VmfParams, p2: VmfParams, n: int, seed: int) -> NDArray[np.float64]:
    """Samples of the composed angle μ̃ + (θ1 − μ1) + (θ2 − μ2), as unit vectors (n, 2).

    Composing the two angular deviations is the distribution sum_vmf_approx models.
    """
    center = sum_vmf_approx(p1, p2).mean_angle
    rng = np.random.default_rng(seed)
    theta1 = _sample_angles(p1, n, rng)
    theta2 = _sample_angles(p2, n, rng)
    angles = center + (theta1 - p1.mean_angle) + (theta2 - p2.mean_angle)
    return np.column_stack([np.cos(angles), np.sin(angles)])


def vmf_normalized_sum_sample_2d(p1: VmfParams, p2: VmfParams, n: int, seed: int) -> NDArray[np.float64]:
    """Samples of (x1 + x2) / ‖x1 + x2‖ for independent x1 ~ p1, x2 ~ p2, shape (n, 2).

    More concentrated than the composed-angle law: each direction averages the two
    deviations instead of adding them.
    """
    if n < 1:
        raise OutOfRange(f"sample count must be positive, got {n}")
    rng = np.random.default_rng(seed)
    theta1 = _sample_angles(p1, n, rng)
    theta2 = _sample_angles(p2, n, rng)
    total = np.column_stack([np.cos(theta1) + np.cos(theta2), np.sin(theta1) + np.sin(theta2)])
    norms = np.linalg.norm(total, axis=1, keepdims=True)
    if (norms < 1e-12).any():
        raise UndefinedDirection(f"{int((norms < 1e-12).sum())} sampled pairs cancel to the zero vector")
    return total / norms


def theorem1_check(kappa: float, mu1: float, mu2: float, n: int = 100_000, seed: int = 0) -> TheoremRecord:
    """Compare KL to the mixed (summed) distribution against KL to the other modality."""
    if not kappa > 0:
        raise DomainPrecondition(f"concentration must be positive, got {kappa}")
    p1 = VmfParams(mean_angle=mu1, kappa=kappa)
    p2 = VmfParams(mean_angle=mu2, kappa=kappa)
    if math.isclose(p1.mean_angle, p2.mean_angle, abs_tol=1e-12):
        raise DomainPrecondition("mean directions coincide")

    mixed = sum_vmf_approx(p1, p2)
    kl_mixed = vmf_kl_closed(p1, mixed.as_params())
    kl_cross = vmf_kl_closed(p1, p2)
    mc = vmf_kl_monte_carlo(p1, mixed.as_params(), n, seed)

    delta = abs(p1.mean_angle - p2.mean_angle)
    record = TheoremRecord(
        kappa=kappa,
        delta_mu=min(delta, TWO_PI - delta),
        kappa_tilde=mixed.kappa_tilde,
        kl_mixed=kl_mixed,
        kl_cross=kl_cross,
        mc_estimate=mc.estimate,
        mc_std_error=mc.std_error,
        holds=kl_mixed <= kl_cross,
    )
    if kappa >= THEOREM_KAPPA_MIN and not record.holds:
        logger.warning(f"Mixing inequality fails at kappa={kappa}, delta={record.delta_mu:.4f}")
    return record


def theorem1_grid(
    kappas: Sequence[float],
    delta_mus: Sequence[float],
    n: int = 100_000,
    seed: int = 0,
) -> pd.DataFrame:
    rows = []
    for i, (kappa, delta) in enumerate(itertools.product(kappas, delta_mus)):
        rows.append(theorem1_check(kappa, 0.0, delta, n=n, seed=seed + i).model_dump())
    return pd.DataFrame(rows, columns=list(TheoremRecord.model_fields))
