import math
from typing import Any

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

WEIGHT_SWEEP = (0.0, 0.01, 0.1, 0.2, 0.3, 0.5)
TAU_PRESETS = (0.01, 0.05, 0.10)

TERMS = ("m2", "v", "l", "vl")
COMPONENTS = ("clip", "m2mix", "vmix", "lmix", "vlmix")
TERM_COMPONENT = {"m2": "m2mix", "v": "vmix", "l": "lmix", "vl": "vlmix"}


class MixLossConfig(BaseModel):
    """Weights, Beta parameters and temperatures of the combined mixup objective."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    # chosen from WEIGHT_SWEEP on the synthetic two-cluster fixture
    w_m2: float = Field(default=0.5, ge=0.0)
    w_v: float = Field(default=0.01, ge=0.0)
    w_l: float = Field(default=0.01, ge=0.0)
    w_vl: float = Field(default=0.01, ge=0.0)
    alpha_m2: float = Field(default=0.5, gt=0.0)
    alpha_uni: float = Field(default=2.0, gt=0.0)
    tau1: float = Field(default=TAU_PRESETS[0], gt=0.0)
    tau2: float = Field(default=TAU_PRESETS[0], gt=0.0)
    epoch_decay: bool = False

    @model_validator(mode="before")
    @classmethod
    def tau2_follows_tau1(cls, data: Any) -> Any:
        if isinstance(data, dict) and "tau1" in data and data.get("tau2") is None:
            data = {**data, "tau2": data["tau1"]}
        return data

    @field_validator("w_m2", "w_v", "w_l", "w_vl", "alpha_m2", "alpha_uni", "tau1", "tau2")
    @classmethod
    def finite(cls, v: float) -> float:
        if not math.isfinite(v):
            raise ValueError("must be finite")
        return v

    @classmethod
    def plain(cls, tau: float = TAU_PRESETS[0]) -> "MixLossConfig":
        """Ordinary contrastive loss: every mixup weight zero."""
        return cls(w_m2=0.0, w_v=0.0, w_l=0.0, w_vl=0.0, tau1=tau, tau2=tau)

    def weight(self, term: str) -> float:
        return getattr(self, f"w_{term}")

    def effective_weights(self, epoch: int) -> dict[str, float]:
        """Mixup weights after the optional 1/(epoch+1) schedule."""
        scale = 1.0 / (epoch + 1) if self.epoch_decay else 1.0
        return {term: self.weight(term) * scale for term in TERMS}


class LossValue(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    total: float
    components: dict[str, float]
    lambda_used: dict[str, float]
    weights: dict[str, float]

    @model_validator(mode="after")
    def total_is_weighted_sum(self) -> "LossValue":
        expected = self.components["clip"] + sum(
            self.weights[term] * self.components[TERM_COMPONENT[term]] for term in TERMS if TERM_COMPONENT[term] in self.components
        )
        if abs(expected - self.total) > 1e-9 * max(1.0, abs(expected)):
            raise ValueError(f"total {self.total} does not equal weighted components {expected}")
        return self
