from .config import TAU_PRESETS, WEIGHT_SWEEP, LossValue, MixLossConfig
from .losses import (
    EVAL_STEP,
    LossGradients,
    clip_loss,
    limiting_behavior_probe,
    lmix_loss,
    loss_gradients,
    m2mix_loss,
    m3mix_loss,
    sample_lambdas,
    vlmix_loss,
    vmix_loss,
)

__all__ = [
    "EVAL_STEP",
    "TAU_PRESETS",
    "WEIGHT_SWEEP",
    "LossGradients",
    "LossValue",
    "MixLossConfig",
    "clip_loss",
    "limiting_behavior_probe",
    "lmix_loss",
    "loss_gradients",
    "m2mix_loss",
    "m3mix_loss",
    "sample_lambdas",
    "vlmix_loss",
    "vmix_loss",
]
