import logging
import math
from collections.abc import Callable
from pathlib import Path

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator
from tqdm import tqdm

from errors import ConfigError, OutOfRange, SphereMixError
from geometry.metrics import (
    hard_negative_proportion,
    modality_gap,
    recall_at_k,
    relative_alignment,
    top1_negative_similarity,
    uniformity,
)
from geometry.reports import Direction
from geometry.sphere import batch_geodesic_mix
from geometry.types import PairedEmbeddings
from objective.config import MixLossConfig
from objective.losses import (
    EVAL_STEP,
    LossGradients,
    clip_loss,
    lmix_loss,
    loss_gradients,
    m2mix_loss,
    m3mix_loss,
    sample_lambdas,
    vlmix_loss,
    vmix_loss,
)
from training.model import AdamState, ProjectionModel, adam_step, forward, init_model, project

logger = logging.getLogger(__name__)


class TrainConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    epochs: int = Field(default=9, ge=0)
    batch_size: int = Field(default=128, ge=2)
    lr: float = Field(default=1e-3, gt=0.0)
    lr_decay: float = Field(default=1.0, gt=0.0, le=1.0)
    weight_decay: float = Field(default=0.0, ge=0.0)
    beta1: float = Field(default=0.9, gt=0.0, lt=1.0)
    beta2: float = Field(default=0.98, gt=0.0, lt=1.0)
    eps: float = Field(default=1e-6, gt=0.0)
    init_noise: float = Field(default=1e-3, ge=0.0)
    loss: MixLossConfig = MixLossConfig()
    seed: int = 0

    @field_validator("lr", "weight_decay", "eps", "init_noise")
    @classmethod
    def finite(cls, v: float) -> float:
        if not math.isfinite(v):
            raise ValueError("must be finite")
        return v

    @classmethod
    def from_json(cls, text: str, *, source: str = "config") -> "TrainConfig":
        try:
            return cls.model_validate_json(text)
        except ValidationError as e:
            fields = ", ".join(".".join(str(p) for p in err["loc"]) for err in e.errors())
            raise ConfigError(f"{source}: invalid field(s) {fields}: {e}") from e


class TrainRecord(BaseModel):
    model_config = ConfigDict(frozen=True)

    epoch: int
    loss_total: float
    loss_clip: float
    loss_m2mix: float
    loss_vmix: float
    loss_lmix: float
    loss_vlmix: float
    relative_alignment: float
    uniformity: float
    modality_gap_norm: float
    recall1_i2t: float
    recall1_t2i: float
    hn_mix_image: float
    hn_mix_text: float
    hn_orig_image: float
    hn_orig_text: float
    pos_sim: float
    top1_neg_sim_i2t: float
    top1_neg_sim_t2i: float
    tau1: float
    tau2: float
    lr: float


def history_frame(history: list[TrainRecord]) -> pd.DataFrame:
    return pd.DataFrame([r.model_dump() for r in history], columns=list(TrainRecord.model_fields))


def write_history(out_dir: Path, history: list[TrainRecord]) -> None:
    history_frame(history).to_csv(out_dir / "history.csv", index=False)
    with open(out_dir / "history.jsonl", "w") as f:
        for record in history:
            f.write(record.model_dump_json() + "\n")


def _loss_config(model: ProjectionModel, loss: MixLossConfig) -> MixLossConfig:
    return loss.model_copy(update={"tau1": model.tau1, "tau2": model.tau2})


def objective_gradients(
    model: ProjectionModel,
    P_raw: PairedEmbeddings,
    loss: MixLossConfig,
    rng_seed: int,
    epoch: int,
    step: int,
) -> tuple[LossGradients, dict]:
    """Loss gradients pulled back through the projection heads onto the model parameters."""
    grads = loss_gradients(project(model, P_raw), _loss_config(model, loss), rng_seed, epoch, step)
    return grads, {
        "w_img": P_raw.image.T @ grads.d_image,
        "w_txt": P_raw.text.T @ grads.d_text,
        "log_tau1": grads.d_log_tau1,
        "log_tau2": grads.d_log_tau2,
    }


def evaluate(model: ProjectionModel, P_raw: PairedEmbeddings, cfg: TrainConfig, epoch: int, lr: float, threads: int = 1) -> TrainRecord:
    """Metrics and component losses on the full set."""
    P = forward(model, P_raw)
    loss_cfg = _loss_config(model, cfg.loss)
    lambdas = sample_lambdas(loss_cfg, cfg.seed, epoch, EVAL_STEP)
    total = m3mix_loss(P, loss_cfg, cfg.seed, epoch, EVAL_STEP)

    S = P.image @ P.text.T
    hn_mix = hard_negative_proportion(P, batch_geodesic_mix(0.5, P.image, P.text), threads=threads)
    hn_orig = hard_negative_proportion(P, P.text, threads=threads)
    sims = top1_negative_similarity(P, threads=threads)
    _, gap = modality_gap(P)
    return TrainRecord(
        epoch=epoch,
        loss_total=total.total,
        loss_clip=clip_loss(P, model.tau1),
        loss_m2mix=m2mix_loss(P, model.tau2, lambdas["m2"]),
        loss_vmix=vmix_loss(P, model.tau1, lambdas["v"]),
        loss_lmix=lmix_loss(P, model.tau1, lambdas["l"]),
        loss_vlmix=vlmix_loss(P, model.tau1, lambdas["vl"]),
        relative_alignment=relative_alignment(P, threads=threads),
        uniformity=uniformity(P, threads=threads),
        modality_gap_norm=gap,
        recall1_i2t=recall_at_k(S, 1, Direction.IMAGE_TO_TEXT).recall,
        recall1_t2i=recall_at_k(S, 1, Direction.TEXT_TO_IMAGE).recall,
        hn_mix_image=hn_mix[0],
        hn_mix_text=hn_mix[1],
        hn_orig_image=hn_orig[0],
        hn_orig_text=hn_orig[1],
        pos_sim=sims.pos_sim,
        top1_neg_sim_i2t=sims.top1_neg_sim_i2t,
        top1_neg_sim_t2i=sims.top1_neg_sim_t2i,
        tau1=model.tau1,
        tau2=model.tau2,
        lr=lr,
    )


class Trainer:
    """Fits projection heads and temperatures over frozen paired embeddings."""

    def __init__(self, P_raw: PairedEmbeddings, cfg: TrainConfig, *, threads: int = 1, progress: bool = False) -> None:
        if P_raw.size < 2:
            raise OutOfRange("training needs at least 2 pairs")
        self.data = P_raw
        self.cfg = cfg
        self.threads = threads
        self.progress = progress
        self.batch_size = min(cfg.batch_size, P_raw.size)
        self.model = init_model(P_raw.dim, cfg.seed, cfg.loss.tau1, cfg.loss.tau2, cfg.init_noise)
        self.state = AdamState.zeros(self.model.params())
        self.rng = np.random.default_rng(cfg.seed)
        self.history: list[TrainRecord] = []

    def _batches(self) -> list[np.ndarray]:
        order = self.rng.permutation(self.data.size)
        batches = [order[i : i + self.batch_size] for i in range(0, self.data.size, self.batch_size)]
        # a single leftover row has no negatives
        if len(batches[-1]) < 2:
            batches.pop()
        return batches

    def _step(self, batch: np.ndarray, epoch: int, step: int, lr: float) -> float:
        P_batch = PairedEmbeddings.raw(self.data.image[batch], self.data.text[batch])
        try:
            grads, param_grads = objective_gradients(self.model, P_batch, self.cfg.loss, self.cfg.seed, epoch, step)
        except SphereMixError as e:
            raise type(e)(f"epoch {epoch}, batch {step}: {e}") from e

        params, self.state = adam_step(
            self.model.params(),
            param_grads,
            self.state,
            lr=lr,
            wd=self.cfg.weight_decay,
            betas=(self.cfg.beta1, self.cfg.beta2),
            eps=self.cfg.eps,
        )
        self.model = self.model.with_params(params)
        return grads.loss.total

    def run(self, on_epoch: Callable[[TrainRecord], None] | None = None) -> tuple[ProjectionModel, list[TrainRecord]]:
        epochs = range(self.cfg.epochs)
        for epoch in tqdm(epochs, desc="train", disable=not self.progress):
            lr = self.cfg.lr * self.cfg.lr_decay**epoch
            for step, batch in enumerate(self._batches()):
                loss = self._step(batch, epoch, step, lr)
                logger.debug(f"epoch {epoch} batch {step} loss {loss:.6f}")

            record = evaluate(self.model, self.data, self.cfg, epoch, lr, self.threads)
            self.history.append(record)
            logger.info(
                f"Epoch {epoch}: loss {record.loss_total:.4f} (clip {record.loss_clip:.4f}), "
                f"align {record.relative_alignment:.4f}, unif {record.uniformity:.4f}, "
                f"gap {record.modality_gap_norm:.4f}, tau {record.tau1:.4f}"
            )
            if on_epoch:
                on_epoch(record)
        return self.model, self.history


def train(P_raw: PairedEmbeddings, cfg: TrainConfig, *, threads: int = 1, progress: bool = False) -> tuple[ProjectionModel, list[TrainRecord]]:
    return Trainer(P_raw, cfg, threads=threads, progress=progress).run()


class FdResult(BaseModel):
    max_rel_error: float
    parameter: str
    index: tuple[int, ...]


def finite_difference_check(
    model: ProjectionModel,
    P_raw: PairedEmbeddings,
    loss: MixLossConfig,
    step: float = 1e-5,
    *,
    rng_seed: int = 0,
    epoch: int = 0,
    atol: float = 1e-4,
) -> FdResult:
    """Central differences on every model parameter against the analytic gradient.

    Relative error per coordinate is |a − n| / max(|a|, |n|, atol).
    """
    if not 1e-7 <= step <= 1e-3:
        raise OutOfRange(f"finite-difference step {step} outside [1e-7, 1e-3]")
    _, analytic = objective_gradients(model, P_raw, loss, rng_seed, epoch, 0)
    base = model.params()

    def objective(params: dict) -> float:
        # the clamp is bypassed so both probes see the perturbed temperature
        probe = ProjectionModel(params["w_img"], params["w_txt"], float(params["log_tau1"]), float(params["log_tau2"]))
        grads, _ = objective_gradients(probe, P_raw, loss, rng_seed, epoch, 0)
        return grads.loss.total

    worst = FdResult(max_rel_error=0.0, parameter="w_img", index=(0, 0))
    for name, value in base.items():
        shape = np.shape(value)
        for index in np.ndindex(*shape) if shape else [()]:
            plus, minus = dict(base), dict(base)
            if shape:
                hi, lo = np.array(value, copy=True), np.array(value, copy=True)
                hi[index] += step
                lo[index] -= step
                plus[name], minus[name] = hi, lo
                a = float(analytic[name][index])
            else:
                plus[name], minus[name] = value + step, value - step
                a = float(analytic[name])
            n = (objective(plus) - objective(minus)) / (2.0 * step)
            err = abs(a - n) / max(abs(a), abs(n), atol)
            if err > worst.max_rel_error:
                worst = FdResult(max_rel_error=err, parameter=name, index=tuple(int(i) for i in index))
    return worst
