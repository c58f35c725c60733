import json
import logging
import math
import os
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from numpy.typing import NDArray

from errors import DimensionMismatch, TruncatedFile
from geometry.sphere import normalize_rows
from geometry.types import PairedEmbeddings
from service.emb_file import decode_emb, encode_emb

logger = logging.getLogger(__name__)

TAU_MIN = 1e-3
TAU_MAX = 1.0
LOG_TAU_MIN = math.log(TAU_MIN)
LOG_TAU_MAX = math.log(TAU_MAX)

MATRICES = ("w_img", "w_txt")
SCALARS = ("log_tau1", "log_tau2")
_HEADER_LEN = struct.Struct("<I")

Params = dict[str, NDArray[np.float64] | float]


def clamp_log_tau(value: float) -> float:
    return float(min(max(value, LOG_TAU_MIN), LOG_TAU_MAX))


@dataclass(frozen=True)
class ProjectionModel:
    """Per-modality linear projection heads plus the two learnable log-temperatures."""

    w_img: NDArray[np.float64]
    w_txt: NDArray[np.float64]
    log_tau1: float
    log_tau2: float

    def __post_init__(self) -> None:
        if self.w_img.shape != self.w_txt.shape or self.w_img.ndim != 2:
            raise DimensionMismatch(f"projection shapes {self.w_img.shape} and {self.w_txt.shape} must be equal matrices")

    @property
    def tau1(self) -> float:
        return math.exp(self.log_tau1)

    @property
    def tau2(self) -> float:
        return math.exp(self.log_tau2)

    @property
    def d_in(self) -> int:
        return self.w_img.shape[0]

    def params(self) -> Params:
        return {"w_img": self.w_img, "w_txt": self.w_txt, "log_tau1": self.log_tau1, "log_tau2": self.log_tau2}

    def with_params(self, params: Params) -> "ProjectionModel":
        """New model from a parameter dict; temperatures are clamped to [TAU_MIN, TAU_MAX]."""
        return replace(
            self,
            w_img=np.asarray(params["w_img"], dtype=np.float64),
            w_txt=np.asarray(params["w_txt"], dtype=np.float64),
            log_tau1=clamp_log_tau(float(params["log_tau1"])),
            log_tau2=clamp_log_tau(float(params["log_tau2"])),
        )


def init_model(d: int, seed: int, tau1: float = 0.01, tau2: float = 0.01, noise: float = 1e-3) -> ProjectionModel:
    """Identity heads with small Gaussian noise."""
    rng = np.random.default_rng(seed)
    eye = np.eye(d)
    return ProjectionModel(
        w_img=eye + noise * rng.standard_normal((d, d)),
        w_txt=eye + noise * rng.standard_normal((d, d)),
        log_tau1=clamp_log_tau(math.log(tau1)),
        log_tau2=clamp_log_tau(math.log(tau2)),
    )


def project(model: ProjectionModel, P_raw: PairedEmbeddings) -> PairedEmbeddings:
    """Raw projected rows X·W, before normalization."""
    if P_raw.dim != model.d_in:
        raise DimensionMismatch(f"model expects d={model.d_in}, data has d={P_raw.dim}")
    return PairedEmbeddings.raw(P_raw.image @ model.w_img, P_raw.text @ model.w_txt)


def forward(model: ProjectionModel, P_raw: PairedEmbeddings) -> PairedEmbeddings:
    projected = project(model, P_raw)
    return PairedEmbeddings(normalize_rows(projected.image), normalize_rows(projected.text))


@dataclass
class AdamState:
    step: int = 0
    m: dict[str, NDArray | float] = field(default_factory=dict)
    v: dict[str, NDArray | float] = field(default_factory=dict)

    @classmethod
    def zeros(cls, params: Params) -> "AdamState":
        return cls(
            step=0,
            m={k: np.zeros_like(p) if isinstance(p, np.ndarray) else 0.0 for k, p in params.items()},
            v={k: np.zeros_like(p) if isinstance(p, np.ndarray) else 0.0 for k, p in params.items()},
        )


def adam_step(
    params: Params,
    grads: Params,
    state: AdamState,
    lr: float,
    wd: float = 0.0,
    betas: tuple[float, float] = (0.9, 0.98),
    eps: float = 1e-6,
    decay_keys: tuple[str, ...] = MATRICES,
) -> tuple[Params, AdamState]:
    """One Adam update with decoupled weight decay on ``decay_keys`` only."""
    if set(params) != set(grads):
        raise DimensionMismatch(f"parameter keys {sorted(params)} and gradient keys {sorted(grads)} differ")
    b1, b2 = betas
    t = state.step + 1
    new_params: Params = {}
    new_m: dict = {}
    new_v: dict = {}
    for key, p in params.items():
        g = grads[key]
        m = b1 * state.m[key] + (1.0 - b1) * g
        v = b2 * state.v[key] + (1.0 - b2) * g * g
        m_hat = m / (1.0 - b1**t)
        v_hat = v / (1.0 - b2**t)
        update = m_hat / (np.sqrt(v_hat) + eps)
        if key in decay_keys:
            update = update + wd * p
        new_params[key] = p - lr * update
        new_m[key], new_v[key] = m, v
    return new_params, AdamState(step=t, m=new_m, v=new_v)


def save_model(path: Path | str, model: ProjectionModel) -> None:
    """Length-prefixed JSON header of scalars followed by one EMB1 section per matrix."""
    sections = [encode_emb(getattr(model, name), unit=False) for name in MATRICES]
    header = {
        "log_tau1": model.log_tau1,
        "log_tau2": model.log_tau2,
        "sections": [{"name": name, "bytes": len(blob)} for name, blob in zip(MATRICES, sections)],
    }
    head = json.dumps(header, sort_keys=True).encode("utf-8")
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(_HEADER_LEN.pack(len(head)) + head + b"".join(sections))
    os.replace(tmp, path)
    logger.info(f"Saved model to {path}")


def load_model(path: Path | str) -> ProjectionModel:
    path = Path(path)
    data = path.read_bytes()
    if len(data) < _HEADER_LEN.size:
        raise TruncatedFile(f"{path}: missing header length")
    (head_len,) = _HEADER_LEN.unpack_from(data)
    offset = _HEADER_LEN.size + head_len
    if len(data) < offset:
        raise TruncatedFile(f"{path}: header needs {head_len} bytes")
    header = json.loads(data[_HEADER_LEN.size : offset].decode("utf-8"))

    matrices = {}
    for section in header["sections"]:
        rows, consumed = decode_emb(data[offset : offset + section["bytes"]], source=f"{path}:{section['name']}", unit=False)
        matrices[section["name"]] = rows
        offset += consumed
    return ProjectionModel(
        w_img=matrices["w_img"],
        w_txt=matrices["w_txt"],
        log_tau1=float(header["log_tau1"]),
        log_tau2=float(header["log_tau2"]),
    )
