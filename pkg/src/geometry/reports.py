from enum import StrEnum

import pandas as pd
from pydantic import BaseModel, ConfigDict, Field


class Direction(StrEnum):
    IMAGE_TO_TEXT = "image_to_text"
    TEXT_TO_IMAGE = "text_to_image"


class _Report(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    def to_frame(self) -> pd.DataFrame:
        """Single-row table with columns in field order."""
        return pd.DataFrame([self.model_dump(mode="json")], columns=list(type(self).model_fields))


class MetricReport(_Report):
    alignment: float
    uniformity: float = Field(ge=0.0)
    modality_gap_norm: float = Field(ge=0.0, le=2.0 + 1e-9)
    shift_lambda: float = 0.0
    n_pairs: int
    dim: int
    alignment_count: int
    uniformity_count: int
    gap_count: int


class RecallReport(_Report):
    direction: Direction
    k: int = Field(ge=1)
    recall: float = Field(ge=0.0, le=1.0)
    n_queries: int


class ReliabilityBin(_Report):
    bin_lo: float
    bin_hi: float
    count: int = Field(ge=0)
    mean_conf: float | None
    mean_acc: float | None


class EceReport(_Report):
    n_bins: int = Field(ge=1)
    ece: float = Field(ge=0.0, le=1.0)
    n_queries: int
    tau: float | None = None
    bins: list[ReliabilityBin]

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([{"n_bins": self.n_bins, "ece": self.ece, "n_queries": self.n_queries, "tau": self.tau}])

    def bins_frame(self) -> pd.DataFrame:
        """Reliability-diagram table; empty bins have blank means."""
        return pd.DataFrame([b.model_dump() for b in self.bins], columns=list(ReliabilityBin.model_fields))


class SimilarityDiagnostics(_Report):
    pos_sim: float
    top1_neg_sim_i2t: float
    top1_neg_sim_t2i: float
