from .reports import Direction, EceReport, MetricReport, RecallReport, ReliabilityBin, SimilarityDiagnostics
from .sphere import (
    batch_geodesic_mix,
    batch_linear_mix,
    cosine_sim,
    flip_batch,
    geodesic_mix,
    l2_normalize,
    linear_mix_normalized,
    normalize_rows,
    pairwise_similarity,
)
from .types import PairedEmbeddings, as_batch

__all__ = [
    "Direction",
    "EceReport",
    "MetricReport",
    "PairedEmbeddings",
    "RecallReport",
    "ReliabilityBin",
    "SimilarityDiagnostics",
    "as_batch",
    "batch_geodesic_mix",
    "batch_linear_mix",
    "cosine_sim",
    "flip_batch",
    "geodesic_mix",
    "l2_normalize",
    "linear_mix_normalized",
    "normalize_rows",
    "pairwise_similarity",
]
