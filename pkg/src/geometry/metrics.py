import logging
from collections.abc import Sequence

import numpy as np
import pandas as pd
from numpy.typing import ArrayLike, NDArray
from scipy.special import logsumexp, softmax

from errors import BatchTooSmall, DimensionMismatch, KTooLarge, OutOfRange
from geometry.reports import Direction, EceReport, MetricReport, RecallReport, ReliabilityBin, SimilarityDiagnostics
from geometry.sphere import l2_normalize, normalize_rows, pairwise_similarity
from geometry.types import PairedEmbeddings

logger = logging.getLogger(__name__)

MAX_SHIFT = 2.5
SHIFT_SWEEP = tuple(np.round(np.arange(-0.1, 0.1 + 1e-9, 0.01), 10))
SHIFT_SWEEP_WIDE = tuple(np.round(np.arange(-2.5, 2.5 + 1e-9, 0.125), 10))


def _squared_distances(a: NDArray, b: NDArray, threads: int) -> NDArray:
    sq = (a * a).sum(axis=1)[:, None] + (b * b).sum(axis=1)[None, :] - 2.0 * pairwise_similarity(a, b, threads=threads)
    return np.maximum(sq, 0.0)


def relative_alignment(P: PairedEmbeddings, *, threads: int = 1) -> float:
    """−mean_i(‖I_i − T_i‖² − min_{k≠i} ‖I_i − T_k‖²); higher is better."""
    if P.size < 2:
        raise BatchTooSmall("relative alignment needs a hardest negative, M >= 2")
    d2 = _squared_distances(P.image, P.text, threads)
    positive = np.diag(d2).copy()
    np.fill_diagonal(d2, np.inf)
    return float(-np.mean(positive - d2.min(axis=1)))


def uniformity(P: PairedEmbeddings, *, threads: int = 1) -> float:
    """−log mean over cross-modal negatives (i≠j) of exp(−2‖I_i − T_j‖²)."""
    m = P.size
    if m < 2:
        raise BatchTooSmall("uniformity needs at least one negative pair, M >= 2")
    d2 = _squared_distances(P.image, P.text, threads)
    off = ~np.eye(m, dtype=bool)
    value = -(logsumexp(-2.0 * d2[off]) - np.log(m * (m - 1)))
    return max(float(value), 0.0)


def modality_gap(P: PairedEmbeddings) -> tuple[NDArray[np.float64], float]:
    delta = P.image.mean(axis=0) - P.text.mean(axis=0)
    return delta, float(np.linalg.norm(delta))


def embedding_shift(P: PairedEmbeddings, shift_lambda: float) -> PairedEmbeddings:
    """Move both modalities toward (or away from) each other along the centroid delta."""
    if abs(shift_lambda) > MAX_SHIFT:
        raise OutOfRange(f"shift {shift_lambda} exceeds ±{MAX_SHIFT}")
    if shift_lambda == 0.0:
        return P
    delta, _ = modality_gap(P)
    half = shift_lambda * delta / 2.0
    return PairedEmbeddings(normalize_rows(P.image - half), normalize_rows(P.text + half))


def metric_report(P: PairedEmbeddings, *, shift_lambda: float = 0.0, threads: int = 1) -> MetricReport:
    _, gap = modality_gap(P)
    return MetricReport(
        alignment=relative_alignment(P, threads=threads),
        uniformity=uniformity(P, threads=threads),
        modality_gap_norm=gap,
        shift_lambda=shift_lambda,
        n_pairs=P.size,
        dim=P.dim,
        alignment_count=P.size,
        uniformity_count=P.size * (P.size - 1),
        gap_count=P.size,
    )


def embedding_shift_sweep(P: PairedEmbeddings, lambdas: Sequence[float] = SHIFT_SWEEP, *, threads: int = 1) -> pd.DataFrame:
    rows = []
    for lam in lambdas:
        report = metric_report(embedding_shift(P, float(lam)), shift_lambda=float(lam), threads=threads)
        rows.append(report.model_dump(mode="json"))
        logger.debug(f"shift {lam:+.3f}: gap {report.modality_gap_norm:.4f}, uniformity {report.uniformity:.4f}")
    return pd.DataFrame(rows, columns=list(MetricReport.model_fields))


def _queries(S: ArrayLike, direction: Direction) -> NDArray[np.float64]:
    S = np.asarray(S, dtype=np.float64)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise DimensionMismatch(f"similarity matrix must be square, got shape {S.shape}")
    return S if Direction(direction) is Direction.IMAGE_TO_TEXT else S.T


def recall_at_k(S: ArrayLike, k: int, direction: Direction) -> RecallReport:
    Q = _queries(S, direction)
    m = Q.shape[0]
    if k < 1 or k > m:
        raise KTooLarge(f"k={k} must lie in [1, {m}]")
    target = np.diag(Q)[:, None]
    col = np.arange(m)
    # ties resolve to the lower index
    rank = (Q > target).sum(axis=1) + ((Q == target) & (col[None, :] < col[:, None])).sum(axis=1)
    return RecallReport(direction=direction, k=k, recall=float(np.mean(rank < k)), n_queries=m)


def retrieval_confidences(S: ArrayLike, tau: float, direction: Direction) -> tuple[NDArray[np.float64], NDArray[np.bool_]]:
    if tau <= 0:
        raise OutOfRange(f"temperature must be positive, got {tau}")
    Q = _queries(S, direction)
    probs = softmax(Q / tau, axis=1)
    top = np.argmax(probs, axis=1)
    return probs.max(axis=1), top == np.arange(Q.shape[0])


def ece(confidence: ArrayLike, correct: ArrayLike, n_bins: int = 10, *, tau: float | None = None) -> EceReport:
    conf = np.asarray(confidence, dtype=np.float64)
    hit = np.asarray(correct, dtype=bool)
    if conf.ndim != 1 or conf.shape != hit.shape or conf.size < 1:
        raise DimensionMismatch(f"confidence {conf.shape} and correct {hit.shape} must be equal-length vectors")
    if n_bins < 1:
        raise OutOfRange(f"n_bins must be positive, got {n_bins}")
    if ((conf < 0) | (conf > 1)).any():
        raise OutOfRange("confidences must lie in [0, 1]")

    # bin b covers (b/n, (b+1)/n]; zero goes to the first bin
    index = np.clip(np.ceil(conf * n_bins).astype(int) - 1, 0, n_bins - 1)
    counts = np.bincount(index, minlength=n_bins)
    conf_sum = np.bincount(index, weights=conf, minlength=n_bins)
    acc_sum = np.bincount(index, weights=hit.astype(float), minlength=n_bins)

    bins = []
    total = 0.0
    for b in range(n_bins):
        if counts[b]:
            mean_conf, mean_acc = conf_sum[b] / counts[b], acc_sum[b] / counts[b]
            total += counts[b] / conf.size * abs(mean_acc - mean_conf)
        else:
            mean_conf = mean_acc = None
        bins.append(ReliabilityBin(bin_lo=b / n_bins, bin_hi=(b + 1) / n_bins, count=int(counts[b]), mean_conf=mean_conf, mean_acc=mean_acc))
    return EceReport(n_bins=n_bins, ece=min(total, 1.0), n_queries=int(conf.size), tau=tau, bins=bins)


def hard_negative_proportion(P: PairedEmbeddings, mixed: ArrayLike, *, threads: int = 1) -> tuple[float, float]:
    """Share of off-diagonal (anchor, mixed negative) similarities beating the anchor's positive."""
    mixed = np.asarray(mixed, dtype=np.float64)
    if mixed.shape != P.image.shape:
        raise DimensionMismatch(f"mixed batch {mixed.shape} does not match pairs {P.image.shape}")
    m = P.size
    if m < 2:
        raise BatchTooSmall("hard-negative proportion needs M >= 2")
    off = ~np.eye(m, dtype=bool)
    positive = np.einsum("ij,ij->i", P.image, P.text)[:, None]

    image_side = pairwise_similarity(P.image, mixed, threads=threads) > positive
    text_side = pairwise_similarity(P.text, mixed, threads=threads) > positive
    pairs = m * (m - 1)
    return float(image_side[off].sum() / pairs), float(text_side[off].sum() / pairs)


def top1_negative_similarity(P: PairedEmbeddings, *, threads: int = 1) -> SimilarityDiagnostics:
    if P.size < 2:
        raise BatchTooSmall("top-1 negative similarity needs M >= 2")
    S = pairwise_similarity(P.image, P.text, threads=threads)
    positive = float(np.diag(S).mean())
    np.fill_diagonal(S, -np.inf)
    return SimilarityDiagnostics(
        pos_sim=positive,
        top1_neg_sim_i2t=float(S.max(axis=1).mean()),
        top1_neg_sim_t2i=float(S.max(axis=0).mean()),
    )


def simat_transform(
    image_source: ArrayLike,
    text_source: ArrayLike,
    text_target: ArrayLike,
    strength: float,
    gallery: ArrayLike,
) -> tuple[NDArray[np.float64], int]:
    """x = I + strength·(T_target − T_source), then nearest gallery row by cosine."""
    image_source, text_source, text_target = (np.asarray(v, dtype=np.float64) for v in (image_source, text_source, text_target))
    gallery = np.asarray(gallery, dtype=np.float64)
    if gallery.ndim != 2 or gallery.shape[0] < 1:
        raise BatchTooSmall("gallery must hold at least one row")
    if not image_source.shape == text_source.shape == text_target.shape == gallery.shape[1:]:
        raise DimensionMismatch("source, target and gallery dimensions differ")

    x = image_source + strength * (text_target - text_source)
    scores = normalize_rows(gallery) @ l2_normalize(x)
    return x, int(np.argmax(scores))
