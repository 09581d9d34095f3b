"""Ranking and classification metrics.

Rankings sort by descending score and break ties by ascending index, so
every metric is deterministic even with tied scores.
"""

from typing import Dict, Tuple

import numpy as np
import structlog

from .errors import DimensionError

logger = structlog.get_logger(__name__)


def ranking(scores: np.ndarray) -> np.ndarray:
    """Indices of a 1-D score vector, best first."""
    return np.argsort(-np.asarray(scores, dtype=np.float64), kind="stable")


def average_precision(scores: np.ndarray, relevant: np.ndarray) -> float:
    """Mean of precision@rank over the ranks holding relevant items."""
    hits = np.asarray(relevant, dtype=bool)[ranking(scores)]
    if not hits.any():
        return 0.0
    ranks = np.flatnonzero(hits) + 1
    return float(np.mean(np.arange(1, len(ranks) + 1) / ranks))


def ndcg(scores: np.ndarray, gains: np.ndarray) -> float:
    """DCG with gain = relevance and discount 1/log2(rank + 1), over the ideal DCG."""
    gains = np.asarray(gains, dtype=np.float64)
    discounts = 1.0 / np.log2(np.arange(2, len(gains) + 2))
    ideal = float(np.sum(np.sort(gains)[::-1] * discounts))
    if ideal <= 0:
        return 0.0
    return float(np.sum(gains[ranking(scores)] * discounts)) / ideal


def _check_same_shape(op: str, scores: np.ndarray, other: np.ndarray) -> None:
    if scores.shape != other.shape:
        raise DimensionError(op, scores.shape, other.shape)


def multilabel_map(scores: np.ndarray, relevance: np.ndarray) -> Dict[str, float]:
    """Per-class AP over the item ranking, averaged over classes with a positive."""
    scores = np.asarray(scores, dtype=np.float64)
    relevance = np.asarray(relevance) > 0
    _check_same_shape("multilabel_map", scores, relevance)
    aps = [average_precision(scores[:, c], relevance[:, c]) for c in range(scores.shape[1]) if relevance[:, c].any()]
    skipped = scores.shape[1] - len(aps)
    if skipped:
        logger.warning("classes without positives excluded from mAP", skipped=skipped)
    return {"mAP": float(np.mean(aps)) if aps else 0.0, "classes": len(aps), "skipped": skipped}


def accuracy(scores: np.ndarray, labels: np.ndarray) -> Dict[str, float]:
    """Top-1 accuracy (argmax, lowest index on ties) and mean per-class recall."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.int64)
    if scores.shape[0] != labels.shape[0]:
        raise DimensionError("accuracy", scores.shape, labels.shape)
    if not len(labels):
        return {"top1": 0.0, "mean_class": 0.0, "classes": 0, "skipped": scores.shape[1]}
    correct = np.argmax(scores, axis=1) == labels
    present = np.unique(labels)
    recalls = [float(correct[labels == c].mean()) for c in present]
    skipped = scores.shape[1] - len(present)
    if skipped:
        logger.warning("classes absent from the evaluated items", skipped=skipped)
    return {
        "top1": float(correct.mean()),
        "mean_class": float(np.mean(recalls)),
        "classes": len(present),
        "skipped": skipped,
    }


def _direction(similarity: np.ndarray, relevance: np.ndarray) -> Tuple[float, float, int]:
    aps, gains = [], []
    skipped = 0
    for query in range(similarity.shape[0]):
        rel = relevance[query]
        if not np.any(rel > 0):
            skipped += 1
            continue
        aps.append(average_precision(similarity[query], rel > 0))
        gains.append(ndcg(similarity[query], rel))
    if not aps:
        return 0.0, 0.0, skipped
    return float(np.mean(aps)), float(np.mean(gains)), skipped


def retrieval_metrics(similarity: np.ndarray, relevance: np.ndarray) -> Dict[str, float]:
    """mAP and nDCG for video->text (rows as queries) and text->video (columns)."""
    similarity = np.asarray(similarity, dtype=np.float64)
    relevance = np.asarray(relevance, dtype=np.float64)
    _check_same_shape("retrieval_metrics", similarity, relevance)
    v2t_map, v2t_ndcg, v2t_skipped = _direction(similarity, relevance)
    t2v_map, t2v_ndcg, t2v_skipped = _direction(similarity.T, relevance.T)
    if v2t_skipped or t2v_skipped:
        logger.warning("queries without relevant items skipped", v2t=v2t_skipped, t2v=t2v_skipped)
    return {
        "v2t_mAP": v2t_map,
        "v2t_nDCG": v2t_ndcg,
        "t2v_mAP": t2v_map,
        "t2v_nDCG": t2v_ndcg,
        "v2t_skipped": v2t_skipped,
        "t2v_skipped": t2v_skipped,
    }


def jaccard_relevance(video_concepts: np.ndarray, text_concepts: np.ndarray) -> np.ndarray:
    """Graded relevance between multi-hot concept rows: |a & b| / |a | b|."""
    a = np.asarray(video_concepts, dtype=np.float64)
    b = np.asarray(text_concepts, dtype=np.float64)
    inter = a @ b.T
    union = a.sum(axis=1)[:, None] + b.sum(axis=1)[None, :] - inter
    return np.where(union > 0, inter / np.maximum(union, 1e-12), 0.0)
