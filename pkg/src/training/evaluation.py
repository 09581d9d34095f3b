"""Top-k evaluation passes: classification and cross-modal retrieval."""

from typing import Dict, Tuple

import numpy as np

from ..encoders import DualEncoder, TextBatch
from ..evalmetrics import accuracy, jaccard_relevance, multilabel_map, retrieval_metrics
from ..numcore import no_grad
from ..prompting import PromptingMethod
from ..synthdata import PairedSplit

TASKS = ("classify", "retrieve", "both")


def fit_frames(split: PairedSplit, T: int) -> PairedSplit:
    """The split with its clips subsampled to ``T`` frames."""
    if split.video.frames == T:
        return split
    return PairedSplit(split.name, split.video.subsample_frames(T), split.text, split.concepts, split.item_ids)


def _chunks(n: int, size: int):
    for start in range(0, n, size):
        yield np.arange(start, min(n, start + size))


def encode_videos(model: DualEncoder, method: PromptingMethod, split: PairedSplit, batch_size: int) -> np.ndarray:
    split = fit_frames(split, model.config.T)
    rows = []
    with no_grad():
        for idx in _chunks(len(split), batch_size):
            rows.append(model.encode_video(split.video.take(idx), method.build_pack(training=False)).values)
    return np.concatenate(rows) if rows else np.zeros((0, model.config.embed_dim))


def encode_texts(model: DualEncoder, method: PromptingMethod, texts: TextBatch, batch_size: int) -> np.ndarray:
    rows = []
    with no_grad():
        for idx in _chunks(len(texts), batch_size):
            rows.append(model.encode_text(texts.take(idx), method.build_pack(training=False)).values)
    return np.concatenate(rows) if rows else np.zeros((0, model.config.embed_dim))


def classification_scores(
    model: DualEncoder, method: PromptingMethod, split: PairedSplit, class_texts: TextBatch, batch_size: int
) -> Tuple[np.ndarray, np.ndarray]:
    """Cosine similarity of every video to every class caption: [n, C]."""
    videos = encode_videos(model, method, split, batch_size)
    classes = encode_texts(model, method, class_texts, batch_size)
    return videos @ classes.T, videos


def evaluate(
    model: DualEncoder,
    method: PromptingMethod,
    split: PairedSplit,
    class_texts: TextBatch,
    multilabel: bool,
    task: str = "both",
    batch_size: int = 32,
) -> Dict[str, float]:
    metrics: Dict[str, float] = {}
    if not len(split):
        return metrics
    videos = None
    if task in ("classify", "both"):
        scores, videos = classification_scores(model, method, split, class_texts, batch_size)
        if multilabel:
            metrics["mAP"] = multilabel_map(scores, split.labels)["mAP"]
        else:
            acc = accuracy(scores, split.primary_labels)
            metrics["top1"] = acc["top1"]
            metrics["mean_class"] = acc["mean_class"]
    if task in ("retrieve", "both"):
        if videos is None:
            videos = encode_videos(model, method, split, batch_size)
        texts = encode_texts(model, method, split.text, batch_size)
        report = retrieval_metrics(videos @ texts.T, jaccard_relevance(split.labels, split.labels))
        metrics.update({k: v for k, v in report.items() if not k.endswith("skipped")})
    return metrics
