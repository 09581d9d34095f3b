"""Synthetic paired video/caption datasets and their on-disk format."""

from .generator import (
    SPLITS,
    PairedSplit,
    SyntheticDataset,
    SyntheticWorld,
    caption_words,
    generate,
    nearest_centroid_accuracy,
    split_sizes,
    vocabulary,
)
from .storage import dataset_checksums, load_dataset, save_dataset

__all__ = [
    "SPLITS",
    "PairedSplit",
    "SyntheticDataset",
    "SyntheticWorld",
    "caption_words",
    "generate",
    "nearest_centroid_accuracy",
    "split_sizes",
    "vocabulary",
    "dataset_checksums",
    "load_dataset",
    "save_dataset",
]
