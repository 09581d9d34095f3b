"""Synthetic paired video/caption data with planted concepts.

Each concept owns a patch-space vector and a temporal envelope. Object
patches carry ``concept * envelope[f]``, the remaining patches carry
vectors from a shared distractor pool, and everything gets Gaussian noise.
Adaptation splits additionally pass through a fixed affine distortion
scaled by ``domain_shift``. Captions are template expansions of the
item's concepts, so text and video share the concept structure.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import structlog

from ..config import GeneratorConfig
from ..encoders import TextBatch, VideoBatch, encode_tokens
from ..errors import ConfigError
from ..numcore import Rng

logger = structlog.get_logger(__name__)

SPLITS = ("pretrain", "adapt_train", "adapt_val", "adapt_test")
SPECIAL_TOKENS = ("<pad>", "<sos>", "<eos>")
TEMPLATE = ("person", "does")
JOINER = "and"
SEPARABILITY_FLOOR = 0.95


def vocabulary(n_concepts: int) -> List[str]:
    return list(SPECIAL_TOKENS) + list(TEMPLATE) + [JOINER] + [f"action{c}" for c in range(n_concepts)]


def caption_words(concepts: Sequence[int], n_concepts: int) -> List[int]:
    """Word ids of 'person does action_a and person does action_b ...'."""
    vocab = vocabulary(n_concepts)
    index = {word: i for i, word in enumerate(vocab)}
    words: List[int] = []
    for j, c in enumerate(concepts):
        if j:
            words.append(index[JOINER])
        words.extend(index[w] for w in TEMPLATE)
        words.append(index[f"action{c}"])
    return words


def caption_length(labels: int) -> int:
    return (len(TEMPLATE) + 1) * labels + (labels - 1)


@dataclass
class PairedSplit:
    name: str
    video: VideoBatch
    text: TextBatch
    concepts: List[Tuple[int, ...]]
    item_ids: np.ndarray

    def __len__(self) -> int:
        return len(self.item_ids)

    @property
    def labels(self) -> np.ndarray:
        return self.video.labels

    @property
    def primary_labels(self) -> np.ndarray:
        return np.array([c[0] for c in self.concepts], dtype=np.int64)

    def take(self, indices: Sequence[int]) -> "PairedSplit":
        idx = np.asarray(indices, dtype=np.int64)
        return PairedSplit(
            self.name,
            self.video.take(idx),
            self.text.take(idx),
            [self.concepts[i] for i in idx],
            self.item_ids[idx],
        )


@dataclass
class SyntheticDataset:
    config: GeneratorConfig
    splits: Dict[str, PairedSplit]
    separability: Optional[float] = None
    vocab: List[str] = field(default_factory=list)

    @property
    def n_concepts(self) -> int:
        return self.config.n_concepts

    @property
    def multilabel(self) -> bool:
        return self.config.multilabel

    def class_texts(self) -> TextBatch:
        """One caption per concept, for zero-shot style classification."""
        return encode_tokens([caption_words([c], self.n_concepts) for c in range(self.n_concepts)], self.config.N_w)


@dataclass
class SyntheticWorld:
    """The latent structure shared by every item of a dataset."""

    concepts: np.ndarray  # [C, patch_dim]
    envelopes: np.ndarray  # [C, T]
    distractors: np.ndarray  # [D, patch_dim]
    rotation: np.ndarray  # [patch_dim, patch_dim]
    offset: np.ndarray  # [patch_dim]

    @classmethod
    def sample(cls, cfg: GeneratorConfig, rng: Rng) -> "SyntheticWorld":
        C, T, d = cfg.n_concepts, cfg.T, cfg.patch_dim
        phases = rng.uniform(C, 0.0, 2 * np.pi)
        envelopes = 1.0 + 0.5 * np.sin(2 * np.pi * np.arange(T)[None, :] / T + phases[:, None])
        q, r = np.linalg.qr(rng.normal((d, d)))
        return cls(
            concepts=rng.normal((C, d)),
            envelopes=envelopes,
            distractors=rng.normal((2 * C, d), 0.5),
            rotation=q * np.where(np.diag(r) < 0, -1.0, 1.0),
            offset=rng.normal(d, 0.5),
        )

    def concept_component(self, concept: int) -> np.ndarray:
        """[T, patch_dim] signal an object patch of ``concept`` carries per frame."""
        return self.envelopes[concept][:, None] * self.concepts[concept][None, :]

    def shift(self, patches: np.ndarray, strength: float) -> np.ndarray:
        if strength == 0:
            return patches
        return (1.0 - strength) * patches + strength * (patches @ self.rotation.T + self.offset)


def _check_feasible(cfg: GeneratorConfig) -> None:
    if cfg.labels_per_item > cfg.n_concepts:
        raise ConfigError(
            f"labels_per_item={cfg.labels_per_item} exceeds n_concepts={cfg.n_concepts}", field="labels_per_item"
        )
    needed = len(vocabulary(cfg.n_concepts))
    if cfg.vocab < needed:
        raise ConfigError(f"vocab={cfg.vocab} is smaller than the {needed} words the templates need", field="vocab")
    longest = caption_length(cfg.labels_per_item if cfg.multilabel else 1)
    if longest > cfg.N_w:
        raise ConfigError(f"captions of up to {longest} words do not fit N_w={cfg.N_w}", field="N_w")


def split_sizes(cfg: GeneratorConfig) -> Dict[str, int]:
    bounds = np.round(np.cumsum([cfg.split_fractions[s] for s in SPLITS]) * cfg.n_items).astype(int)
    bounds[-1] = cfg.n_items
    sizes = np.diff(np.concatenate([[0], bounds]))
    return dict(zip(SPLITS, (int(s) for s in sizes)))


def _item(world: SyntheticWorld, cfg: GeneratorConfig, concepts: Tuple[int, ...], rng: Rng) -> np.ndarray:
    T, N_p = cfg.T, cfg.N_p
    n_obj = max(1, int(round(cfg.object_fraction * N_p)))
    objects = np.sort(rng.permutation(N_p)[:n_obj])
    patches = world.distractors[rng.integers(0, len(world.distractors), (T, N_p))]
    for j, p in enumerate(objects):
        patches[:, p] = world.concept_component(concepts[j % len(concepts)])
    return patches + rng.normal((T, N_p, cfg.patch_dim), cfg.noise_std)


def _draw_concepts(cfg: GeneratorConfig, rng: Rng) -> Tuple[int, ...]:
    m = int(rng.integers(1, cfg.labels_per_item + 1)) if cfg.multilabel else 1
    return tuple(int(c) for c in np.sort(rng.permutation(cfg.n_concepts)[:m]))


def nearest_centroid_accuracy(features: np.ndarray, concepts: Sequence[Tuple[int, ...]], n_concepts: int) -> float:
    """Share of items whose nearest concept centroid is one of their concepts."""
    centroids = np.zeros((n_concepts, features.shape[1]))
    for c in range(n_concepts):
        members = [i for i, cs in enumerate(concepts) if c in cs]
        if members:
            centroids[c] = features[members].mean(axis=0)
        else:
            centroids[c] = np.inf
    dists = ((features[:, None, :] - centroids[None]) ** 2).sum(axis=-1)
    predicted = np.argmin(dists, axis=1)
    return float(np.mean([p in cs for p, cs in zip(predicted, concepts)]))


def generate(cfg: GeneratorConfig) -> SyntheticDataset:
    """Build every split from ``cfg.seed``; the same config gives the same bytes."""
    _check_feasible(cfg)
    rng = Rng(cfg.seed)
    world = SyntheticWorld.sample(cfg, rng.child("world"))
    items_rng = rng.child("items")

    splits: Dict[str, PairedSplit] = {}
    next_id = 0
    for name, size in split_sizes(cfg).items():
        strength = 0.0 if name == "pretrain" else cfg.domain_shift
        concepts = [_draw_concepts(cfg, items_rng) for _ in range(size)]
        patches = np.zeros((size, cfg.T, cfg.N_p, cfg.patch_dim), dtype=np.float32)
        for i, cs in enumerate(concepts):
            patches[i] = world.shift(_item(world, cfg, cs, items_rng), strength)
        labels = np.zeros((size, cfg.n_concepts), dtype=np.float64)
        for i, cs in enumerate(concepts):
            labels[i, list(cs)] = 1.0
        text = encode_tokens([caption_words(cs, cfg.n_concepts) for cs in concepts], cfg.N_w)
        ids = np.arange(next_id, next_id + size, dtype=np.int64)
        next_id += size
        splits[name] = PairedSplit(name, VideoBatch(patches, labels), text, concepts, ids)

    dataset = SyntheticDataset(cfg, splits, vocab=vocabulary(cfg.n_concepts))
    pretrain = splits["pretrain"]
    if len(pretrain):
        features = pretrain.video.patches.reshape(len(pretrain), -1, cfg.patch_dim).mean(axis=1)
        dataset.separability = nearest_centroid_accuracy(features, pretrain.concepts, cfg.n_concepts)
        if dataset.separability < SEPARABILITY_FLOOR:
            logger.warning("synthetic concepts weakly separable", accuracy=dataset.separability)
    logger.info(
        "dataset generated",
        sizes={name: len(s) for name, s in splits.items()},
        separability=dataset.separability,
    )
    return dataset
