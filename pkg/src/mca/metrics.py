"""Affinity, Diversity and expected calibration error."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .augment import apply_augmentation
from .data import VideoDataset
from .smallnet import SmallNet, predict_logits, softmax


def accuracy(probs, labels) -> float:
    probs = np.asarray(probs)
    labels = np.asarray(labels)
    if len(labels) == 0:
        raise ValueError("accuracy of an empty set")
    return float((probs.argmax(axis=1) == labels).mean())


def _predict(model, videos) -> np.ndarray:
    if isinstance(model, SmallNet):
        return softmax(predict_logits(model, videos).astype(np.float64))
    return np.asarray(model(videos))


@dataclass
class AffinityResult:
    tau: float
    acc_clean: float
    acc_augmented: float
    augmentation: str


def affinity_ratio(acc_augmented: float, acc_clean: float) -> float:
    if acc_clean == 0:
        raise ZeroDivisionError("affinity undefined: clean accuracy is 0")
    return acc_augmented / acc_clean


def affinity(model, val: VideoDataset, augmentation: str = "swapmix", seed: int = 0,
             alpha: float = 1.0) -> AffinityResult:
    """Accuracy on the augmented validation set over accuracy on the clean one.

    ``model`` is a :class:`SmallNet` or any callable mapping a float video
    batch to class probabilities.  The augmentation draws from a generator
    seeded with ``seed``.
    """
    clean = val.videos.astype(np.float32) / np.float32(255)
    augmented = apply_augmentation(val.videos, augmentation, np.random.default_rng(seed), alpha)
    acc_clean = accuracy(_predict(model, clean), val.labels)
    acc_aug = accuracy(_predict(model, augmented), val.labels)
    return AffinityResult(affinity_ratio(acc_aug, acc_clean), acc_clean, acc_aug, augmentation)


def diversity(loss_aug_trained: float, loss_clean_trained: float) -> float:
    """Final training loss of the augmentation-trained model (on augmented data)
    over that of the clean-trained model (on clean data)."""
    if loss_clean_trained == 0:
        raise ZeroDivisionError("diversity undefined: clean training loss is 0")
    return loss_aug_trained / loss_clean_trained


def ece(probs, labels, n_bins: int = 15) -> float:
    """Expected calibration error with ``n_bins`` equal-width confidence bins.

    Bin ``b`` covers ``((b-1)/n, b/n]``; a confidence of exactly 0 falls in the
    first bin.  Per-bin sums use compensated summation so the result does not
    depend on sample order.
    """
    if n_bins < 1:
        raise ValueError("n_bins must be >= 1")
    probs = np.asarray(probs, dtype=np.float64)
    labels = np.asarray(labels)
    if probs.ndim != 2 or len(probs) == 0:
        raise ValueError("ece needs a non-empty N x K array of probabilities")
    conf = probs.max(axis=1)
    correct = (probs.argmax(axis=1) == labels).astype(np.float64)
    # compare against the edges themselves: ceil(conf * n) misplaces some
    # confidences that sit exactly on an edge such as 7/25
    edges = np.arange(n_bins + 1) / n_bins
    bins = np.clip(np.searchsorted(edges, conf, side="left") - 1, 0, n_bins - 1)
    gaps = []
    for b in np.unique(bins):
        sel = bins == b
        gaps.append(abs(math.fsum(correct[sel]) - math.fsum(conf[sel])))
    return math.fsum(gaps) / len(conf)


@dataclass
class MetricsReport:
    accuracy: float | None = None
    affinity: float | None = None
    diversity: float | None = None
    ece: float | None = None
    ece_bins: int = 15
    sources: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)
