"""Training loop for plain CE, MCA (SwapMix + variation alignment) and the ablations.

Random streams are split three ways from the run seed: parameter
initialisation, epoch shuffling and augmentation.  Every iteration draws the
gate value and one permutation/lambda per sample regardless of mode, so runs
that differ only in mode, ``rho`` or ``lambda_av`` see identical batches and,
where the maths coincides, follow bit-identical trajectories.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .augment import channel_swap_batch, mca_gate, sample_batch_params, swap_mix_batch
from .data import VideoDataset
from .smallnet import (
    NetConfig,
    NumericalError,
    SmallNet,
    av_loss,
    backward,
    ce_loss,
    forward,
    predict_logits,
    sgd_step,
    softmax,
)

log = logging.getLogger(__name__)

MODES = ("baseline", "channel-swap-ce", "swapmix-ce", "expand-set", "mca-plus-ce-tilde", "mca")
LOG_FIELDS = ("epoch", "train_acc", "train_ce", "av_loss", "val_acc", "val_acc_hueshift")


@dataclass
class TrainConfig:
    mode: str = "mca"
    epochs: int = 12
    batch_size: int = 32
    lr: float = 0.05
    lr_decay: float = 0.1
    lr_milestones: tuple[float, ...] = (0.5, 0.75)
    momentum: float = 0.9
    lambda_av: float = 1.0
    rho: float = 1.0
    alpha: float = 1.0
    seed: int = 0
    av_bidirectional: bool = False
    conv1: int = 16
    conv2: int = 32
    diff_gain: float = 4.0

    def __post_init__(self):
        self.lr_milestones = tuple(self.lr_milestones)
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}, got {self.mode!r}")
        if self.epochs < 0 or self.batch_size < 1:
            raise ValueError("epochs must be >= 0 and batch_size >= 1")
        if self.lr < 0 or not 0 <= self.momentum < 1:
            raise ValueError("need lr >= 0 and momentum in [0, 1)")
        if self.lambda_av < 0:
            raise ValueError(f"lambda_av must be non-negative, got {self.lambda_av}")
        if not 0 <= self.rho <= 1:
            raise ValueError(f"rho must lie in [0, 1], got {self.rho}")
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    def net_config(self, num_classes: int, frames: int, size: int) -> NetConfig:
        return NetConfig(
            num_classes=num_classes, frames=frames, size=size,
            conv1=self.conv1, conv2=self.conv2, diff_gain=self.diff_gain,
        )

    def lr_at(self, epoch: int) -> float:
        drops = sum(epoch >= int(m * self.epochs) for m in self.lr_milestones)
        return self.lr * self.lr_decay**drops


@dataclass
class StepRecord:
    loss: float
    ce: float
    av: float
    correct: int
    count: int
    gate: bool


@dataclass
class EvalResult:
    accuracy: float
    loss: float
    probs: np.ndarray
    labels: np.ndarray


@dataclass
class TrainResult:
    net: SmallNet
    log: list[dict] = field(default_factory=list)


def make_streams(seed: int):
    """Independent generators for initialisation, shuffling and augmentation."""
    init, shuffle, aug = np.random.SeedSequence(seed).spawn(3)
    return np.random.default_rng(init), np.random.default_rng(shuffle), np.random.default_rng(aug)


def _to_float(videos, dtype) -> np.ndarray:
    return videos.astype(dtype) / dtype.type(255)


def _branch(net, x):
    logits, cache = forward(net, x)
    return softmax(logits.astype(np.float64)), cache


def train_step(
    net: SmallNet, videos, labels, cfg: TrainConfig, rng: np.random.Generator, lr: float | None = None
) -> StepRecord:
    """One optimiser step on a batch of uint8 or [0, 1] float videos."""
    labels = np.asarray(labels)
    n = len(labels)
    x = _to_float(videos, net.dtype) if videos.dtype == np.uint8 else videos.astype(net.dtype)
    gate = mca_gate(rng, cfg.rho)
    perms, lams = sample_batch_params(rng, n, cfg.alpha)
    lr = cfg.lr if lr is None else lr
    av_value = 0.0

    if cfg.mode == "baseline" or not gate:
        p, cache = _branch(net, x)
        ce = ce_loss(p, labels)
        backward(net, cache, ce.grad)
        total, ce_value, pred = ce.value, ce.value, p
    elif cfg.mode in ("swapmix-ce", "channel-swap-ce"):
        if cfg.mode == "swapmix-ce":
            xa = swap_mix_batch(x, perms, lams)
        else:
            xa = channel_swap_batch(x, perms)
        q, cache = _branch(net, xa)
        ce = ce_loss(q, labels)
        backward(net, cache, ce.grad)
        total, ce_value, pred = ce.value, ce.value, q
    else:
        xa = swap_mix_batch(x, perms, lams)
        p, cache = _branch(net, x)
        q, cache_a = _branch(net, xa)
        ce = ce_loss(p, labels)
        if cfg.mode == "expand-set":
            ce_a = ce_loss(q, labels)
            backward(net, cache, ce.grad / 2)
            backward(net, cache_a, ce_a.grad / 2)
            total = ce_value = (ce.value + ce_a.value) / 2
        else:
            av = av_loss(p, q, bidirectional=cfg.av_bidirectional)
            av_value = av.value
            grad_clean = ce.grad
            if cfg.av_bidirectional:
                grad_clean = grad_clean + cfg.lambda_av * av.grad_clean
            grad_aug = cfg.lambda_av * av.grad
            total = ce.value + cfg.lambda_av * av.value
            if cfg.mode == "mca-plus-ce-tilde":
                ce_a = ce_loss(q, labels)
                grad_aug = grad_aug + ce_a.grad
                total += ce_a.value
            backward(net, cache, grad_clean)
            backward(net, cache_a, grad_aug)
            ce_value = ce.value
        pred = p

    if not math.isfinite(total):
        raise NumericalError(f"non-finite loss {total}")
    sgd_step(net, lr, cfg.momentum)
    correct = int((pred.argmax(axis=1) == labels).sum())
    return StepRecord(total, ce_value, av_value, correct, n, gate)


def evaluate(net: SmallNet, ds: VideoDataset, chunk: int = 256) -> EvalResult:
    """Clean-input accuracy, mean CE and per-sample probabilities."""
    if len(ds) == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    logits = predict_logits(net, _to_float(ds.videos, net.dtype) if ds.videos.dtype == np.uint8 else ds.videos, chunk)
    probs = softmax(logits.astype(np.float64))
    ce = ce_loss(probs, ds.labels)
    acc = float((probs.argmax(axis=1) == ds.labels).mean())
    return EvalResult(acc, ce.value, probs, ds.labels.copy())


def run_training(
    cfg: TrainConfig,
    train: VideoDataset,
    val: VideoDataset | None = None,
    val_hueshift: VideoDataset | None = None,
) -> TrainResult:
    """Train from scratch; returns the final network and one log row per epoch."""
    _, t, _, h, w = train.videos.shape
    init_rng, shuffle_rng, aug_rng = make_streams(cfg.seed)
    net = SmallNet(cfg.net_config(train.num_classes, t, h), init_rng)
    result = TrainResult(net)
    log.info("training %s: %s", cfg.mode, asdict(cfg))
    for epoch in range(cfg.epochs):
        lr = cfg.lr_at(epoch)
        order = shuffle_rng.permutation(len(train))
        records = []
        for start in range(0, len(order), cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            records.append(train_step(net, train.videos[idx], train.labels[idx], cfg, aug_rng, lr))
        count = sum(r.count for r in records)
        row = {
            "epoch": epoch + 1,
            "train_acc": sum(r.correct for r in records) / count,
            "train_ce": sum(r.ce * r.count for r in records) / count,
            "av_loss": sum(r.av * r.count for r in records) / count,
            "val_acc": evaluate(net, val).accuracy if val is not None else float("nan"),
            "val_acc_hueshift": evaluate(net, val_hueshift).accuracy if val_hueshift is not None else float("nan"),
        }
        log.info("epoch %(epoch)d train_acc %(train_acc).4f train_ce %(train_ce).4f av %(av_loss).4f "
                 "val %(val_acc).4f val_hueshift %(val_acc_hueshift).4f", row)
        result.log.append(row)
    return result


def write_log_csv(rows, path) -> None:
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=LOG_FIELDS)
        writer.writeheader()
        for row in rows:
            writer.writerow({k: row[k] for k in LOG_FIELDS})
