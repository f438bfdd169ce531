"""Mini-batch Adam training loop and overlap-free tiled dense prediction,
shared by the U-Net, the FCN and the windowed CNN."""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, asdict
from typing import Callable, Sequence

import numpy as np

from .data import LabeledSeries, SubSequence, standardize_fit
from .errors import ConfigError, GeometryError, InputError, LabelError
from .tensor import adam_step, softmax_cross_entropy


@dataclass
class TrainConfig:
    learning_rate: float = 0.001
    batch_size: int = 32
    epochs: int = 100
    test_fraction: float = 0.3
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate < 0:
            raise ConfigError("learning_rate must be nonnegative")
        if self.batch_size < 1 or self.epochs < 1:
            raise ConfigError("batch_size and epochs must be positive")
        if not 0.0 < self.test_fraction < 1.0:
            raise ConfigError("test_fraction must be in (0, 1)")


@dataclass
class EpochRecord:
    epoch: int
    mean_loss: float
    wall_time: float
    steps: int


@dataclass
class TrainingLog:
    epochs: list = field(default_factory=list)

    @property
    def losses(self) -> list:
        return [e.mean_loss for e in self.epochs]

    @property
    def steps(self) -> int:
        return sum(e.steps for e in self.epochs)

    def as_dicts(self) -> list:
        return [asdict(e) for e in self.epochs]


def train_arrays(
    model,
    inputs: np.ndarray,
    targets: np.ndarray,
    cfg: TrainConfig,
    on_epoch: Callable[[EpochRecord], None] | None = None,
) -> TrainingLog:
    """Run ``cfg.epochs`` passes of shuffled mini-batch Adam.

    ``inputs`` must already be standardized. ``targets`` has the input shape
    minus its channel axis (dense) or one class index per item (windowed).
    """
    n = len(inputs)
    if n == 0:
        raise InputError("training set is empty")
    if targets.size and (targets.min() < 0 or targets.max() >= model.num_classes):
        bad = int(targets.max() if targets.max() >= model.num_classes else targets.min())
        raise LabelError(f"label {bad} outside [0, {model.num_classes})")
    rng = np.random.default_rng(cfg.seed)
    params = list(model.parameters().values())
    log = TrainingLog()
    model.zero_grad()
    for epoch in range(1, cfg.epochs + 1):
        start = time.perf_counter()
        order = rng.permutation(n)
        total, steps = 0.0, 0
        for lo in range(0, n, cfg.batch_size):
            idx = order[lo : lo + cfg.batch_size]
            logits = model.forward(inputs[idx])
            loss, grad = softmax_cross_entropy(logits, targets[idx])
            model.backward(grad)
            for p in params:
                adam_step(p, cfg.learning_rate)
            total += loss * len(idx)
            steps += 1
        record = EpochRecord(epoch, total / n, time.perf_counter() - start, steps)
        log.epochs.append(record)
        if on_epoch is not None:
            on_epoch(record)
    return log


def fit_dense(model, train_set: Sequence[SubSequence], cfg: TrainConfig, on_epoch=None) -> TrainingLog:
    """Fit a dense (per-sample) network on labelled sub-sequences.

    Channel statistics are taken from ``train_set`` and stored on the model.
    """
    if not train_set:
        raise InputError("training set is empty")
    length = model.config.subseq_length
    for s in train_set:
        if s.values.shape[-1] != length or s.dense_labels.size != length:
            raise GeometryError(
                f"sub-sequence at origin {s.origin} has length {s.values.shape[-1]}, model expects {length}"
            )
    model.stats = standardize_fit(train_set)
    x = model.normalize(np.stack([s.values for s in train_set]))
    y = np.stack([s.dense_labels for s in train_set]).astype(np.int64)
    return train_arrays(model, x, y, cfg, on_epoch)


def forward_batched(model, x: np.ndarray, batch_size: int = 32) -> np.ndarray:
    return np.concatenate(
        [model.forward(x[lo : lo + batch_size]) for lo in range(0, len(x), batch_size)]
    )


def tile_series(channels: np.ndarray, length: int) -> np.ndarray:
    """Cut [C, T] into ``ceil(T / length)`` overlap-free tiles [n, C, length];
    the last tile is completed by repeating the final sample."""
    c, t = channels.shape
    n_tiles = math.ceil(t / length)
    padded = np.pad(channels, ((0, 0), (0, n_tiles * length - t)), mode="edge")
    return padded.reshape(c, n_tiles, length).transpose(1, 0, 2)


def predict_dense(model, series, batch_size: int = 32) -> np.ndarray:
    """One label per input sample for a [C, T] array or a LabeledSeries."""
    channels = series.channels if isinstance(series, LabeledSeries) else np.atleast_2d(series)
    t = channels.shape[-1]
    if t == 0:
        raise InputError("cannot predict an empty series")
    tiles = model.normalize(tile_series(np.asarray(channels, dtype=np.float64), model.config.subseq_length))
    logits = forward_batched(model, tiles, batch_size)  # [n, N_c, N]
    labels = np.argmax(logits, axis=1)  # first maximum wins
    return labels.reshape(-1)[:t].astype(np.int64)
