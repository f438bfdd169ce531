"""Comparison models: a sliding-window CNN, an FCN dense labeller and a kNN
classifier over hand-crafted window features."""
from __future__ import annotations

from dataclasses import dataclass, asdict, field
from typing import Sequence

import numpy as np

from .data import (
    ChannelStats,
    LabeledSeries,
    Window,
    WindowSegment,
    extract_features,
    label_windows,
    standardize_apply,
    standardize_fit,
    window_segment,
)
from .errors import ConfigError, FormatError, GeometryError, InputError
from .layers import Conv1d, Linear, MaxPool, ReLU, Sequential, UpConv1d
from .network import Network, register
from .training import TrainConfig, fit_dense, forward_batched, predict_dense, train_arrays


def _as_segments(windows, labeler: str) -> list[WindowSegment]:
    if not windows:
        raise InputError("no windows given")
    if isinstance(windows[0], WindowSegment):
        return list(windows)
    return label_windows(windows, labeler)


def _window_values(windows) -> np.ndarray:
    if isinstance(windows, np.ndarray):
        return np.asarray(windows, dtype=np.float64)
    if not len(windows):
        raise InputError("no windows given")
    return np.stack([np.asarray(getattr(w, "values", w), dtype=np.float64) for w in windows])


# ---------------------------------------------------------------------------
# windowed CNN
# ---------------------------------------------------------------------------

@dataclass
class CnnConfig:
    in_channels: int = 3
    num_classes: int = 6
    window_size: int = 64
    widths: list = field(default_factory=lambda: [32, 64])
    hidden: int = 128
    seed: int = 0

    def __post_init__(self):
        self.widths = list(self.widths)
        factor = 2 ** len(self.widths)
        if self.window_size < factor or self.window_size % factor:
            raise GeometryError(
                f"window size {self.window_size} is not divisible by 2**{len(self.widths)} = {factor}"
            )
        if min(self.in_channels, self.num_classes, self.hidden, *self.widths) < 1:
            raise ConfigError("CNN sizes must be positive")


@register
class WindowedCnnModel(Network):
    """(1x3 conv + ReLU + 1x2 pool) blocks, then a hidden fully connected
    layer and a linear head: one class score vector per window."""

    kind = "cnn"
    config_type = CnnConfig

    def __init__(self, config: CnnConfig):
        super().__init__(config)
        rng = np.random.default_rng(config.seed)
        c_in = config.in_channels
        for i, w in enumerate(config.widths):
            self.modules[f"block{i}"] = Sequential(Conv1d(c_in, w, 3, padding=1, rng=rng), ReLU(), MaxPool())
            c_in = w
        flat = c_in * config.window_size // 2 ** len(config.widths)
        self.modules["fc"] = Sequential(Linear(flat, config.hidden, rng), ReLU())
        self.modules["head"] = Linear(config.hidden, config.num_classes, rng)
        self._shape = None

    @property
    def head(self) -> Linear:
        return self.modules["head"]

    @property
    def window_size(self) -> int:
        return self.config.window_size

    def forward(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 3 or x.shape[2] != self.window_size:
            raise GeometryError(f"CNN expects windows of length {self.window_size}, got shape {x.shape}")
        for i in range(len(self.config.widths)):
            x = self.modules[f"block{i}"].forward(x)
        self._shape = x.shape
        x = self.modules["fc"].forward(x.reshape(x.shape[0], -1))
        return self.head.forward(x)

    def backward(self, grad_logits):
        g = self.head.backward(grad_logits)
        g = self.modules["fc"].backward(g).reshape(self._shape)
        for i in reversed(range(len(self.config.widths))):
            g = self.modules[f"block{i}"].backward(g)


def cnn_train(
    windows: Sequence,
    labeler: str = "majority",
    cfg: TrainConfig | None = None,
    config: CnnConfig | None = None,
    on_epoch=None,
) -> WindowedCnnModel:
    """Train on raw windows (labelled with ``labeler``) or pre-labelled segments.

    The training log is attached as ``model.training_log``.
    """
    cfg = cfg or TrainConfig()
    segments = _as_segments(windows, labeler)
    values = _window_values(segments)
    labels = np.array([s.label for s in segments], dtype=np.int64)
    if config is None:
        config = CnnConfig(values.shape[1], int(labels.max()) + 1, values.shape[2], seed=cfg.seed)
    model = WindowedCnnModel(config)
    model.stats = standardize_fit(list(values))
    model.training_log = train_arrays(model, model.normalize(values), labels, cfg, on_epoch)
    return model


def cnn_predict(model: WindowedCnnModel, windows, batch_size: int = 32) -> np.ndarray:
    values = _window_values(windows)
    logits = forward_batched(model, model.normalize(values), batch_size)
    return np.argmax(logits, axis=1).astype(np.int64)


def cnn_predict_series(model: WindowedCnnModel, series, overlap_fraction: float = 0.5):
    """Window labels and window origins for a whole series."""
    if not isinstance(series, LabeledSeries):
        ch = np.atleast_2d(series)
        series = LabeledSeries(ch, np.zeros(ch.shape[1], dtype=np.int64))
    windows = window_segment(series, model.window_size, overlap_fraction)
    return cnn_predict(model, windows), np.array([w.origin for w in windows], dtype=np.int64)


# ---------------------------------------------------------------------------
# FCN
# ---------------------------------------------------------------------------

@dataclass
class FcnConfig:
    in_channels: int = 3
    num_classes: int = 6
    widths: list = field(default_factory=lambda: [32, 64, 128, 128, 128, 128])
    subseq_length: int = 192
    seed: int = 0

    def __post_init__(self):
        self.widths = list(self.widths)
        factor = 2 ** len(self.widths)
        if self.subseq_length % factor:
            raise GeometryError(
                f"FCN length {self.subseq_length} is not divisible by 2**{len(self.widths)} = {factor}"
            )
        if min(self.in_channels, self.num_classes, *self.widths) < 1:
            raise ConfigError("FCN sizes must be positive")

    @property
    def factor(self) -> int:
        return 2 ** len(self.widths)


@register
class FcnModel(Network):
    """Repeated (1x3 conv + ReLU + 1x2 pool) blocks, a 1x1 scoring conv and a
    single transposed convolution (kernel = stride = 2**blocks) back to full
    length."""

    kind = "fcn"
    config_type = FcnConfig

    def __init__(self, config: FcnConfig):
        super().__init__(config)
        rng = np.random.default_rng(config.seed)
        c_in = config.in_channels
        for i, w in enumerate(config.widths):
            self.modules[f"block{i}"] = Sequential(Conv1d(c_in, w, 3, padding=1, rng=rng), ReLU(), MaxPool())
            c_in = w
        self.modules["score"] = Conv1d(c_in, config.num_classes, 1, rng=rng)
        self.modules["upsample"] = UpConv1d(config.num_classes, config.num_classes, config.factor, rng=rng)

    @property
    def head(self) -> UpConv1d:
        return self.modules["upsample"]

    def forward(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 3 or x.shape[2] != self.config.subseq_length:
            raise GeometryError(
                f"FCN expects input [B, {self.in_channels}, {self.config.subseq_length}], got {x.shape}"
            )
        for i in range(len(self.config.widths)):
            x = self.modules[f"block{i}"].forward(x)
        return self.head.forward(self.modules["score"].forward(x))

    def backward(self, grad_logits):
        g = self.modules["score"].backward(self.head.backward(grad_logits))
        for i in reversed(range(len(self.config.widths))):
            g = self.modules[f"block{i}"].backward(g)


def fcn_build(config: FcnConfig) -> FcnModel:
    return FcnModel(config)


def fcn_train(model: FcnModel, train_set, cfg: TrainConfig | None = None, on_epoch=None):
    return fit_dense(model, train_set, cfg or TrainConfig(), on_epoch)


def fcn_predict_dense(model: FcnModel, series, batch_size: int = 32) -> np.ndarray:
    return predict_dense(model, series, batch_size)


# ---------------------------------------------------------------------------
# kNN
# ---------------------------------------------------------------------------

@register
@dataclass
class KnnIndex:
    """Standardized feature matrix of the training windows."""

    kind = "knn"

    features: np.ndarray  # [n, 7*C], standardized
    labels: np.ndarray
    stats: ChannelStats
    k: int = 5
    window_size: int = 0
    num_classes: int = 0
    in_channels: int = 0

    def __post_init__(self):
        if not 1 <= self.k <= len(self.labels):
            raise ConfigError(f"k={self.k} must be in [1, {len(self.labels)}]")

    def save(self, path) -> None:
        from . import container

        config = {
            "k": self.k,
            "window_size": self.window_size,
            "num_classes": self.num_classes,
            "in_channels": self.in_channels,
        }
        arrays = {
            "features": self.features,
            "labels": self.labels.astype(np.float64),
            "norm.mean": self.stats.mean,
            "norm.std": self.stats.std,
        }
        container.save(path, self.kind, config, arrays)

    @classmethod
    def from_parts(cls, config: dict, arrays: dict) -> "KnnIndex":
        try:
            return cls(
                arrays["features"],
                arrays["labels"].astype(np.int64),
                ChannelStats(arrays["norm.mean"], arrays["norm.std"]),
                **config,
            )
        except (KeyError, TypeError) as exc:
            raise FormatError(f"bad knn model file: {exc}") from exc

    @classmethod
    def load(cls, path) -> "KnnIndex":
        from .network import load_model

        index = load_model(path)
        if not isinstance(index, cls):
            raise FormatError(f"expected a knn model file, found {index.kind!r}")
        return index


def _feature_matrix(values: np.ndarray) -> np.ndarray:
    return np.stack([extract_features(v) for v in values])


def knn_fit(windows: Sequence, labeler: str = "majority", k: int = 5, num_classes: int | None = None) -> KnnIndex:
    segments = _as_segments(windows, labeler)
    values = _window_values(segments)
    labels = np.array([s.label for s in segments], dtype=np.int64)
    raw = _feature_matrix(values)
    stats = standardize_fit([raw.T])
    feats = standardize_apply(stats, raw.T).T
    return KnnIndex(
        np.ascontiguousarray(feats),
        labels,
        stats,
        k,
        values.shape[2],
        num_classes if num_classes is not None else int(labels.max()) + 1,
        values.shape[1],
    )


def knn_predict_many(index: KnnIndex, windows, chunk: int = 256) -> np.ndarray:
    values = _window_values(windows)
    if values.shape[1] != index.in_channels:
        raise GeometryError(f"kNN index expects {index.in_channels} channels, got {values.shape[1]}")
    queries = standardize_apply(index.stats, _feature_matrix(values).T).T
    n_classes = max(index.num_classes, int(index.labels.max()) + 1)
    out = np.empty(len(queries), dtype=np.int64)
    for lo in range(0, len(queries), chunk):
        q = queries[lo : lo + chunk]
        d2 = ((q[:, None, :] - index.features[None, :, :]) ** 2).sum(axis=2)
        nearest = np.argsort(d2, axis=1, kind="stable")[:, : index.k]
        for j, row in enumerate(nearest):
            out[lo + j] = np.argmax(np.bincount(index.labels[row], minlength=n_classes))
    return out


def knn_predict(index: KnnIndex, window) -> int:
    values = np.asarray(getattr(window, "values", window), dtype=np.float64)
    return int(knn_predict_many(index, values[None])[0])


def knn_predict_series(index: KnnIndex, series, overlap_fraction: float = 0.5):
    if not isinstance(series, LabeledSeries):
        ch = np.atleast_2d(series)
        series = LabeledSeries(ch, np.zeros(ch.shape[1], dtype=np.int64))
    windows = window_segment(series, index.window_size, overlap_fraction)
    return knn_predict_many(index, windows), np.array([w.origin for w in windows], dtype=np.int64)
