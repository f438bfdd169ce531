"""1D U-Net for per-sample activity labelling.

The contracting path has ``levels`` resolution levels of two 1x3 convolutions
(width ``base_features * 2**level``) separated by 1x2 max pools; the expansive
path mirrors it with a 1x2 up-convolution, concatenation with the matching
contracting features, and two more 1x3 convolutions. A 1x1 convolution maps
the top features to class logits. With the defaults this is 28 convolution
layers over sub-sequences of 224 samples.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, GeometryError
from .layers import Conv1d, MaxPool, UpConv1d, conv_block
from .network import Network, load_model, register
from .training import TrainConfig, TrainingLog, fit_dense, predict_dense

__all__ = [
    "UNetConfig",
    "UNetModel",
    "build",
    "forward",
    "fit",
    "predict_dense",
    "save",
    "load",
    "expected_conv_layers",
]


@dataclass
class UNetConfig:
    in_channels: int = 3
    num_classes: int = 6
    base_features: int = 32
    levels: int = 6
    subseq_length: int = 224
    seed: int = 0

    def __post_init__(self):
        for name in ("in_channels", "num_classes", "base_features", "levels", "subseq_length"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        factor = 2 ** (self.levels - 1)
        if self.subseq_length % factor:
            raise ConfigError(
                f"sub-sequence length {self.subseq_length} is not divisible by 2**{self.levels - 1} = {factor}"
            )

    def widths(self) -> list[int]:
        return [self.base_features * 2**i for i in range(self.levels)]


def expected_conv_layers(levels: int) -> int:
    """Two convs per level, (up-conv + two convs) per merge, one 1x1 head."""
    return 2 * levels + 3 * (levels - 1) + 1


@register
class UNetModel(Network):
    kind = "unet"
    config_type = UNetConfig

    def __init__(self, config: UNetConfig):
        super().__init__(config)
        rng = np.random.default_rng(config.seed)
        widths = config.widths()
        c_in = config.in_channels
        for i, w in enumerate(widths):
            self.modules[f"down{i}"] = conv_block(c_in, w, rng)
            c_in = w
        for i in reversed(range(config.levels - 1)):
            self.modules[f"up{i}"] = UpConv1d(widths[i + 1], widths[i], 2, rng=rng)
            self.modules[f"merge{i}"] = conv_block(2 * widths[i], widths[i], rng)
        self.modules["head"] = Conv1d(widths[0], config.num_classes, 1, rng=rng)
        self.pools = [MaxPool() for _ in range(config.levels - 1)]
        self.zero_skips = False
        self._split = {}

    @property
    def head(self) -> Conv1d:
        return self.modules["head"]

    def forward(self, x: np.ndarray) -> np.ndarray:
        """Logits [B, N_c, N] for a standardized batch [B, N_s, N]."""
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 3 or x.shape[2] != self.config.subseq_length:
            raise GeometryError(
                f"U-Net expects input [B, {self.in_channels}, {self.config.subseq_length}], got {x.shape}"
            )
        levels = self.config.levels
        skips = []
        for i in range(levels):
            x = self.modules[f"down{i}"].forward(x)
            if i < levels - 1:
                skips.append(x)
                x = self.pools[i].forward(x)
        self._split = {}
        for i in reversed(range(levels - 1)):
            up = self.modules[f"up{i}"].forward(x)
            skip = np.zeros_like(skips[i]) if self.zero_skips else skips[i]
            self._split[i] = up.shape[1]
            x = self.modules[f"merge{i}"].forward(np.concatenate([up, skip], axis=1))
        return self.head.forward(x)

    def backward(self, grad_logits: np.ndarray) -> None:
        levels = self.config.levels
        g = self.head.backward(grad_logits)
        skip_grads = [None] * (levels - 1)
        for i in range(levels - 1):
            g = self.modules[f"merge{i}"].backward(g)
            n_up = self._split[i]
            skip_grads[i] = None if self.zero_skips else g[:, n_up:]
            g = self.modules[f"up{i}"].backward(np.ascontiguousarray(g[:, :n_up]))
        for i in reversed(range(levels)):
            if i < levels - 1:
                g = self.pools[i].backward(g)
                if skip_grads[i] is not None:
                    g = g + skip_grads[i]
            g = self.modules[f"down{i}"].backward(g)


def build(config: UNetConfig) -> UNetModel:
    return UNetModel(config)


def forward(model: UNetModel, batch: np.ndarray) -> np.ndarray:
    return model.forward(batch)


def fit(model: UNetModel, train_set, cfg: TrainConfig | None = None, on_epoch=None) -> TrainingLog:
    return fit_dense(model, train_set, cfg or TrainConfig(), on_epoch)


def save(model: UNetModel, path) -> None:
    model.save(path)


def load(path) -> UNetModel:
    return UNetModel.load(path)
