"""Common machinery for the trainable networks: parameter registry,
input standardization and persistence through :mod:`densehar.container`."""
from __future__ import annotations

from dataclasses import asdict

import numpy as np

from . import container
from .data import ChannelStats, standardize_apply
from .errors import DimensionError, FormatError
from .layers import Conv1d, UpConv1d

_REGISTRY: dict = {}


def register(cls):
    _REGISTRY[cls.kind] = cls
    return cls


class Network:
    kind = "network"
    config_type = None

    def __init__(self, config):
        self.config = config
        self.stats: ChannelStats | None = None
        self.modules: dict = {}

    # subclasses fill self.modules in construction order and implement these
    def forward(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad_logits: np.ndarray) -> None:
        raise NotImplementedError

    @property
    def in_channels(self) -> int:
        return self.config.in_channels

    @property
    def num_classes(self) -> int:
        return self.config.num_classes

    def parameters(self) -> dict:
        out = {}
        for mname, module in self.modules.items():
            for pname, p in module.params().items():
                out[f"{mname}.{pname}"] = p
        return out

    def num_parameters(self) -> int:
        return sum(p.value.size for p in self.parameters().values())

    def zero_grad(self) -> None:
        for p in self.parameters().values():
            p.zero_grad()

    def conv_layers(self) -> list:
        """Every convolution and up-convolution layer, in construction order."""
        found = []

        def walk(obj):
            if isinstance(obj, (Conv1d, UpConv1d)):
                found.append(obj)
            for child in getattr(obj, "layers", []):
                walk(child)

        for module in self.modules.values():
            walk(module)
        return found

    def conv_layer_count(self) -> int:
        return len(self.conv_layers())

    def normalize(self, x: np.ndarray) -> np.ndarray:
        """Apply the training-set channel statistics (identity before fitting)."""
        x = np.asarray(x, dtype=np.float64)
        if x.shape[-2] != self.in_channels:
            raise DimensionError(
                f"model expects {self.in_channels} channels, got {x.shape[-2]}"
            )
        return x if self.stats is None else standardize_apply(self.stats, x)

    # -- persistence --------------------------------------------------------
    def config_dict(self) -> dict:
        return asdict(self.config)

    def state_arrays(self) -> dict:
        arrays = {name: p.value for name, p in self.parameters().items()}
        if self.stats is not None:
            arrays["norm.mean"] = self.stats.mean
            arrays["norm.std"] = self.stats.std
        return arrays

    def load_state(self, arrays: dict) -> None:
        params = self.parameters()
        missing = set(params) - set(arrays)
        if missing:
            raise FormatError(f"model file lacks parameters: {sorted(missing)[:3]}")
        for name, p in params.items():
            if arrays[name].shape != p.value.shape:
                raise FormatError(f"{name}: stored shape {arrays[name].shape} != {p.value.shape}")
            p.value[...] = arrays[name]
        if "norm.mean" in arrays:
            self.stats = ChannelStats(arrays["norm.mean"].copy(), arrays["norm.std"].copy())

    def save(self, path) -> None:
        container.save(path, self.kind, self.config_dict(), self.state_arrays())

    @classmethod
    def from_parts(cls, config: dict, arrays: dict):
        try:
            cfg = cls.config_type(**config)
        except TypeError as exc:
            raise FormatError(f"bad {cls.kind} config block: {exc}") from exc
        model = cls(cfg)
        model.load_state(arrays)
        return model

    @classmethod
    def load(cls, path):
        kind, config, arrays = container.load(path)
        if kind != cls.kind:
            raise FormatError(f"expected a {cls.kind} model file, found {kind!r}")
        return cls.from_parts(config, arrays)


def load_model(path):
    """Load any registered model kind from a container file."""
    kind, config, arrays = container.load(path)
    try:
        cls = _REGISTRY[kind]
    except KeyError:
        raise FormatError(f"unknown model kind {kind!r}") from None
    return cls.from_parts(config, arrays)
