"""Dense per-sample human activity segmentation for multi-channel sensor
streams: a 1D U-Net on a small numpy tensor core, sliding-window baselines and
a sample-level evaluation protocol."""
from . import baselines, data, evaluation, tensor, unet
from .errors import (
    ConfigError,
    DenseHarError,
    DimensionError,
    FormatError,
    GeometryError,
    IngestionError,
    InputError,
    LabelError,
    ProtocolError,
)
from .network import load_model
from .training import TrainConfig, predict_dense
from .unet import UNetConfig, UNetModel

__version__ = "0.1.0"
