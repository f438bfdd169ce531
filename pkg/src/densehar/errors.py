"""Exception hierarchy shared by every module.

Each class carries the process exit code the command line maps it to.
"""


class DenseHarError(Exception):
    exit_code = 1


class ConfigError(DenseHarError, ValueError):
    exit_code = 3


class IngestionError(DenseHarError, ValueError):
    exit_code = 4


class GeometryError(DenseHarError, ValueError):
    exit_code = 5


class DimensionError(GeometryError):
    """Operand shapes disagree (e.g. input channels vs kernel channels)."""


class LabelError(DenseHarError, ValueError):
    exit_code = 6


class FormatError(DenseHarError, ValueError):
    exit_code = 7


class InputError(DenseHarError, ValueError):
    exit_code = 8


class ProtocolError(DenseHarError, ValueError):
    exit_code = 9
