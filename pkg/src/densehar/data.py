"""Sensor streams: CSV ingestion, windowing, dense sub-sequences, features,
standardization and synthetic data generation."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ConfigError, GeometryError, IngestionError, InputError, LabelError

WISDM_CLASSES = ("Walking", "Jogging", "Upstairs", "Downstairs", "Sitting", "Standing")
WISDM_RATE_HZ = 20.0


@dataclass
class LabeledSeries:
    channels: np.ndarray  # [C, T]
    labels: np.ndarray  # [T]
    sample_rate_hz: float = 1.0
    class_names: list = field(default_factory=list)

    def __post_init__(self):
        self.channels = np.ascontiguousarray(np.atleast_2d(self.channels), dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if self.channels.shape[1] != self.labels.size:
            raise InputError(
                f"{self.channels.shape[1]} samples of channel data but {self.labels.size} labels"
            )
        if self.sample_rate_hz <= 0:
            raise InputError(f"sample rate must be positive, got {self.sample_rate_hz}")
        if not self.class_names:
            top = int(self.labels.max()) + 1 if self.labels.size else 0
            self.class_names = [str(i) for i in range(top)]
        self.class_names = list(self.class_names)
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise LabelError(f"labels must lie in [0, {self.num_classes})")

    @property
    def num_channels(self) -> int:
        return self.channels.shape[0]

    @property
    def num_classes(self) -> int:
        return len(self.class_names)

    def __len__(self):
        return self.labels.size


@dataclass
class Window:
    """Raw fixed-length slice; still carries one label per sample."""

    values: np.ndarray  # [C, W]
    labels: np.ndarray  # [W]
    origin: int


@dataclass
class WindowSegment:
    values: np.ndarray  # [C, W]
    label: int
    origin: int


@dataclass
class SubSequence:
    values: np.ndarray  # [C, N]
    dense_labels: np.ndarray  # [N]
    origin: int


# ---------------------------------------------------------------------------
# CSV
# ---------------------------------------------------------------------------

def _parse_plain_header(line: str, path) -> tuple[float, list]:
    body = line.lstrip("#").split()
    fields = dict(tok.split("=", 1) for tok in body if "=" in tok)
    try:
        rate = float(fields["rate"])
        classes = [c for c in fields["classes"].split(",") if c]
    except (KeyError, ValueError) as exc:
        raise IngestionError(f"{path}:1: malformed header {line.strip()!r}") from exc
    return rate, classes


def load_csv(path, schema: str = "plain") -> LabeledSeries:
    """Read a sensor CSV.

    ``plain``: a ``# rate=<hz> classes=<a,b,...>`` header, then rows of channel
    values followed by an integer label. ``wisdm``: rows of
    ``user,activity,timestamp,x,y,z`` (trailing ``;`` allowed); file order is kept.
    """
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise IngestionError(f"cannot read {path}: {exc}") from exc
    lines = text.splitlines()
    if not any(l.strip() for l in lines):
        raise IngestionError(f"{path}: empty file")
    if schema == "plain":
        return _load_plain(lines, path)
    if schema == "wisdm":
        return _load_wisdm(lines, path)
    raise ConfigError(f"unknown CSV schema {schema!r}")


def _load_plain(lines, path) -> LabeledSeries:
    if not lines[0].startswith("#"):
        raise IngestionError(f"{path}:1: missing '# rate=... classes=...' header")
    rate, classes = _parse_plain_header(lines[0], path)
    rows, labels, width = [], [], None
    for lineno, row in enumerate(csv.reader(lines[1:]), start=2):
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if width is None:
            width = len(row)
            if width < 2:
                raise IngestionError(f"{path}:{lineno}: need at least one channel and a label")
        if len(row) != width:
            raise IngestionError(f"{path}:{lineno}: ragged row ({len(row)} fields, expected {width})")
        try:
            values = [float(v) for v in row[:-1]]
            label = int(row[-1])
        except ValueError as exc:
            raise IngestionError(f"{path}:{lineno}: {exc}") from exc
        if not 0 <= label < len(classes):
            raise IngestionError(f"{path}:{lineno}: label {label} not in [0, {len(classes)})")
        rows.append(values)
        labels.append(label)
    if not rows:
        raise IngestionError(f"{path}: no data rows")
    return LabeledSeries(np.array(rows).T, np.array(labels), rate, classes)


def _load_wisdm(lines, path) -> LabeledSeries:
    index = {name.lower(): i for i, name in enumerate(WISDM_CLASSES)}
    rows, labels = [], []
    for lineno, line in enumerate(lines, start=1):
        line = line.strip().rstrip(";").strip()
        if not line:
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != 6:
            raise IngestionError(f"{path}:{lineno}: ragged row ({len(parts)} fields, expected 6)")
        activity = parts[1]
        if activity.lower() not in index:
            raise IngestionError(f"{path}:{lineno}: unknown activity {activity!r}")
        try:
            rows.append([float(v) for v in parts[3:6]])
        except ValueError as exc:
            raise IngestionError(f"{path}:{lineno}: {exc}") from exc
        labels.append(index[activity.lower()])
    if not rows:
        raise IngestionError(f"{path}: no data rows")
    return LabeledSeries(np.array(rows).T, np.array(labels), WISDM_RATE_HZ, list(WISDM_CLASSES))


def write_csv(series: LabeledSeries, path) -> None:
    """Write the ``plain`` schema with 17 significant digits (exact round-trip)."""
    lines = [f"# rate={series.sample_rate_hz!r} classes={','.join(series.class_names)}"]
    for t in range(len(series)):
        vals = ",".join(f"{v:.17g}" for v in series.channels[:, t])
        lines.append(f"{vals},{series.labels[t]}")
    Path(path).write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# windowing
# ---------------------------------------------------------------------------

def window_stride(window_size: int, overlap_fraction: float) -> int:
    if not 0.0 <= overlap_fraction < 1.0:
        raise GeometryError(f"overlap fraction must be in [0, 1), got {overlap_fraction}")
    if window_size < 1:
        raise GeometryError(f"window size must be positive, got {window_size}")
    return max(1, int(round(window_size * (1.0 - overlap_fraction))))


def window_origins(length: int, window_size: int, overlap_fraction: float) -> list[int]:
    stride = window_stride(window_size, overlap_fraction)
    if window_size > length:
        raise GeometryError(f"window size {window_size} exceeds series length {length}")
    return list(range(0, length - window_size + 1, stride))


def window_segment(series: LabeledSeries, window_size: int, overlap_fraction: float = 0.0) -> list[Window]:
    """Fixed-length windows in origin order; a trailing partial window is dropped."""
    return [
        Window(series.channels[:, o : o + window_size], series.labels[o : o + window_size], o)
        for o in window_origins(len(series), window_size, overlap_fraction)
    ]


def label_window_majority(labels) -> int:
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size == 0:
        raise InputError("cannot label an empty window")
    return int(np.argmax(np.bincount(labels)))


def label_window_last(labels) -> int:
    labels = np.asarray(labels, dtype=np.int64)
    if labels.size == 0:
        raise InputError("cannot label an empty window")
    return int(labels[-1])


LABELERS = {"majority": label_window_majority, "last": label_window_last}


def label_windows(windows: Sequence[Window], labeler: str = "majority") -> list[WindowSegment]:
    try:
        fn = LABELERS[labeler]
    except KeyError:
        raise ConfigError(f"unknown window labeler {labeler!r}") from None
    return [WindowSegment(w.values, fn(w.labels), w.origin) for w in windows]


def extract_subsequences(series: LabeledSeries, length: int, overlap_fraction: float = 0.0) -> list[SubSequence]:
    return [
        SubSequence(w.values, w.labels, w.origin)
        for w in window_segment(series, length, overlap_fraction)
    ]


def split(items: Sequence, test_fraction: float = 0.3, seed: int = 0):
    """Shuffled disjoint split; ``ceil(n * test_fraction)`` items go to test."""
    if not 0.0 < test_fraction < 1.0:
        raise ConfigError(f"test fraction must be in (0, 1), got {test_fraction}")
    n = len(items)
    # round first: 10 * 0.3 is 3.0000000000000004 in binary floating point
    n_test = math.ceil(round(n * test_fraction, 9))
    order = np.random.default_rng(seed).permutation(n)
    test = [items[i] for i in order[:n_test]]
    train = [items[i] for i in order[n_test:]]
    return train, test


# ---------------------------------------------------------------------------
# standardization
# ---------------------------------------------------------------------------

STD_FLOOR = 1e-8


@dataclass
class ChannelStats:
    mean: np.ndarray
    std: np.ndarray


def standardize_fit(arrays) -> ChannelStats:
    """Per-channel population mean/std over a collection of [C, L] arrays
    (or objects with a ``values`` attribute)."""
    mats = [np.asarray(getattr(a, "values", a), dtype=np.float64) for a in arrays]
    if not mats:
        raise InputError("cannot fit standardization on an empty set")
    stacked = np.concatenate(mats, axis=1)
    return ChannelStats(stacked.mean(axis=1), np.maximum(stacked.std(axis=1), STD_FLOOR))


def standardize_apply(stats: ChannelStats, data: np.ndarray) -> np.ndarray:
    """Standardize along the channel axis, which is the second-to-last axis."""
    data = np.asarray(data, dtype=np.float64)
    return (data - stats.mean[:, None]) / stats.std[:, None]


# ---------------------------------------------------------------------------
# hand-crafted features
# ---------------------------------------------------------------------------

FEATURE_NAMES = ("mean", "median", "variance", "std", "max", "min", "rms")


def extract_features(values) -> np.ndarray:
    """7 time-domain features per channel, channel-major (7*C values)."""
    x = np.atleast_2d(np.asarray(values, dtype=np.float64))
    n = x.shape[1]
    if n == 0:
        raise InputError("cannot extract features from an empty window")
    mean = x.mean(axis=1)
    median = np.sort(x, axis=1)[:, (n - 1) // 2]
    var = ((x - mean[:, None]) ** 2).mean(axis=1)
    rms = np.sqrt((x * x).mean(axis=1))
    feats = np.stack([mean, median, var, np.sqrt(var), x.max(axis=1), x.min(axis=1), rms], axis=1)
    return feats.reshape(-1)


# ---------------------------------------------------------------------------
# synthetic data
# ---------------------------------------------------------------------------

@dataclass
class ClassGenerator:
    mean: list
    freq_hz: list
    amplitude: list
    noise_sigma: float = 0.0


@dataclass
class SyntheticSpec:
    classes: list  # of ClassGenerator
    min_segment: int
    max_segment: int
    total_length: int
    sample_rate_hz: float = 20.0
    seed: int = 0
    class_names: list = field(default_factory=list)

    def __post_init__(self):
        self.classes = [c if isinstance(c, ClassGenerator) else ClassGenerator(**c) for c in self.classes]
        if not self.classes:
            raise ConfigError("synthetic spec needs at least one class")
        if self.min_segment < 1 or self.max_segment < self.min_segment:
            raise ConfigError(f"bad segment bounds ({self.min_segment}, {self.max_segment})")
        if self.total_length < 1 or self.sample_rate_hz <= 0:
            raise ConfigError("total_length and sample_rate_hz must be positive")
        widths = {len(c.mean) for c in self.classes} | {len(c.freq_hz) for c in self.classes}
        widths |= {len(c.amplitude) for c in self.classes}
        if len(widths) != 1:
            raise ConfigError("every class needs mean/freq_hz/amplitude of one common channel count")
        if any(c.noise_sigma < 0 for c in self.classes):
            raise ConfigError("noise sigma must be nonnegative")
        if not self.class_names:
            self.class_names = [f"class{i}" for i in range(len(self.classes))]
        if len(self.class_names) != len(self.classes):
            raise ConfigError("class_names length differs from class count")

    @property
    def num_classes(self) -> int:
        return len(self.classes)

    @property
    def num_channels(self) -> int:
        return len(self.classes[0].mean)

    @classmethod
    def from_dict(cls, doc: dict) -> "SyntheticSpec":
        try:
            return cls(**doc)
        except TypeError as exc:
            raise ConfigError(f"invalid synthetic spec: {exc}") from exc

    @classmethod
    def from_json(cls, path) -> "SyntheticSpec":
        try:
            doc = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read synthetic spec {path}: {exc}") from exc
        if not isinstance(doc, dict):
            raise ConfigError("synthetic spec must be a JSON object")
        return cls.from_dict(doc)

    def to_dict(self) -> dict:
        return asdict(self)


def synth_generate(spec: SyntheticSpec) -> LabeledSeries:
    rng = np.random.default_rng(spec.seed)
    n_classes, n_ch, total = spec.num_classes, spec.num_channels, spec.total_length
    labels = np.empty(total, dtype=np.int64)
    channels = np.empty((n_ch, total))
    t, prev = 0, -1
    while t < total:
        seg = int(rng.integers(spec.min_segment, spec.max_segment + 1))
        if n_classes > 1 and prev >= 0:
            cls = int(rng.integers(n_classes - 1))
            cls += cls >= prev
        else:
            cls = int(rng.integers(n_classes))
        end = min(total, t + seg)
        gen = spec.classes[cls]
        steps = np.arange(t, end) / spec.sample_rate_hz
        phase = rng.uniform(0.0, 2.0 * np.pi, size=n_ch)
        mean = np.asarray(gen.mean, dtype=np.float64)[:, None]
        amp = np.asarray(gen.amplitude, dtype=np.float64)[:, None]
        freq = np.asarray(gen.freq_hz, dtype=np.float64)[:, None]
        wave = amp * np.sin(2.0 * np.pi * freq * steps[None, :] + phase[:, None])
        noise = gen.noise_sigma * rng.standard_normal((n_ch, end - t))
        channels[:, t:end] = mean + wave + noise
        labels[t:end] = cls
        t, prev = end, cls
    return LabeledSeries(channels, labels, spec.sample_rate_hz, spec.class_names)


def three_class_spec(
    total_length: int,
    min_segment: int = 30,
    max_segment: int = 120,
    noise_sigma: float = 0.5,
    seed: int = 0,
) -> SyntheticSpec:
    """A 3-axis, 3-class benchmark whose classes overlap sample-by-sample
    once noise is added but differ in mean and rhythm."""
    classes = [
        ClassGenerator([0.0, 0.0, 1.0], [1.0, 1.0, 1.0], [0.5, 0.5, 0.3], noise_sigma),
        ClassGenerator([0.8, 0.0, 0.5], [3.0, 3.0, 2.0], [1.0, 0.8, 0.5], noise_sigma),
        ClassGenerator([0.0, 0.8, 0.0], [0.3, 0.5, 0.3], [0.8, 0.5, 0.5], noise_sigma),
    ]
    return SyntheticSpec(
        classes, min_segment, max_segment, total_length, 20.0, seed, ["still", "brisk", "slow"]
    )
