"""Sample-level evaluation: window-to-sample label expansion, confusion
matrix, accuracy, per-class precision/recall/F1 and weighted F1."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InputError, ProtocolError


@dataclass
class ConfusionMatrix:
    counts: np.ndarray  # rows: true class, columns: predicted class

    @property
    def n_classes(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())


def confusion(true_labels, predicted_labels, n_classes: int) -> ConfusionMatrix:
    y = np.asarray(true_labels, dtype=np.int64).reshape(-1)
    p = np.asarray(predicted_labels, dtype=np.int64).reshape(-1)
    if y.shape != p.shape:
        raise InputError(f"{y.size} true labels but {p.size} predictions")
    for name, arr in (("true", y), ("predicted", p)):
        if arr.size and (arr.min() < 0 or arr.max() >= n_classes):
            raise InputError(f"{name} labels outside [0, {n_classes})")
    counts = np.bincount(y * n_classes + p, minlength=n_classes * n_classes)
    return ConfusionMatrix(counts.reshape(n_classes, n_classes))


def _counts(cm) -> np.ndarray:
    return np.asarray(cm.counts if isinstance(cm, ConfusionMatrix) else cm, dtype=np.float64)


def accuracy(cm) -> float:
    c = _counts(cm)
    total = c.sum()
    return float(np.trace(c) / total) if total else 0.0


def per_class_prf(cm):
    """One-vs-rest precision, recall and F1 per class; 0 where undefined."""
    c = _counts(cm)
    tp = np.diag(c)
    predicted = c.sum(axis=0)
    actual = c.sum(axis=1)
    precision = np.divide(tp, predicted, out=np.zeros_like(tp), where=predicted > 0)
    recall = np.divide(tp, actual, out=np.zeros_like(tp), where=actual > 0)
    denom = precision + recall
    f1 = np.divide(2.0 * precision * recall, denom, out=np.zeros_like(tp), where=denom > 0)
    return precision, recall, f1


def class_weights(cm) -> np.ndarray:
    c = _counts(cm)
    total = c.sum()
    return c.sum(axis=1) / total if total else np.zeros(c.shape[0])


def weighted_f1(cm) -> float:
    _, _, f1 = per_class_prf(cm)
    return float(np.dot(class_weights(cm), f1))


@dataclass
class EvalReport:
    confusion: ConfusionMatrix
    accuracy: float
    precision: np.ndarray
    recall: np.ndarray
    f1: np.ndarray
    weights: np.ndarray
    weighted_f1: float
    undefined_classes: list = field(default_factory=list)
    uncovered: int = 0
    seed: int | None = None
    model_kind: str | None = None
    class_names: list | None = None

    def to_dict(self) -> dict:
        names = self.class_names or [str(i) for i in range(self.confusion.n_classes)]
        return {
            "model_kind": self.model_kind,
            "seed": self.seed,
            "accuracy": self.accuracy,
            "weighted_f1": self.weighted_f1,
            "uncovered_samples": self.uncovered,
            "evaluated_samples": self.confusion.total,
            "confusion": self.confusion.counts.tolist(),
            "per_class": [
                {
                    "class": i,
                    "name": names[i],
                    "precision": float(self.precision[i]),
                    "recall": float(self.recall[i]),
                    "f1": float(self.f1[i]),
                    "weight": float(self.weights[i]),
                    "undefined": i in self.undefined_classes,
                }
                for i in range(self.confusion.n_classes)
            ],
        }

    def write_json(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")


def report_from_confusion(cm: ConfusionMatrix, **meta) -> EvalReport:
    p, r, f1 = per_class_prf(cm)
    c = cm.counts
    # precision or recall has a zero denominator
    undefined = [i for i in range(cm.n_classes) if c[:, i].sum() == 0 or c[i, :].sum() == 0]
    return EvalReport(cm, accuracy(cm), p, r, f1, class_weights(cm), weighted_f1(cm), undefined, **meta)


def evaluate_dense(true_labels, predicted_labels, n_classes: int, **meta) -> EvalReport:
    y = np.asarray(true_labels).reshape(-1)
    p = np.asarray(predicted_labels).reshape(-1)
    if y.size != p.size:
        raise InputError(f"{y.size} true labels but {p.size} predictions")
    return report_from_confusion(confusion(y, p, n_classes), **meta)


def expand_window_predictions(window_labels, origins, window_size: int, overlap_fraction: float, length: int | None = None):
    """Turn per-window labels into per-sample labels.

    With 50% overlap only even-numbered windows are kept and broadcast over
    their samples; when the last window is odd, the samples it alone reaches
    take its label. With no overlap every window is kept. Returns
    ``(labels, uncovered)`` where ``labels`` covers samples ``[0, len(labels))``
    and ``uncovered`` counts samples of a length-``length`` series after that.
    """
    labels = np.asarray(window_labels, dtype=np.int64).reshape(-1)
    origins = np.asarray(origins, dtype=np.int64).reshape(-1)
    if labels.size != origins.size:
        raise InputError(f"{labels.size} window labels but {origins.size} origins")
    if labels.size == 0:
        raise InputError("no windows to expand")
    if np.any(np.diff(origins) <= 0):
        raise InputError("window origins must be strictly increasing")
    if np.isclose(overlap_fraction, 0.5):
        keep = 2
    elif overlap_fraction == 0.0:
        keep = 1
    elif overlap_fraction > 0.5:
        raise ProtocolError(f"overlap {overlap_fraction} > 50% makes retained windows overlap")
    else:
        raise ProtocolError(f"only 0% or 50% window overlap is supported, got {overlap_fraction}")

    end = int(origins[-1]) + window_size
    if length is None:
        length = end
    if end > length:
        raise InputError(f"windows reach sample {end} beyond series length {length}")
    out = np.full(end, -1, dtype=np.int64)
    for i in range(0, labels.size, keep):
        o = origins[i]
        out[o : o + window_size] = labels[i]
    last = labels.size - 1
    if last % keep:
        o = origins[last]
        tail = out[o:end]
        tail[tail < 0] = labels[last]
    if np.any(out < 0):
        raise ProtocolError("retained windows leave gaps; origins do not match the overlap")
    return out, length - end


def evaluate_windows(true_labels, window_labels, origins, window_size: int, overlap_fraction: float, n_classes: int, **meta) -> EvalReport:
    """Unified per-sample evaluation of a sliding-window classifier."""
    y = np.asarray(true_labels).reshape(-1)
    dense, uncovered = expand_window_predictions(window_labels, origins, window_size, overlap_fraction, y.size)
    report = evaluate_dense(y[: dense.size], dense, n_classes, **meta)
    report.uncovered = uncovered
    return report
