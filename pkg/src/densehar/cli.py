"""Command line: ``densehar {synth,train,predict,eval,bench}``.

``train`` reads a JSON run config. Values resolve as built-in defaults, then
the config file, then command-line flags (``--seed``, ``--out``).
Set ``DENSEHAR_THREADS`` to cap BLAS threads.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .baselines import (
    CnnConfig,
    FcnConfig,
    FcnModel,
    KnnIndex,
    WindowedCnnModel,
    cnn_predict,
    cnn_predict_series,
    cnn_train,
    knn_fit,
    knn_predict_many,
    knn_predict_series,
)
from .data import (
    LabeledSeries,
    SyntheticSpec,
    extract_subsequences,
    label_windows,
    load_csv,
    split,
    synth_generate,
    window_segment,
    write_csv,
)
from .errors import ConfigError, DenseHarError, IngestionError
from .evaluation import evaluate_dense, evaluate_windows
from .network import load_model
from .training import TrainConfig, fit_dense, forward_batched
from .unet import UNetConfig, UNetModel

log = logging.getLogger("densehar")

MODEL_KINDS = ("unet", "fcn", "cnn", "knn")
DENSE_KINDS = ("unet", "fcn")

DEFAULT_RUN = {
    "dataset": {},
    "model": "unet",
    "labeler": None,
    "unet": {},
    "fcn": {},
    "cnn": {},
    "knn": {"k": 5},
    "window": {"size": 64, "overlap": 0.5},
    "train": {},
    "out": {"model": "model.dhm", "log": "train_log.jsonl"},
    "seed": 0,
}


def load_run_config(path, seed=None, out=None) -> dict:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read run config {path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("run config must be a JSON object")
    unknown = set(doc) - set(DEFAULT_RUN)
    if unknown:
        raise ConfigError(f"unknown run config keys: {sorted(unknown)}")
    cfg = json.loads(json.dumps(DEFAULT_RUN))
    for key, value in doc.items():
        if isinstance(cfg[key], dict) and isinstance(value, dict):
            cfg[key].update(value)
        else:
            cfg[key] = value
    if seed is not None:
        cfg["seed"] = seed
    if out is not None:
        cfg["out"]["model"] = out
    if cfg["model"] not in MODEL_KINDS:
        raise ConfigError(f"model kind must be one of {MODEL_KINDS}, got {cfg['model']!r}")
    if cfg["labeler"] is None:
        cfg["labeler"] = "dense" if cfg["model"] in DENSE_KINDS else "majority"
    dense_labeler = cfg["labeler"] == "dense"
    if dense_labeler != (cfg["model"] in DENSE_KINDS):
        raise ConfigError(f"labeler {cfg['labeler']!r} is incompatible with model {cfg['model']!r}")
    if not dense_labeler and cfg["labeler"] not in ("majority", "last"):
        raise ConfigError(f"unknown labeler {cfg['labeler']!r}")
    return cfg


def _base_dir(config_path) -> Path:
    return Path(config_path).resolve().parent


def _load_dataset(ds: dict, base: Path) -> LabeledSeries:
    if "csv" in ds:
        return load_csv(base / ds["csv"], ds.get("schema", "plain"))
    if "synthetic" in ds:
        return synth_generate(SyntheticSpec.from_json(base / ds["synthetic"]))
    raise ConfigError("dataset needs a 'csv' or 'synthetic' entry")


def _load_series(path, schema: str) -> LabeledSeries:
    if not Path(path).exists():
        raise IngestionError(f"series file {path} does not exist")
    return load_csv(path, schema)


class _JsonLines:
    def __init__(self, path):
        self.fh = open(path, "a")

    def write(self, record: dict):
        self.fh.write(json.dumps(record) + "\n")
        self.fh.flush()

    def close(self):
        self.fh.close()


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_synth(spec_path, out_path, seed=None) -> int:
    spec = SyntheticSpec.from_json(spec_path)
    if seed is not None:
        spec.seed = seed
    write_csv(synth_generate(spec), out_path)
    return 0


def cmd_train(config_path, seed=None, out=None) -> int:
    cfg = load_run_config(config_path, seed, out)
    base = _base_dir(config_path)
    series = _load_dataset(cfg["dataset"], base)
    seed = int(cfg["seed"])
    train_cfg = TrainConfig(**{"seed": seed, **cfg["train"]})
    kind = cfg["model"]

    model_path = Path(cfg["out"]["model"])
    log_path = Path(cfg["out"]["log"])
    if not model_path.is_absolute():
        model_path = base / model_path
    if not log_path.is_absolute():
        log_path = base / log_path

    header = {"event": "start", "model": kind, "labeler": cfg["labeler"], **asdict(train_cfg)}
    if kind == "unet":
        mcfg = UNetConfig(**{"in_channels": series.num_channels, "num_classes": series.num_classes, "seed": seed, **cfg["unet"]})
        header["subseq_length"] = mcfg.subseq_length
    elif kind == "fcn":
        mcfg = FcnConfig(**{"in_channels": series.num_channels, "num_classes": series.num_classes, "seed": seed, **cfg["fcn"]})
        header["subseq_length"] = mcfg.subseq_length
    else:
        header["window_size"] = int(cfg["window"]["size"])
        header["overlap"] = float(cfg["window"]["overlap"])

    jl = _JsonLines(log_path)
    jl.write(header)
    started = time.perf_counter()

    def on_epoch(rec):
        jl.write({"event": "epoch", "epoch": rec.epoch, "mean_loss": rec.mean_loss, "wall_time": rec.wall_time})
        log.info("epoch %d loss %.5f", rec.epoch, rec.mean_loss)

    try:
        if kind in DENSE_KINDS:
            subs = extract_subsequences(series, mcfg.subseq_length, 0.0)
            train, _ = split(subs, train_cfg.test_fraction, seed)
            model = UNetModel(mcfg) if kind == "unet" else FcnModel(mcfg)
            tlog = fit_dense(model, train, train_cfg, on_epoch)
            final = tlog.losses[-1]
        else:
            windows = window_segment(series, int(cfg["window"]["size"]), float(cfg["window"]["overlap"]))
            segments = label_windows(windows, cfg["labeler"])
            train, _ = split(segments, train_cfg.test_fraction, seed)
            if kind == "cnn":
                ccfg = CnnConfig(**{
                    "in_channels": series.num_channels,
                    "num_classes": series.num_classes,
                    "window_size": int(cfg["window"]["size"]),
                    "seed": seed,
                    **cfg["cnn"],
                })
                model = cnn_train(train, cfg["labeler"], train_cfg, ccfg, on_epoch)
                final = model.training_log.losses[-1]
            else:
                model = knn_fit(train, cfg["labeler"], int(cfg["knn"].get("k", 5)), series.num_classes)
                final = None
        model.save(model_path)
        jl.write({"event": "done", "final_loss": final, "model_path": str(model_path),
                  "wall_time": time.perf_counter() - started})
    finally:
        jl.close()
    return 0


def _windows_sidecar(out_path) -> Path:
    return Path(str(out_path) + ".windows.json")


def _write_labels(path, labels) -> None:
    Path(path).write_text("".join(f"{int(v)}\n" for v in labels))


def cmd_predict(model_path, series_path, out_path, schema="plain", overlap=0.5) -> int:
    model = load_model(model_path)
    series = _load_series(series_path, schema)
    if model.kind in DENSE_KINDS:
        from .training import predict_dense

        _write_labels(out_path, predict_dense(model, series))
        return 0
    if model.kind == "cnn":
        labels, origins = cnn_predict_series(model, series, overlap)
        window = model.window_size
    else:
        labels, origins = knn_predict_series(model, series, overlap)
        window = model.window_size
    _write_labels(out_path, labels)
    _windows_sidecar(out_path).write_text(json.dumps({
        "model_kind": model.kind,
        "window_size": int(window),
        "overlap": overlap,
        "length": len(series),
        "origins": [int(o) for o in origins],
    }) + "\n")
    return 0


def _read_labels(path) -> tuple[np.ndarray, list | None]:
    """Labels from a one-integer-per-line file or from a plain-schema CSV."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise IngestionError(f"cannot read {path}: {exc}") from exc
    if text.startswith("#"):
        series = load_csv(path, "plain")
        return series.labels, series.class_names
    try:
        return np.array([int(l) for l in text.split()], dtype=np.int64), None
    except ValueError as exc:
        raise IngestionError(f"{path}: {exc}") from exc


def cmd_eval(truth_path, pred_path, protocol="dense", out_path=None, windows_path=None, n_classes=None, seed=None) -> int:
    truth, names = _read_labels(truth_path)
    pred, _ = _read_labels(pred_path)
    if n_classes is None:
        n_classes = len(names) if names else int(max(truth.max(initial=0), pred.max(initial=0))) + 1
    if protocol == "dense":
        report = evaluate_dense(truth, pred, n_classes, seed=seed, class_names=names)
    elif protocol == "window-unified":
        side_path = Path(windows_path) if windows_path else _windows_sidecar(pred_path)
        try:
            side = json.loads(side_path.read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise IngestionError(f"cannot read window sidecar {side_path}: {exc}") from exc
        report = evaluate_windows(truth, pred, side["origins"], side["window_size"], side["overlap"], n_classes,
                                  seed=seed, model_kind=side.get("model_kind"), class_names=names)
    else:
        raise ConfigError(f"unknown protocol {protocol!r}")
    text = json.dumps(report.to_dict(), indent=2) + "\n"
    if out_path:
        Path(out_path).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


def bench(model, series: LabeledSeries, seed=0, test_fraction=0.3, overlap=0.5) -> dict:
    """Time prediction over the held-out share of a series' sub-sequences/windows."""
    if model.kind in DENSE_KINDS:
        items = extract_subsequences(series, model.config.subseq_length, 0.0)
    else:
        items = window_segment(series, model.window_size, overlap)
    _, test = split(items, test_fraction, seed)
    values = np.stack([t.values for t in test])
    start = time.perf_counter()
    if model.kind in DENSE_KINDS:
        forward_batched(model, model.normalize(values)).argmax(axis=1)
    elif model.kind == "cnn":
        cnn_predict(model, values)
    else:
        knn_predict_many(model, values)
    seconds = time.perf_counter() - start
    samples = int(values.shape[0] * values.shape[2])
    return {
        "model_kind": model.kind,
        "items": len(test),
        "samples": samples,
        "seconds": seconds,
        "samples_per_second": samples / seconds if seconds > 0 else None,
    }


def cmd_bench(model_path, series_path, schema="plain", seed=0, out_path=None) -> int:
    result = bench(load_model(model_path), _load_series(series_path, schema), seed)
    text = json.dumps(result, indent=2) + "\n"
    if out_path:
        Path(out_path).write_text(text)
    else:
        sys.stdout.write(text)
    return 0


# ---------------------------------------------------------------------------
# entry point
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="densehar", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="write a synthetic plain-CSV dataset")
    p.add_argument("spec", help="synthetic spec JSON")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int)

    p = sub.add_parser("train", help="train the model described by a run config")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int)
    p.add_argument("--out", help="model file (overrides out.model)")

    p = sub.add_parser("predict", help="label a series with a trained model")
    p.add_argument("model")
    p.add_argument("series")
    p.add_argument("--out", required=True)
    p.add_argument("--schema", default="plain", choices=["plain", "wisdm"])
    p.add_argument("--overlap", type=float, default=0.5, help="window overlap for cnn/knn models")

    p = sub.add_parser("eval", help="score predictions against ground truth")
    p.add_argument("truth", help="label-per-line file or plain CSV series")
    p.add_argument("prediction")
    p.add_argument("--protocol", default="dense", choices=["dense", "window-unified"])
    p.add_argument("--windows", help="window sidecar (default: <prediction>.windows.json)")
    p.add_argument("--classes", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--out")

    p = sub.add_parser("bench", help="time prediction over the held-out split")
    p.add_argument("model")
    p.add_argument("series")
    p.add_argument("--schema", default="plain", choices=["plain", "wisdm"])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    return parser


def _dispatch(args) -> int:
    if args.command == "synth":
        return cmd_synth(args.spec, args.out, args.seed)
    if args.command == "train":
        return cmd_train(args.config, args.seed, args.out)
    if args.command == "predict":
        return cmd_predict(args.model, args.series, args.out, args.schema, args.overlap)
    if args.command == "eval":
        return cmd_eval(args.truth, args.prediction, args.protocol, args.out, args.windows, args.classes, args.seed)
    return cmd_bench(args.model, args.series, args.schema, args.seed, args.out)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    threads = os.environ.get("DENSEHAR_THREADS")
    try:
        if threads:
            from threadpoolctl import threadpool_limits

            with threadpool_limits(limits=int(threads)):
                return _dispatch(args)
        return _dispatch(args)
    except DenseHarError as exc:
        print(f"densehar {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except FileNotFoundError as exc:
        print(f"densehar {args.command}: {exc}", file=sys.stderr)
        return IngestionError.exit_code


if __name__ == "__main__":
    sys.exit(main())
