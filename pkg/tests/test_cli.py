import json
import subprocess
import sys

import pytest

from densehar.cli import main
from densehar.data import load_csv, three_class_spec
from densehar.errors import ConfigError, FormatError, IngestionError


@pytest.fixture
def workdir(tmp_path):
    spec = three_class_spec(64 * 12, min_segment=20, max_segment=60, seed=2)
    (tmp_path / "spec.json").write_text(json.dumps(spec.to_dict()))
    assert main(["synth", str(tmp_path / "spec.json"), "--out", str(tmp_path / "series.csv")]) == 0
    return tmp_path


def small_run(workdir, model, **extra):
    cfg = {
        "dataset": {"csv": "series.csv", "schema": "plain"},
        "model": model,
        "unet": {"base_features": 4, "levels": 3, "subseq_length": 64},
        "fcn": {"widths": [4] * 6, "subseq_length": 64},
        "cnn": {"widths": [4, 8], "hidden": 16},
        "window": {"size": 32, "overlap": 0.5},
        "train": {"epochs": 2, "batch_size": 4},
        "out": {"model": f"{model}.dhm", "log": f"{model}.jsonl"},
        "seed": 1,
    }
    cfg.update(extra)
    path = workdir / f"{model}.json"
    path.write_text(json.dumps(cfg))
    return path


def read_log(path):
    return [json.loads(l) for l in path.read_text().splitlines()]


class TestSynth:
    def test_deterministic_bytes(self, workdir):
        main(["synth", str(workdir / "spec.json"), "--out", str(workdir / "again.csv")])
        assert (workdir / "again.csv").read_bytes() == (workdir / "series.csv").read_bytes()

    def test_row_count(self, workdir):
        lines = (workdir / "series.csv").read_text().splitlines()
        assert len(lines) == 1 + 64 * 12
        assert len(load_csv(workdir / "series.csv")) == 64 * 12

    def test_invalid_spec(self, workdir, capsys):
        (workdir / "bad.json").write_text('{"classes": [], "min_segment": 1}')
        code = main(["synth", str(workdir / "bad.json"), "--out", str(workdir / "x.csv")])
        assert code == ConfigError.exit_code != 0
        assert "ConfigError" in capsys.readouterr().err


class TestTrain:
    @pytest.mark.parametrize("model", ["unet", "fcn", "cnn", "knn"])
    def test_each_kind(self, workdir, model):
        assert main(["train", "--config", str(small_run(workdir, model))]) == 0
        assert (workdir / f"{model}.dhm").exists()
        log = read_log(workdir / f"{model}.jsonl")
        assert log[0]["event"] == "start" and log[-1]["event"] == "done"
        if model != "knn":
            assert [r["epoch"] for r in log if r["event"] == "epoch"] == [1, 2]

    def test_seed_repeat(self, workdir):
        cfg = small_run(workdir, "unet")
        main(["train", "--config", str(cfg), "--out", str(workdir / "a.dhm")])
        main(["train", "--config", str(cfg), "--out", str(workdir / "b.dhm")])
        done = [r for r in read_log(workdir / "unet.jsonl") if r["event"] == "done"]
        assert done[0]["final_loss"] == done[1]["final_loss"]
        assert (workdir / "a.dhm").read_bytes() == (workdir / "b.dhm").read_bytes()

    def test_seed_flag_overrides(self, workdir):
        cfg = small_run(workdir, "unet")
        main(["train", "--config", str(cfg), "--seed", "9"])
        assert read_log(workdir / "unet.jsonl")[0]["seed"] == 9

    def test_default_hyperparameters_in_header(self, workdir):
        spec = three_class_spec(224 * 2, seed=3)
        (workdir / "s2.json").write_text(json.dumps(spec.to_dict()))
        cfg = workdir / "defaults.json"
        cfg.write_text(json.dumps({"dataset": {"synthetic": "s2.json"}}))
        assert main(["train", "--config", str(cfg)]) == 0
        header = read_log(workdir / "train_log.jsonl")[0]
        assert header["learning_rate"] == 0.001
        assert header["batch_size"] == 32
        assert header["epochs"] == 100
        assert header["subseq_length"] == 224
        assert header["test_fraction"] == 0.3

    def test_missing_dataset(self, workdir):
        cfg = workdir / "missing.json"
        cfg.write_text(json.dumps({"dataset": {"csv": "nope.csv"}}))
        assert main(["train", "--config", str(cfg)]) == IngestionError.exit_code

    def test_incompatible_labeler(self, workdir):
        cfg = small_run(workdir, "cnn", labeler="dense")
        assert main(["train", "--config", str(cfg)]) == ConfigError.exit_code


class TestPredictEval:
    @pytest.mark.parametrize("model", ["unet", "fcn"])
    def test_dense_output_length(self, workdir, model):
        main(["train", "--config", str(small_run(workdir, model))])
        out = workdir / f"{model}.pred"
        assert main(["predict", str(workdir / f"{model}.dhm"), str(workdir / "series.csv"), "--out", str(out)]) == 0
        assert len(out.read_text().splitlines()) == 64 * 12

    @pytest.mark.parametrize("model", ["cnn", "knn"])
    def test_window_output(self, workdir, model):
        main(["train", "--config", str(small_run(workdir, model))])
        out = workdir / f"{model}.pred"
        main(["predict", str(workdir / f"{model}.dhm"), str(workdir / "series.csv"), "--out", str(out)])
        side = json.loads((workdir / f"{model}.pred.windows.json").read_text())
        n = len(out.read_text().splitlines())
        assert n == len(side["origins"]) == (64 * 12 - 32) // 16 + 1
        report = workdir / "r.json"
        assert main(["eval", str(workdir / "series.csv"), str(out), "--protocol", "window-unified", "--out", str(report)]) == 0
        doc = json.loads(report.read_text())
        assert doc["evaluated_samples"] + doc["uncovered_samples"] == 64 * 12
        assert doc["model_kind"] == model

    def test_identical_files(self, workdir):
        labels = workdir / "l.txt"
        labels.write_text("0\n1\n2\n2\n")
        out = workdir / "r.json"
        main(["eval", str(labels), str(labels), "--out", str(out)])
        assert json.loads(out.read_text())["accuracy"] == 1.0

    def test_hand_fixture(self, workdir):
        (workdir / "t.txt").write_text("0\n0\n0\n0\n1\n1\n1\n1\n1\n1\n")
        (workdir / "p.txt").write_text("0\n0\n0\n1\n0\n1\n1\n1\n1\n1\n")
        out = workdir / "r.json"
        main(["eval", str(workdir / "t.txt"), str(workdir / "p.txt"), "--out", str(out), "--seed", "4"])
        doc = json.loads(out.read_text())
        assert doc["confusion"] == [[3, 1], [1, 5]]
        assert doc["accuracy"] == pytest.approx(0.8, abs=1e-12)
        assert doc["weighted_f1"] == pytest.approx(0.8, abs=1e-12)
        assert doc["seed"] == 4

    def test_window_unified_even_rule(self, workdir):
        (workdir / "t.txt").write_text("".join(f"{v}\n" for v in [1] * 4 + [3] * 4 + [4] * 2))
        (workdir / "w.txt").write_text("1\n2\n3\n4\n")
        (workdir / "w.txt.windows.json").write_text(json.dumps({"window_size": 4, "overlap": 0.5, "origins": [0, 2, 4, 6]}))
        out = workdir / "r.json"
        main(["eval", str(workdir / "t.txt"), str(workdir / "w.txt"), "--protocol", "window-unified", "--out", str(out)])
        assert json.loads(out.read_text())["accuracy"] == 1.0

    def test_corrupt_model(self, workdir):
        (workdir / "bad.dhm").write_bytes(b"\x00" * 64)
        code = main(["predict", str(workdir / "bad.dhm"), str(workdir / "series.csv"), "--out", str(workdir / "o")])
        assert code == FormatError.exit_code


class TestBench:
    def test_report(self, workdir):
        main(["train", "--config", str(small_run(workdir, "unet"))])
        out1, out2 = workdir / "b1.json", workdir / "b2.json"
        for out in (out1, out2):
            assert main(["bench", str(workdir / "unet.dhm"), str(workdir / "series.csv"), "--out", str(out)]) == 0
        a, b = json.loads(out1.read_text()), json.loads(out2.read_text())
        assert a["samples"] == 64 * 4  # ceil(12 * 0.3) held-out tiles
        assert a["seconds"] >= 0
        for doc in (a, b):
            doc.pop("seconds")
            doc.pop("samples_per_second")
        assert a == b


def test_module_entry_point(workdir):
    proc = subprocess.run(
        [sys.executable, "-m", "densehar.cli", "eval", str(workdir / "series.csv"), str(workdir / "series.csv")],
        capture_output=True, text=True, env={"DENSEHAR_THREADS": "1", "PATH": ""},
    )
    assert proc.returncode == 0, proc.stderr
    assert json.loads(proc.stdout)["accuracy"] == 1.0
