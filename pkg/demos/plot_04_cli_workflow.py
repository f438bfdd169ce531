"""
Command-line workflow
=====================

The same pipeline through the ``densehar`` command: synthesize a stream,
train from a JSON config, predict, evaluate and time inference. Each step is
an ordinary ``main([...])`` call here so the script runs anywhere the package
is installed; the shell equivalent is shown alongside.
"""

import json
import tempfile
from pathlib import Path

from densehar.cli import main
from densehar.data import three_class_spec

work = Path(tempfile.mkdtemp())
(work / "spec.json").write_text(json.dumps(three_class_spec(224 * 20, seed=0).to_dict()))

# densehar synth spec.json --out series.csv
main(["synth", str(work / "spec.json"), "--out", str(work / "series.csv")])

# Paths inside a config resolve relative to the config file.
(work / "run.json").write_text(json.dumps({
    "dataset": {"csv": "series.csv"},
    "model": "unet",
    "unet": {"base_features": 8, "levels": 4},
    "train": {"epochs": 30},
    "seed": 0,
}))

# densehar train --config run.json
main(["train", "--config", str(work / "run.json")])
for line in (work / "train_log.jsonl").read_text().splitlines():
    print(line)

# densehar predict model.dhm series.csv --out pred.txt
main(["predict", str(work / "model.dhm"), str(work / "series.csv"), "--out", str(work / "pred.txt")])

# densehar eval series.csv pred.txt --out report.json
# (scored on the training stream itself; see plot_02 for a held-out score)
main(["eval", str(work / "series.csv"), str(work / "pred.txt"), "--out", str(work / "report.json")])
report = json.loads((work / "report.json").read_text())
print("accuracy", round(report["accuracy"], 3), "weighted F1", round(report["weighted_f1"], 3))

# densehar bench model.dhm series.csv
main(["bench", str(work / "model.dhm"), str(work / "series.csv")])
