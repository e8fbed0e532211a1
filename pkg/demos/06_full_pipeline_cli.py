"""The CLI surface, driven in-process: synth -> train -> compare -> report.

Equivalent shell commands:

    emgvit synth --gestures 4 --reps 5 --duration 0.0625 --seed 7 -o demo.emgds
    emgvit train --data demo.emgds --model III --epochs 2 --cutoff-hz 150 -o run/
    emgvit compare --data demo.emgds --model III --epochs 2 --cutoff-hz 150 -o run/
    emgvit report --run run/

Epochs are trimmed so the demo finishes in well under a minute; accuracies
are not meaningful at two epochs.
"""
import json
import tempfile
from pathlib import Path

from emgvit.cli import main

workdir = Path(tempfile.mkdtemp(prefix="emgvit-demo-"))
dataset = workdir / "demo.emgds"
run_dir = workdir / "run"

main(["synth", "--gestures", "4", "--reps", "5", "--duration", "0.0625",
      "--seed", "7", "-o", str(dataset)])

main(["train", "--data", str(dataset), "--model", "III", "--epochs", "2",
      "--batch-size", "32", "--cutoff-hz", "150", "--seed", "7", "-o", str(run_dir)])

report = json.loads((run_dir / "report.json").read_text())
print("report keys:", sorted(report))
print("parameter audit: count", report["param_count"],
      "reference", report["param_count_reference"],
      "delta", report["param_count_delta"])

main(["compare", "--data", str(dataset), "--model", "III", "--epochs", "2",
      "--batch-size", "32", "--cutoff-hz", "150", "--seed", "7", "-o", str(run_dir)])

main(["report", "--run", str(run_dir)])
print(f"artifacts under {run_dir}: "
      f"{sorted(p.name for p in run_dir.iterdir())}")
