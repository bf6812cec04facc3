"""The full product surface: config file in, CSV results out.

Writes an experiment config, invokes the command-line entry point
in-process (identical to `python -m qreg noise-sweep ...`), and prints the
aggregated results table. Rerunning this script reproduces every output
byte exactly.
"""

import tempfile
from pathlib import Path

from qreg.cli import main

CONFIG = """
[experiment]
name = demo-sweep
seeds = 0,1
modes = none,weight_decay,quantization
noise_levels = 0.0,0.3

[data]
num_classes = 4
dim = 12
train_size = 480
test_size = 120

[training]
epochs = 8
"""

with tempfile.TemporaryDirectory() as td:
    cfg = Path(td, "sweep.ini")
    cfg.write_text(CONFIG)
    out = Path(td, "results")
    rc = main(["noise-sweep", "--config", str(cfg), "--out", str(out), "--quiet"])
    print(f"exit code {rc}; files: {sorted(p.name for p in out.iterdir())}\n")
    print(Path(out, "sweep_mean.csv").read_text())
