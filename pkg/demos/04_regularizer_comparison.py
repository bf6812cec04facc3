"""Head-to-head regularizer comparison on one corrupted dataset.

Runs four training modes on blobs with 30% label noise, two seeds each,
through the same experiment plumbing the CLI uses, and prints mean final
test accuracy per mode. Every number here is reproducible byte-for-byte:
jobs are pure functions of (config, mode, noise, seed).
"""

import numpy as np

from qreg.config import parse_config
from qreg.experiments import Job, run_job

CONFIG = """
[data]
num_classes = 5
dim = 16
train_size = 600
test_size = 150

[training]
epochs = 12
"""

cfg = parse_config(CONFIG)
seeds = (0, 1)
print(f"mode              mean acc (s=0.3, {len(seeds)} seeds)")
for mode in ("none", "label_smoothing", "dropout", "quantization"):
    accs = []
    for seed in seeds:
        result = run_job(Job(cfg=cfg, mode=mode, noise=0.3, seed=seed))
        accs.append(result.record.final_test_acc)
    print(f"{mode:<17} {np.mean(accs):.4f}")
