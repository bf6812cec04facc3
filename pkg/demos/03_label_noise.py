"""Label noise in action: inject it, measure it, and watch it hurt.

Generates Gaussian blob clusters, re-annotates 40% of the training labels
uniformly at random (so about s*(1-1/C) actually change), and trains the
same architecture on the clean and on the corrupted copy. The test set is
never touched.
"""

import numpy as np

from qreg.data import NoiseSpec, inject_noise, split, synth_blobs
from qreg.layers import build_mlp_small
from qreg.training import TrainSettings, evaluate, train

full = synth_blobs(num_classes=5, per_class=300, dim=16, separation=4.5,
                   seed=np.random.SeedSequence(7))
pool, test_ds = split(full, 0.2, np.random.SeedSequence(8))
train_ds, val_ds = split(pool, 0.1, np.random.SeedSequence(9))

noisy_ds, idx = inject_noise(train_ds, NoiseSpec(fraction=0.4, seed=3))
changed = np.mean(noisy_ds.labels != train_ds.labels)
print(f"selected {len(idx)} of {train_ds.n} examples for re-annotation")
print(f"labels actually changed: {changed:.3f} (expected about 0.4*(1-1/5) = 0.32)")

settings = TrainSettings(mode="none", epochs=15, seed=0)
for tag, ds in (("clean", train_ds), ("noisy", noisy_ds)):
    model = build_mlp_small(16, 5, np.random.default_rng(0))
    result = train(model, ds, val_ds, test_ds, settings)
    _, acc, _, _ = evaluate(result.model, test_ds)
    print(f"{tag} training: final test accuracy {acc:.3f}")
