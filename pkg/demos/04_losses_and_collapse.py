"""Reproduce the majority-label collapse and its inverse-weighting fix.

Trains the same small CNN twice on a 90%-straight synthetic set: plain cross
entropy collapses to predicting straight everywhere; weighting each class
inversely to its frequency spreads the predictions and lifts accuracy on a
balanced held-out set.

Run:  python demos/04_losses_and_collapse.py   (about a minute)
"""

import numpy as np

from hallpilot.evalloop import offline_metrics
from hallpilot.models import TrainConfig, build_simple_cnn, train
from hallpilot.nn import LossSpec, inverse_freq_weights
from hallpilot.recorder import Dataset, Sample, label_histogram

N_BINS = 5
ANGLES = [-0.8, -0.4, 0.0, 0.4, 0.8]


def bar_sample(i, angle, rng, h=12, w=16):
    img = rng.integers(0, 120, size=(h, w, 3), dtype=np.uint8)
    col = int((angle + 1) / 2 * (w - 3)) + 1
    img[:, col - 1:col + 2] += 100
    return Sample(id=i, rgb=np.clip(img, 0, 255).astype(np.uint8), angle=angle)


rng = np.random.default_rng(0)
train_samples = [bar_sample(i, 0.0, rng) for i in range(180)]
i = len(train_samples)
for a in ANGLES:
    if a == 0.0:
        continue
    for _ in range(5):
        train_samples.append(bar_sample(i, a, rng))
        i += 1
train_ds = Dataset(samples=train_samples)
held = Dataset(samples=[bar_sample(j, a, rng)
                        for j, a in enumerate(a for a in ANGLES
                                              for _ in range(10))])

hist = label_histogram(train_ds, N_BINS)
print("training histogram (90% straight):", hist.tolist())

spec = build_simple_cnn((3, 12, 16), "classification", N_BINS)
base = dict(epochs=3, batch_size=32, lr=1e-3, seed=0, val_fraction=0.0)

plain, _ = train(train_ds, spec,
                 TrainConfig(**base, loss=LossSpec(kind="ce", n_bins=N_BINS)))
rep = offline_metrics(plain, spec, held)
print(f"plain CE:    straight-fraction {rep.straight_fraction:.2f}, "
      f"entropy {rep.pred_entropy:.3f}, accuracy {rep.accuracy:.2f}")

weights = inverse_freq_weights(hist)
print("inverse-frequency weights:", np.round(weights, 3).tolist())
weighted, _ = train(train_ds, spec, TrainConfig(
    **base, loss=LossSpec(kind="weighted_ce", n_bins=N_BINS,
                          class_weights=weights.tolist())))
rep_w = offline_metrics(weighted, spec, held)
print(f"weighted CE: straight-fraction {rep_w.straight_fraction:.2f}, "
      f"entropy {rep_w.pred_entropy:.3f}, accuracy {rep_w.accuracy:.2f}")
