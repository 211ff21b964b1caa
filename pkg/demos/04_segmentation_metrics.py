"""Segmentation losses and evaluation metrics on toy masks."""

import numpy as np

from gliopipe import seg_math

# --- composite training loss on random logits ---
rng = np.random.default_rng(1)
logits = rng.normal(size=(4, 8, 8, 8))
classes = rng.integers(0, 4, (8, 8, 8))
onehot = np.stack([(classes == c).astype(float) for c in range(4)])

sched = seg_math.RampSchedule(lambda_max=0.3, total_epochs=100)
for epoch in (0, 25, 50, 100):
    total = seg_math.seg_loss(logits, onehot, epoch, sched)
    print(f"epoch {epoch:3d}: lambda={seg_math.ramp(epoch, sched):.4f}  loss={total:.4f}")

# --- ensemble loss with disagreement penalties ---
agree = seg_math.ensemble_loss([0.8, 0.8, 0.8], y=1, lambda_var=0.5, lambda_jsd=0.5)
disagree = seg_math.ensemble_loss([0.99, 0.5, 0.2], y=1, lambda_var=0.5, lambda_jsd=0.5)
print(f"agreeing heads {agree:.4f} < disagreeing heads {disagree:.4f}")

# --- evaluation: Dice and HD95 on shifted cubes ---
a = np.zeros((20, 20, 20), np.int16)
a[5:12, 5:12, 5:12] = 2
b = np.roll(a, 2, axis=0)
dice = seg_math.dice_eval(a, b)
hd = seg_math.hd95_report(a, b, spacing=(1.0, 1.0, 1.0))
print(f"WT dice {dice['wt']:.4f}  macro {dice['macro']:.4f}")
print(f"WT hd95 {hd['wt']:.2f} mm  (ET/TC undefined: {hd['undefined_count']} regions empty)")
