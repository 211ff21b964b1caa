"""Take one synthetic multi-modal subject through the full preprocessing
chain: bias correction, brain extraction, ROI cropping, intensity
standardization, grid harmonization, and 8-channel assembly."""

import numpy as np

from gliopipe import preprocess as pp
from gliopipe.volume import Volume3D

rng = np.random.default_rng(7)
dims = (48, 48, 48)
spacing = (2.0, 2.0, 2.0)

# bright spherical "brain" with a small nested tumor (labels 2 / 1 / 4)
zz, yy, xx = np.meshgrid(*[np.arange(n) for n in dims], indexing="ij")
r = np.sqrt((zz - 24) ** 2 + (yy - 24) ** 2 + (xx - 24) ** 2)
base = 20.0 + 80.0 * (r < 20)
labels = np.zeros(dims, dtype=np.int16)
labels[21:27, 21:27, 21:27] = 2
labels[22:26, 22:26, 22:26] = 1
labels[23:25, 23:25, 23:25] = 4

modalities = {
    m: Volume3D((base + rng.normal(0, 4, dims) + 30 * (labels > 0)).astype(np.float32), spacing)
    for m in ("flair", "t1", "t1ce", "t2")
}
bundle = pp.SubjectBundle("demo", modalities, labels, spacing)

pre = pp.preprocess_subject(bundle, target_dims=(64, 64, 64))

print(f"channel stack: {pre.channels.shape}  (order: {', '.join(pp.CHANNEL_ORDER)})")
for m, vol in pre.modalities.items():
    print(f"  {m:5s} range [{vol.data.min():.3f}, {vol.data.max():.3f}]  spacing {vol.spacing}")

canon = pp.canonicalize_labels(pre.labels)
print(f"voxels  ET={canon.et.sum()}  TC={canon.tc.sum()}  WT={canon.wt.sum()}  (nested)")

p_et, p_tc, p_wt = pre.soft_maps
assert (p_et <= p_tc + 1e-7).all() and (p_tc <= p_wt + 1e-7).all()
print("soft probability maps respect ET <= TC <= WT everywhere")
