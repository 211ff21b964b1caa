"""Extract the full radiomic + extras feature vector from one region."""

import numpy as np

from gliopipe import radiomics
from gliopipe.volume import Volume3D

rng = np.random.default_rng(3)
data = rng.uniform(0, 100, (24, 24, 24)).astype(np.float32)
roi = np.zeros((24, 24, 24), bool)
roi[6:18, 6:18, 6:18] = True

features = radiomics.extract_features(Volume3D(data, (1.0, 1.0, 1.0)), roi)

by_family: dict[str, int] = {}
for name in features:
    by_family[name.split("_")[0]] = by_family.get(name.split("_")[0], 0) + 1
print(f"{len(features)} features total:")
for fam, count in by_family.items():
    print(f"  {fam:7s} {count}")

for name in ("fo_mean", "shape_sphericity", "glcm_entropy", "glrlm_run_percentage",
             "ngtdm_coarseness", "extras_fractal_dim"):
    print(f"  {name:22s} = {features[name]:.6g}")

# z-score standardization fitted on a small training cohort
train = [radiomics.extract_features(Volume3D(rng.uniform(0, 100, (24, 24, 24)).astype(np.float32),
                                             (1.0, 1.0, 1.0)), roi) for _ in range(4)]
stats = radiomics.fit_standardization(train)
z = radiomics.apply_standardization(features, stats)
print(f"standardized fo_mean = {z['fo_mean']:.4f}")
