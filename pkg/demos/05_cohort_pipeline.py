"""Run the whole cohort pipeline on a generated toy dataset:
preprocess -> features -> train -> crossval -> report.

Equivalent CLI: gliopipe preprocess --config cfg.json, then features,
train, crossval, report with the same config.
"""

import json
import tempfile
from pathlib import Path

import numpy as np

from gliopipe import pipeline
from gliopipe.nifti_io import write_nifti, write_nifti_gz
from gliopipe.volume import Volume3D


def make_subject(rng, dims=(24, 24, 24), spacing=(2.0, 2.0, 2.0)):
    zz, yy, xx = np.meshgrid(*[np.arange(n) for n in dims], indexing="ij")
    c = np.array(dims) / 2
    brain = np.sqrt(((zz - c[0]) ** 2 + (yy - c[1]) ** 2 + (xx - c[2]) ** 2)) < min(dims) * 0.42
    labels = np.zeros(dims, np.int16)
    cz, cy, cx = (int(v) for v in c)
    labels[cz - 3:cz + 3, cy - 3:cy + 3, cx - 3:cx + 3] = 2
    labels[cz - 2:cz + 2, cy - 2:cy + 2, cx - 2:cx + 2] = 1
    labels[cz - 1:cz + 1, cy - 1:cy + 1, cx - 1:cx + 1] = 4
    base = 20.0 + 80.0 * brain
    mods = {
        m: Volume3D(np.maximum(base + rng.normal(0, 4, dims) + 30 * (labels > 0), 0.1).astype(np.float32), spacing)
        for m in ("flair", "t1", "t1ce", "t2")
    }
    return mods, Volume3D(labels.astype(np.float32), spacing)


with tempfile.TemporaryDirectory() as tmp:
    root = Path(tmp)
    rng = np.random.default_rng(42)
    lines = ["ID,MGMT_value"]
    for i in range(10):
        sid = f"SUB{i:03d}"
        sub = root / "data" / sid
        sub.mkdir(parents=True)
        mods, seg = make_subject(rng)
        for m, vol in mods.items():
            (sub / f"{m}.nii").write_bytes(write_nifti(vol))
        (sub / "seg.nii.gz").write_bytes(write_nifti_gz(seg))
        lines.append(f"{sid},{i % 2}")
    (root / "labels.csv").write_text("\n".join(lines) + "\n")

    config = pipeline.PipelineConfig(
        data_dir=str(root / "data"),
        cache_dir=str(root / "cache"),
        output_dir=str(root / "output"),
        labels_csv=str(root / "labels.csv"),
        grid=(32, 32, 32),  # small grid keeps the demo quick
        split_ratio=0.6,
        folds=2,
        seed=17,
    )

    manifest = pipeline.run_preprocess(config)
    print(f"preprocessed {len(manifest['summary']['processed'])} subjects "
          f"({len(manifest['summary']['failed'])} failed)")

    pipeline.run_features(config)
    rows = pipeline.read_features_csv(root / "output" / "features.csv")
    print(f"features.csv: {len(rows)} subjects x {len(next(iter(rows.values())))} features")

    report = pipeline.run_train(config)
    print(f"validation: AUC {report['roc_auc']:.3f}  acc {report['accuracy']:.3f}  "
          f"T {report['temperature']:.3f}  thr {report['threshold']:.3f}")

    cv = pipeline.run_crossval(config)
    agg = cv["aggregate"]["roc_auc"]
    print(f"{config.folds}-fold CV AUC {agg['mean']:.3f} +/- {agg['std']:.3f}")

    pipeline.run_report(config)
    print("plot CSVs:", sorted(p.name for p in (root / "output").glob("*.csv")))

    # rerunning preprocess skips everything: cache is hash-keyed
    again = pipeline.run_preprocess(config)
    print(f"rerun skipped {len(again['summary']['skipped'])} unchanged subjects")
    print("calibration:", json.loads((root / "output" / "calibration.json").read_text()))
