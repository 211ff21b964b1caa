import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))  # make oracles importable

from gliopipe.nifti_io import write_nifti, write_nifti_gz
from gliopipe.volume import Volume3D


def synthetic_subject(rng, dims=(32, 32, 32), spacing=(2.0, 2.0, 2.0)):
    """Bright brain blob on dark background with a small BraTS-labeled tumor."""
    zz, yy, xx = np.meshgrid(*[np.arange(n) for n in dims], indexing="ij")
    center = np.array(dims) / 2.0
    r = np.sqrt((zz - center[0]) ** 2 + (yy - center[1]) ** 2 + (xx - center[2]) ** 2)
    brain = r < min(dims) * 0.42
    base = 20.0 + 80.0 * brain

    labels = np.zeros(dims, dtype=np.int16)
    cz, cy, cx = (int(c) for c in center)
    labels[cz - 3 : cz + 3, cy - 3 : cy + 3, cx - 3 : cx + 3] = 2
    labels[cz - 2 : cz + 2, cy - 2 : cy + 2, cx - 2 : cx + 2] = 1
    labels[cz - 1 : cz + 1, cy - 1 : cy + 1, cx - 1 : cx + 1] = 4

    modalities = {}
    for m in ("flair", "t1", "t1ce", "t2"):
        data = base + rng.normal(0, 4.0, dims) + 30.0 * (labels > 0)
        modalities[m] = Volume3D(np.maximum(data, 0.1).astype(np.float32), spacing)
    return modalities, labels


def write_toy_cohort(root: Path, n_subjects=4, seed=7, dims=(24, 24, 24)):
    """Directory-per-subject BraTS-style layout plus a cohort CSV."""
    rng = np.random.default_rng(seed)
    data_dir = root / "data"
    ids = [f"SUB{i:03d}" for i in range(n_subjects)]
    lines = ["ID,MGMT_value"]
    for i, sid in enumerate(ids):
        sub = data_dir / sid
        sub.mkdir(parents=True)
        modalities, labels = synthetic_subject(rng, dims=dims)
        for m, vol in modalities.items():
            (sub / f"{m}.nii").write_bytes(write_nifti(vol))
        seg = Volume3D(labels.astype(np.float32), modalities["t1"].spacing)
        (sub / "seg.nii.gz").write_bytes(write_nifti_gz(seg))
        lines.append(f"{sid},{i % 2}")
    csv_path = root / "labels.csv"
    csv_path.write_text("\n".join(lines) + "\n")
    return data_dir, csv_path, ids


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """One pass/fail line per acceptance criterion."""
    lines = []
    for status in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(status, []):
            nodeid = getattr(rep, "nodeid", "")
            if "test_acceptance.py" in nodeid and getattr(rep, "when", "call") == "call":
                name = nodeid.split("::")[-1].removeprefix("test_")
                lines.append((name, "PASS" if status == "passed" else "FAIL"))
    if lines:
        terminalreporter.write_line("")
        terminalreporter.write_line("acceptance criteria:")
        for name, status in sorted(lines):
            terminalreporter.write_line(f"  {status}  {name}")
