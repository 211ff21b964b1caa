"""Cohort orchestration: configuration, stratified splits, cached
preprocessing, feature extraction, training with calibration,
cross-validation, frozen-model external testing, and report emission.

All stages are deterministic given config + data: subjects are processed
in sorted order, reports are emitted with sorted keys and no timestamps,
and feature CSVs use 9 significant digits.
"""

from __future__ import annotations

import concurrent.futures
import csv
import hashlib
import io
import json
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import cls_metrics, gbm, radiomics
from .errors import ConfigError, GliopipeError, InvalidRatio
from .nifti_io import CohortTable, read_cohort_csv, read_nifti, write_nifti
from .preprocess import SubjectBundle, preprocess_subject
from .volume import Volume3D

MODALITY_FILES = ("flair", "t1", "t1ce", "t2", "seg")
CACHE_FILES = ("flair.nii", "t1.nii", "t1ce.nii", "t2.nii", "labels.nii", "p_et.nii", "p_tc.nii", "p_wt.nii")


@dataclass
class PipelineConfig:
    data_dir: str = "data"
    cache_dir: str = "cache"
    output_dir: str = "output"
    labels_csv: str = "labels.csv"
    id_column: str = "ID"
    label_column: str = "MGMT_value"
    # preprocessing (paper defaults)
    pad: int = 12
    grid: tuple[int, int, int] = (160, 160, 160)
    clip_percentiles: tuple[float, float] = (1.0, 99.0)
    clahe_clip: float = 0.01
    n_min: int = 64
    bias_sigma_mm: float = 25.0
    soft_sigma_vox: float = 2.0
    # radiomics
    bin_width: float = 5.0
    resample_mm: tuple[float, float, float] = (2.0, 2.0, 2.0)
    # classifier
    gbm: gbm.GbmConfig = field(default_factory=gbm.GbmConfig)
    # splits
    split_ratio: float = 0.8
    folds: int = 5
    seed: int = 0
    jobs: int = 0  # 0 -> available cores

    def __post_init__(self):
        if not (0.0 < self.split_ratio < 1.0):
            raise InvalidRatio(f"split ratio {self.split_ratio} must be in (0, 1)")
        if self.folds < 2:
            raise ConfigError(f"folds must be >= 2, got {self.folds}")
        self.grid = tuple(self.grid)
        self.clip_percentiles = tuple(self.clip_percentiles)
        self.resample_mm = tuple(self.resample_mm)

    @property
    def n_jobs(self) -> int:
        return self.jobs if self.jobs > 0 else (os.cpu_count() or 1)

    @classmethod
    def from_json(cls, path: str | Path | None, **overrides) -> "PipelineConfig":
        raw: dict = {}
        if path is not None:
            try:
                raw = json.loads(Path(path).read_text())
            except (OSError, json.JSONDecodeError) as exc:
                raise ConfigError(f"cannot read config {path}: {exc}") from exc
        raw.update({k: v for k, v in overrides.items() if v is not None})
        gbm_raw = raw.pop("gbm", {})
        known = set(cls.__dataclass_fields__)
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            cfg = cls(**raw)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc
        if gbm_raw:
            cfg.gbm = gbm.GbmConfig(**gbm_raw)
        return cfg


# ---------------------------------------------------------------------------
# splits


def stratified_split(cohort: CohortTable, ratio: float, seed: int) -> dict[str, str]:
    """Class-wise shuffle then proportional cut; deterministic given seed."""
    if not (0.0 < ratio < 1.0):
        raise InvalidRatio(f"ratio {ratio} must be in (0, 1)")
    rng = np.random.default_rng(seed)
    assignment: dict[str, str] = {}
    for cls in (0, 1):
        ids = sorted(sid for sid, y in cohort.rows if y == cls)
        rng.shuffle(ids)
        n_train = int(round(ratio * len(ids)))
        for i, sid in enumerate(ids):
            assignment[sid] = "train" if i < n_train else "val"
    return assignment


def kfold(cohort: CohortTable, k: int, seed: int) -> dict[str, int]:
    """Stratified k-fold: class-wise shuffle, round-robin fold assignment."""
    if k < 2:
        raise ConfigError(f"k must be >= 2, got {k}")
    rng = np.random.default_rng(seed)
    assignment: dict[str, int] = {}
    for cls in (0, 1):
        ids = sorted(sid for sid, y in cohort.rows if y == cls)
        rng.shuffle(ids)
        for i, sid in enumerate(ids):
            assignment[sid] = i % k
    return assignment


# ---------------------------------------------------------------------------
# subject discovery and caching


def _find_modality_file(subject_dir: Path, name: str) -> Path | None:
    for suffix in (".nii", ".nii.gz"):
        p = subject_dir / f"{name}{suffix}"
        if p.is_file():
            return p
    return None


def discover_subjects(data_dir: str | Path) -> dict[str, dict[str, Path]]:
    """Map subject id -> modality file paths for complete subjects."""
    out: dict[str, dict[str, Path]] = {}
    root = Path(data_dir)
    if not root.is_dir():
        raise ConfigError(f"data_dir {root} does not exist")
    for sub in sorted(p for p in root.iterdir() if p.is_dir()):
        files = {m: _find_modality_file(sub, m) for m in MODALITY_FILES}
        if all(files.values()):
            out[sub.name] = files  # type: ignore[assignment]
    return out


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def load_subject_bundle(subject_id: str, files: dict[str, Path]) -> tuple[SubjectBundle, dict[str, str]]:
    vols: dict[str, Volume3D] = {}
    hashes: dict[str, str] = {}
    for name, path in files.items():
        raw = path.read_bytes()
        hashes[name] = _sha256(raw)
        _, vol = read_nifti(raw)
        vols[name] = vol
    labels = np.rint(vols["seg"].data).astype(np.int16)
    bundle = SubjectBundle(
        subject_id=subject_id,
        modalities={m: vols[m] for m in ("flair", "t1", "t1ce", "t2")},
        labels=labels,
        label_spacing=vols["seg"].spacing,
    )
    return bundle, hashes


def _cache_subject(config: PipelineConfig, subject_id: str, files: dict[str, Path]) -> dict:
    bundle, input_hashes = load_subject_bundle(subject_id, files)
    pre = preprocess_subject(
        bundle,
        pad=config.pad,
        target_dims=config.grid,
        n_min=config.n_min,
        clahe_clip=config.clahe_clip,
        bias_sigma_mm=config.bias_sigma_mm,
        soft_sigma_vox=config.soft_sigma_vox,
    )
    subject_dir = Path(config.cache_dir) / subject_id
    subject_dir.mkdir(parents=True, exist_ok=True)
    spacing = pre.spacing
    outputs = {
        "flair.nii": pre.modalities["flair"],
        "t1.nii": pre.modalities["t1"],
        "t1ce.nii": pre.modalities["t1ce"],
        "t2.nii": pre.modalities["t2"],
        "labels.nii": Volume3D(pre.labels.astype(np.float32), spacing),
        "p_et.nii": Volume3D(pre.soft_maps[0], spacing),
        "p_tc.nii": Volume3D(pre.soft_maps[1], spacing),
        "p_wt.nii": Volume3D(pre.soft_maps[2], spacing),
    }
    output_hashes = {}
    for fname, vol in outputs.items():
        data = write_nifti(vol)
        (subject_dir / fname).write_bytes(data)
        output_hashes[fname] = _sha256(data)
    return {"inputs": input_hashes, "outputs": output_hashes, "files": list(CACHE_FILES)}


def run_preprocess(config: PipelineConfig) -> dict:
    """Preprocess all discovered subjects into the cache; per-subject failures
    are isolated. Unchanged subjects (same input hashes) are skipped."""
    subjects = discover_subjects(config.data_dir)
    manifest_path = Path(config.cache_dir) / "manifest.json"
    manifest: dict = {"subjects": {}, "failed": {}}
    if manifest_path.is_file():
        manifest = json.loads(manifest_path.read_text())
        manifest.setdefault("subjects", {})
        manifest.setdefault("failed", {})

    def current_hashes(files):
        return {m: _sha256(p.read_bytes()) for m, p in files.items()}

    todo = []
    skipped = []
    for sid, files in subjects.items():
        entry = manifest["subjects"].get(sid)
        cached_ok = entry is not None and all(
            (Path(config.cache_dir) / sid / f).is_file() for f in entry.get("files", [])
        )
        if cached_ok and entry["inputs"] == current_hashes(files):
            skipped.append(sid)
        else:
            todo.append(sid)

    results: dict[str, dict] = {}
    failures: dict[str, str] = {}

    def work(sid: str):
        return sid, _cache_subject(config, sid, subjects[sid])

    if config.n_jobs > 1 and len(todo) > 1:
        with concurrent.futures.ThreadPoolExecutor(max_workers=config.n_jobs) as pool:
            futures = {pool.submit(work, sid): sid for sid in todo}
            for fut in concurrent.futures.as_completed(futures):
                sid = futures[fut]
                try:
                    _, entry = fut.result()
                    results[sid] = entry
                except GliopipeError as exc:
                    failures[sid] = f"{type(exc).__name__}: {exc}"
    else:
        for sid in todo:
            try:
                _, entry = work(sid)
                results[sid] = entry
            except GliopipeError as exc:
                failures[sid] = f"{type(exc).__name__}: {exc}"

    for sid, entry in results.items():
        manifest["subjects"][sid] = entry
        manifest["failed"].pop(sid, None)
    for sid, msg in failures.items():
        manifest["failed"][sid] = msg
        manifest["subjects"].pop(sid, None)
    manifest["summary"] = {
        "processed": sorted(results),
        "skipped": sorted(skipped),
        "failed": sorted(failures),
    }
    manifest_path.parent.mkdir(parents=True, exist_ok=True)
    manifest_path.write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return manifest


# ---------------------------------------------------------------------------
# features


def _read_cached_volume(cache_dir: str | Path, sid: str, fname: str) -> Volume3D:
    _, vol = read_nifti((Path(cache_dir) / sid / fname).read_bytes())
    return vol


def extract_subject_features(config: PipelineConfig, sid: str) -> dict[str, float]:
    t1ce = _read_cached_volume(config.cache_dir, sid, "t1ce.nii")
    labels = _read_cached_volume(config.cache_dir, sid, "labels.nii")
    roi = labels.data > 0.5
    return radiomics.extract_features(
        t1ce, roi, bin_width=config.bin_width, resample_mm=config.resample_mm
    )


def format_float(v: float) -> str:
    return f"{v:.9g}"


def write_features_csv(path: str | Path, rows: dict[str, dict[str, float]]) -> None:
    sids = sorted(rows)
    names = list(rows[sids[0]]) if sids else []
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["subject_id", *names])
    for sid in sids:
        writer.writerow([sid, *(format_float(rows[sid][n]) for n in names)])
    Path(path).write_text(buf.getvalue())


def read_features_csv(path: str | Path) -> dict[str, dict[str, float]]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        names = header[1:]
        return {row[0]: {n: float(v) for n, v in zip(names, row[1:])} for row in reader}


def run_features(config: PipelineConfig) -> dict:
    """Extract features for all cached subjects present in the cohort CSV;
    fit standardization stats on the train split only and persist them."""
    cohort = _load_cohort(config)
    manifest = json.loads((Path(config.cache_dir) / "manifest.json").read_text())
    cached = set(manifest["subjects"])
    sids = sorted(sid for sid, _ in cohort.rows if sid in cached)
    if not sids:
        raise ConfigError("no cached subjects overlap the cohort CSV")

    rows: dict[str, dict[str, float]] = {}
    failed: dict[str, str] = {}
    for sid in sids:
        try:
            rows[sid] = extract_subject_features(config, sid)
        except GliopipeError as exc:
            failed[sid] = f"{type(exc).__name__}: {exc}"

    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_features_csv(out_dir / "features.csv", rows)

    split = stratified_split(cohort, config.split_ratio, config.seed)
    train_rows = [rows[sid] for sid in sorted(rows) if split.get(sid) == "train"]
    stats = radiomics.fit_standardization(train_rows)
    (out_dir / "feature_stats.json").write_text(json.dumps(stats, indent=2, sort_keys=True))
    (out_dir / "split.json").write_text(json.dumps(split, indent=2, sort_keys=True))
    return {"features": sorted(rows), "failed": failed}


# ---------------------------------------------------------------------------
# training / evaluation


def _load_cohort(config: PipelineConfig) -> CohortTable:
    text = Path(config.labels_csv).read_text()
    return read_cohort_csv(text, id_col=config.id_column, label_col=config.label_column)


def _split_feature_dict(fv: dict[str, float]) -> tuple[dict[str, float], dict[str, float]]:
    rad = {k: v for k, v in fv.items() if not k.startswith("extras_")}
    extras = {k: v for k, v in fv.items() if k.startswith("extras_")}
    return rad, extras


def _fused_matrix(
    sids: list[str],
    rows: dict[str, dict[str, float]],
    stats: dict,
    embeddings: dict[str, np.ndarray] | None = None,
) -> np.ndarray:
    vecs = []
    for sid in sids:
        std = radiomics.apply_standardization(rows[sid], stats)
        rad, extras = _split_feature_dict(std)
        emb = embeddings.get(sid) if embeddings else None
        vecs.append(gbm.fuse(rad, extras, emb))
    return gbm.fuse_cohort(vecs)


def load_embeddings_csv(path: str | Path) -> dict[str, np.ndarray]:
    """Optional externally produced per-subject embedding block."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        next(reader)  # header
        return {row[0]: np.array([float(v) for v in row[1:]]) for row in reader}


def _logit(p: np.ndarray) -> np.ndarray:
    p = np.clip(p, 1e-12, 1.0 - 1e-12)
    return np.log(p / (1.0 - p))


def run_train(config: PipelineConfig, embeddings: dict[str, np.ndarray] | None = None) -> dict:
    """Train the boosted classifier on the train split; calibrate temperature
    and decision threshold on the validation split; emit the report."""
    cohort = _load_cohort(config)
    out_dir = Path(config.output_dir)
    rows = read_features_csv(out_dir / "features.csv")
    stats = json.loads((out_dir / "feature_stats.json").read_text())
    split = json.loads((out_dir / "split.json").read_text())
    labels = cohort.labels()

    train_ids = sorted(s for s in rows if split.get(s) == "train")
    val_ids = sorted(s for s in rows if split.get(s) == "val")
    x_train = _fused_matrix(train_ids, rows, stats, embeddings)
    y_train = np.array([labels[s] for s in train_ids])
    x_val = _fused_matrix(val_ids, rows, stats, embeddings)
    y_val = np.array([labels[s] for s in val_ids])

    model = gbm.train_gbm(x_train, y_train, config.gbm)
    (out_dir / "model.gbm").write_bytes(gbm.serialize(model))

    val_margin = model.predict_margin(x_val)
    temperature = cls_metrics.temperature_scale(y_val, val_margin)
    probs = cls_metrics.sigmoid(val_margin / temperature)
    threshold = cls_metrics.select_threshold(y_val, probs)

    report = cls_metrics.classification_report(y_val, probs, threshold, temperature)
    (out_dir / "calibration.json").write_text(
        json.dumps({"temperature": temperature, "threshold": threshold}, indent=2, sort_keys=True)
    )
    (out_dir / "validation_report.json").write_text(json.dumps(report, indent=2, sort_keys=True))
    preds = {sid: {"label": int(y), "prob": float(p)} for sid, y, p in zip(val_ids, y_val, probs)}
    (out_dir / "val_predictions.json").write_text(json.dumps(preds, indent=2, sort_keys=True))
    return report


def run_crossval(config: PipelineConfig, embeddings: dict[str, np.ndarray] | None = None) -> dict:
    """Stratified k-fold cross-validation with per-fold and mean/std metrics."""
    cohort = _load_cohort(config)
    out_dir = Path(config.output_dir)
    rows = read_features_csv(out_dir / "features.csv")
    labels = cohort.labels()
    available = CohortTable(rows=[(s, labels[s]) for s, _ in cohort.rows if s in rows])
    folds = kfold(available, config.folds, config.seed)

    per_fold = []
    for fold in range(config.folds):
        train_ids = sorted(s for s in rows if folds.get(s) not in (None, fold))
        val_ids = sorted(s for s in rows if folds.get(s) == fold)
        stats = radiomics.fit_standardization([rows[s] for s in train_ids])
        x_train = _fused_matrix(train_ids, rows, stats, embeddings)
        x_val = _fused_matrix(val_ids, rows, stats, embeddings)
        y_train = np.array([labels[s] for s in train_ids])
        y_val = np.array([labels[s] for s in val_ids])
        model = gbm.train_gbm(x_train, y_train, config.gbm)
        probs = model.predict_proba(x_val)
        cm = cls_metrics.confusion(y_val, probs, 0.5)
        per_fold.append(
            {
                "fold": fold,
                "roc_auc": cls_metrics.roc_auc(y_val, probs),
                "accuracy": cls_metrics.basic_rates(cm)["acc"],
                "macro_f1": cls_metrics.macro_f1(cm),
            }
        )
    agg = {
        metric: {
            "mean": float(np.mean([f[metric] for f in per_fold])),
            "std": float(np.std([f[metric] for f in per_fold])),
        }
        for metric in ("roc_auc", "accuracy", "macro_f1")
    }
    report = {"folds": per_fold, "aggregate": agg}
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "cv_report.json").write_text(json.dumps(report, indent=2, sort_keys=True))
    return report


def run_external(config: PipelineConfig, model_path: str | Path, embeddings=None) -> dict:
    """Frozen-model external test: stored stats, temperature, and threshold
    are applied read-only; nothing is refitted."""
    cohort = _load_cohort(config)
    out_dir = Path(config.output_dir)
    rows = read_features_csv(out_dir / "features.csv")
    stats = json.loads((out_dir / "feature_stats.json").read_text())
    calib = json.loads((out_dir / "calibration.json").read_text())
    model = gbm.deserialize(Path(model_path).read_bytes())
    labels = cohort.labels()

    sids = sorted(s for s in rows if s in labels)
    x = _fused_matrix(sids, rows, stats, embeddings)
    y = np.array([labels[s] for s in sids])
    margin = model.predict_margin(x)
    probs = cls_metrics.sigmoid(margin / calib["temperature"])
    report = cls_metrics.classification_report(y, probs, calib["threshold"], calib["temperature"])
    (out_dir / "external_report.json").write_text(json.dumps(report, indent=2, sort_keys=True))
    return report


def run_report(config: PipelineConfig) -> dict:
    """Emit ROC curve points and the confusion matrix as plot-ready CSVs."""
    out_dir = Path(config.output_dir)
    preds = json.loads((out_dir / "val_predictions.json").read_text())
    calib = json.loads((out_dir / "calibration.json").read_text())
    sids = sorted(preds)
    y = [preds[s]["label"] for s in sids]
    p = [preds[s]["prob"] for s in sids]

    pts = cls_metrics.roc_points(y, p)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["fpr", "tpr"])
    for fpr, tpr in pts:
        writer.writerow([format_float(fpr), format_float(tpr)])
    (out_dir / "roc_points.csv").write_text(buf.getvalue())

    cm = cls_metrics.confusion(y, p, calib["threshold"])
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["tp", "tn", "fp", "fn"])
    writer.writerow([cm.tp, cm.tn, cm.fp, cm.fn])
    (out_dir / "confusion.csv").write_text(buf.getvalue())
    return {"roc_points": len(pts), "confusion": asdict(cm)}
