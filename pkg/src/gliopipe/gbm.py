"""Feature fusion and a from-scratch gradient-boosted-trees classifier.

Boosting is second-order on the logistic loss: each round fits one
depth-limited regression tree to gradient/hessian statistics with exact
greedy split search, L2 leaf regularization, and a deterministic
first-feature-index tie-break. No row or column subsampling, so training
is exactly reproducible and independent of row order.

Model file layout (little-endian): magic ``GBMF``, version u32, base
score f64, learning rate f64, tree count u32, then each tree in preorder
(internal node: split feature u32, threshold f64; leaf: u32 0xFFFFFFFF,
value f64).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .cls_metrics import sigmoid
from .errors import DimensionMismatch, ModelFormatError, NaNFeature, SingleClass, UnsupportedModelVersion

MODEL_MAGIC = b"GBMF"
MODEL_VERSION = 1
LEAF_SENTINEL = 0xFFFFFFFF


def fuse(
    rad: dict[str, float],
    extras: dict[str, float],
    cnn_embedding: np.ndarray | None = None,
) -> np.ndarray:
    """Concatenate [cnn? | radiomics | extras] into one float vector.

    The cnn block is optional ("deep-free" mode); radiomics and extras
    must be non-empty.
    """
    if not rad or not extras:
        raise DimensionMismatch("radiomics and extras blocks must be non-empty")
    blocks = []
    if cnn_embedding is not None:
        blocks.append(np.asarray(cnn_embedding, dtype=np.float64).ravel())
    blocks.append(np.array([rad[k] for k in rad], dtype=np.float64))
    blocks.append(np.array([extras[k] for k in extras], dtype=np.float64))
    return np.concatenate(blocks)


def fuse_cohort(vectors: list[np.ndarray]) -> np.ndarray:
    dims = {v.shape[0] for v in vectors}
    if len(dims) != 1:
        raise DimensionMismatch(f"fused dimensions differ across cohort: {sorted(dims)}")
    return np.stack(vectors)


@dataclass(frozen=True)
class GbmConfig:
    n_rounds: int = 200
    learning_rate: float = 0.1
    max_depth: int = 3
    min_child_weight: float = 1.0
    reg_lambda: float = 1.0


@dataclass
class TreeNode:
    feature: int = -1
    threshold: float = 0.0
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None
    value: float = 0.0

    @property
    def is_leaf(self) -> bool:
        return self.left is None


@dataclass
class BoostedModel:
    base_score: float
    learning_rate: float
    trees: list[TreeNode] = field(default_factory=list)

    def predict_margin(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        margin = np.full(len(x), self.base_score)
        for tree in self.trees:
            margin += self.learning_rate * _eval_tree(tree, x)
        return margin

    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        return sigmoid(self.predict_margin(x))


def _eval_tree(node: TreeNode, x: np.ndarray) -> np.ndarray:
    out = np.empty(len(x))
    stack = [(node, np.arange(len(x)))]
    while stack:
        n, idx = stack.pop()
        if n.is_leaf:
            out[idx] = n.value
            continue
        go_left = x[idx, n.feature] < n.threshold
        stack.append((n.left, idx[go_left]))
        stack.append((n.right, idx[~go_left]))
    return out


def _leaf_value(g_sum: float, h_sum: float, reg_lambda: float) -> float:
    return -g_sum / (h_sum + reg_lambda)


def _best_split(x: np.ndarray, g: np.ndarray, h: np.ndarray, cfg: GbmConfig):
    """Exact greedy search over all features; returns (gain, feature, threshold)."""
    g_total, h_total = g.sum(), h.sum()
    parent = g_total**2 / (h_total + cfg.reg_lambda)
    best = (0.0, -1, 0.0)
    for j in range(x.shape[1]):
        col = x[:, j]
        order = np.argsort(col, kind="stable")
        vals = col[order]
        gs = np.cumsum(g[order])
        hs = np.cumsum(h[order])
        # candidate cuts between distinct consecutive values
        cut = np.nonzero(vals[1:] > vals[:-1])[0]
        if cut.size == 0:
            continue
        gl, hl = gs[cut], hs[cut]
        gr, hr = g_total - gl, h_total - hl
        ok = (hl >= cfg.min_child_weight) & (hr >= cfg.min_child_weight)
        if not ok.any():
            continue
        gain = 0.5 * (
            gl**2 / (hl + cfg.reg_lambda) + gr**2 / (hr + cfg.reg_lambda) - parent
        )
        gain = np.where(ok, gain, -np.inf)
        k = int(np.argmax(gain))
        if gain[k] > best[0]:
            best = (float(gain[k]), j, float(0.5 * (vals[cut[k]] + vals[cut[k] + 1])))
    return best


def _build_tree(x: np.ndarray, g: np.ndarray, h: np.ndarray, cfg: GbmConfig, depth: int = 0) -> TreeNode:
    if depth < cfg.max_depth:
        gain, feature, threshold = _best_split(x, g, h, cfg)
        if feature >= 0 and gain > 0.0:
            go_left = x[:, feature] < threshold
            return TreeNode(
                feature=feature,
                threshold=threshold,
                left=_build_tree(x[go_left], g[go_left], h[go_left], cfg, depth + 1),
                right=_build_tree(x[~go_left], g[~go_left], h[~go_left], cfg, depth + 1),
            )
    return TreeNode(value=_leaf_value(g.sum(), h.sum(), cfg.reg_lambda))


def _logloss(y: np.ndarray, p: np.ndarray) -> float:
    p = np.clip(p, 1e-12, 1.0 - 1e-12)
    return float(np.mean(-(y * np.log(p) + (1.0 - y) * np.log(1.0 - p))))


def train_gbm(x: np.ndarray, y: np.ndarray, cfg: GbmConfig = GbmConfig()) -> BoostedModel:
    """Boost depth-limited trees on the logistic loss.

    Training loss is checked to be nonincreasing after every round; a
    round that would increase it is discarded and training stops.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.ndim != 2 or len(x) != len(y):
        raise DimensionMismatch("x must be (n, d) with matching labels")
    if not np.isfinite(x).all():
        raise NaNFeature("features contain NaN/inf")
    pos = float(y.sum())
    if pos == 0 or pos == len(y):
        raise SingleClass("training labels contain a single class")

    prior = pos / len(y)
    model = BoostedModel(base_score=float(np.log(prior / (1.0 - prior))), learning_rate=cfg.learning_rate)
    margin = np.full(len(y), model.base_score)
    loss = _logloss(y, sigmoid(margin))
    for _ in range(cfg.n_rounds):
        p = sigmoid(margin)
        tree = _build_tree(x, p - y, p * (1.0 - p), cfg)
        new_margin = margin + cfg.learning_rate * _eval_tree(tree, x)
        new_loss = _logloss(y, sigmoid(new_margin))
        if new_loss > loss + 1e-12:
            break
        model.trees.append(tree)
        margin, loss = new_margin, new_loss
    return model


# ---------------------------------------------------------------------------
# serialization


def _write_tree(node: TreeNode, out: bytearray) -> None:
    if node.is_leaf:
        out += struct.pack("<I", LEAF_SENTINEL)
        out += struct.pack("<d", node.value)
    else:
        out += struct.pack("<I", node.feature)
        out += struct.pack("<d", node.threshold)
        _write_tree(node.left, out)
        _write_tree(node.right, out)


def serialize(model: BoostedModel) -> bytes:
    out = bytearray()
    out += MODEL_MAGIC
    out += struct.pack("<I", MODEL_VERSION)
    out += struct.pack("<d", model.base_score)
    out += struct.pack("<d", model.learning_rate)
    out += struct.pack("<I", len(model.trees))
    for tree in model.trees:
        _write_tree(tree, out)
    return bytes(out)


class _Cursor:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, fmt: str):
        size = struct.calcsize(fmt)
        if self.pos + size > len(self.data):
            raise ModelFormatError("model payload truncated")
        vals = struct.unpack_from(fmt, self.data, self.pos)
        self.pos += size
        return vals[0] if len(vals) == 1 else vals


def _read_tree(cur: _Cursor, depth: int = 0) -> TreeNode:
    if depth > 64:
        raise ModelFormatError("tree nesting too deep")
    tag = cur.take("<I")
    val = cur.take("<d")
    if tag == LEAF_SENTINEL:
        if not np.isfinite(val):
            raise ModelFormatError("non-finite leaf value")
        return TreeNode(value=float(val))
    return TreeNode(
        feature=int(tag),
        threshold=float(val),
        left=_read_tree(cur, depth + 1),
        right=_read_tree(cur, depth + 1),
    )


def deserialize(data: bytes) -> BoostedModel:
    cur = _Cursor(data)
    if len(data) < 4 or data[:4] != MODEL_MAGIC:
        raise ModelFormatError("bad model magic")
    cur.pos = 4
    version = cur.take("<I")
    if version != MODEL_VERSION:
        raise UnsupportedModelVersion(f"model version {version}, expected {MODEL_VERSION}")
    base = cur.take("<d")
    lr = cur.take("<d")
    n_trees = cur.take("<I")
    if n_trees > 1_000_000:
        raise ModelFormatError(f"implausible tree count {n_trees}")
    model = BoostedModel(base_score=float(base), learning_rate=float(lr))
    for _ in range(n_trees):
        model.trees.append(_read_tree(cur))
    if cur.pos != len(data):
        raise ModelFormatError("trailing bytes after model payload")
    return model
