"""Boosted regression-tree ensemble: storage, prediction and text dumps."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Union

import numpy as np

from . import _kernels

DUMP_FORMAT = "slftrack-gbt/1"


@dataclass(frozen=True)
class TrainParams:
    nrounds: int = 500
    max_depth: int = 8
    eta: float = 0.05
    lam: float = 1.0
    gamma: float = 0.0
    min_samples_leaf: int = 1
    base_score: float = 0.0

    def __post_init__(self):
        if self.nrounds < 0:
            raise ValueError(f"nrounds must be >= 0, got {self.nrounds}")
        if self.max_depth < 0:
            raise ValueError(f"max_depth must be >= 0, got {self.max_depth}")
        if not 0 < self.eta <= 1:
            raise ValueError(f"eta must lie in (0, 1], got {self.eta}")
        if not self.lam >= 0:
            raise ValueError(f"lambda must be >= 0, got {self.lam}")
        if not self.gamma >= 0:
            raise ValueError(f"gamma must be >= 0, got {self.gamma}")
        if self.min_samples_leaf < 1:
            raise ValueError(f"min_samples_leaf must be >= 1, got {self.min_samples_leaf}")
        if not np.isfinite(self.base_score):
            raise ValueError("base_score must be finite")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "TrainParams":
        d = dict(d)
        if "lambda" in d:
            d["lam"] = d.pop("lambda")
        return cls(**d)


@dataclass(frozen=True)
class Leaf:
    weight: float


@dataclass(frozen=True)
class Split:
    feature_index: int
    threshold: float
    default_left: bool
    left: "TreeNode"
    right: "TreeNode"


TreeNode = Union[Leaf, Split]


@dataclass
class Tree:
    """One regression tree in flat breadth-first arrays; ``feature == -1`` marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    default_left: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    def __len__(self):
        return len(self.feature)

    @property
    def depth(self) -> int:
        def d(nd):
            return 0 if self.feature[nd] < 0 else 1 + max(d(self.left[nd]), d(self.right[nd]))
        return d(0)

    @property
    def n_leaves(self) -> int:
        return int((self.feature < 0).sum())

    def to_node(self, nd: int = 0) -> TreeNode:
        if self.feature[nd] < 0:
            return Leaf(float(self.value[nd]))
        return Split(int(self.feature[nd]), float(self.threshold[nd]), bool(self.default_left[nd]),
                     self.to_node(int(self.left[nd])), self.to_node(int(self.right[nd])))

    @classmethod
    def from_node(cls, root: TreeNode) -> "Tree":
        feature, threshold, dleft, left, right, value = [], [], [], [], [], []
        queue = [root]
        while queue:
            node = queue.pop(0)
            if isinstance(node, Leaf):
                feature.append(-1), threshold.append(0.0), dleft.append(False)
                left.append(-1), right.append(-1), value.append(node.weight)
            else:
                base = len(feature) + len(queue) + 1
                feature.append(node.feature_index), threshold.append(node.threshold)
                dleft.append(node.default_left), left.append(base), right.append(base + 1)
                value.append(0.0)
                queue.extend([node.left, node.right])
        return cls(np.array(feature, np.int64), np.array(threshold, float), np.array(dleft, bool),
                   np.array(left, np.int64), np.array(right, np.int64), np.array(value, float))


def _node_to_dict(node: TreeNode) -> dict:
    if isinstance(node, Leaf):
        return {"leaf": node.weight}
    return {"split": node.feature_index, "threshold": node.threshold, "default_left": node.default_left,
            "left": _node_to_dict(node.left), "right": _node_to_dict(node.right)}


def _node_from_dict(d: dict) -> TreeNode:
    if "leaf" in d:
        return Leaf(float(d["leaf"]))
    return Split(int(d["split"]), float(d["threshold"]), bool(d["default_left"]),
                 _node_from_dict(d["left"]), _node_from_dict(d["right"]))


@dataclass
class BoostedModel:
    trees: list
    eta: float
    base_score: float
    n_features: int
    params: TrainParams = field(default_factory=TrainParams)
    train_loss: list = field(default_factory=list, compare=False, repr=False)

    def __post_init__(self):
        self._flat = None

    def _flatten(self):
        if self._flat is None:
            parts = {k: [] for k in ("feature", "threshold", "default_left", "left", "right", "value")}
            roots, off = [], 0
            for t in self.trees:
                roots.append(off)
                for k in parts:
                    a = getattr(t, k)
                    parts[k].append(np.where(a >= 0, a + off, -1) if k in ("left", "right") else a)
                off += len(t)
            dtypes = {"feature": np.int64, "threshold": float, "default_left": bool, "left": np.int64,
                      "right": np.int64, "value": float}
            cat = {k: np.concatenate(v) if v else np.empty(0, dtypes[k]) for k, v in parts.items()}
            self._flat = (cat["feature"], cat["threshold"], cat["default_left"], cat["left"], cat["right"],
                          cat["value"], np.array(roots, np.int64))
        return self._flat

    def predict(self, X) -> np.ndarray:
        """Predict a batch ``(n, n_features)``; NaN entries follow default directions."""
        X = np.ascontiguousarray(X, dtype=float)
        if X.ndim == 1:
            X = X[None, :]
        if X.shape[1] != self.n_features:
            raise ValueError(f"expected {self.n_features} features, got {X.shape[1]}")
        feat, thr, dl, left, right, value, roots = self._flatten()
        return _kernels.predict_batch(X, feat, thr, dl, left, right, value, roots, float(self.eta),
                                      float(self.base_score))

    def to_dict(self) -> dict:
        return {
            "format": DUMP_FORMAT,
            "n_features": self.n_features,
            "eta": self.eta,
            "base_score": self.base_score,
            "params": self.params.to_dict(),
            "trees": [_node_to_dict(t.to_node()) for t in self.trees],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BoostedModel":
        if d.get("format") != DUMP_FORMAT:
            raise ValueError(f"unsupported model format {d.get('format')!r}")
        return cls(trees=[Tree.from_node(_node_from_dict(t)) for t in d["trees"]], eta=float(d["eta"]),
                   base_score=float(d["base_score"]), n_features=int(d["n_features"]),
                   params=TrainParams.from_dict(d["params"]))


def predict(model: BoostedModel, features) -> float:
    features = np.asarray(features, dtype=float)
    if features.ndim != 1:
        raise ValueError("predict takes one feature vector; use BoostedModel.predict for batches")
    return float(model.predict(features)[0])


def dumps(model: BoostedModel) -> str:
    return json.dumps(model.to_dict(), indent=1)


def loads(text: str) -> BoostedModel:
    return BoostedModel.from_dict(json.loads(text))


def dump(model: BoostedModel, path: Union[str, Path]) -> None:
    Path(path).write_text(dumps(model))


def load(path: Union[str, Path]) -> BoostedModel:
    return loads(Path(path).read_text())
