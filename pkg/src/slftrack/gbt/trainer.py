"""Second-order gradient boosting with exact greedy, sparsity-aware splits."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import NamedTuple, Optional

import numpy as np

from . import _kernels
from .model import BoostedModel, Tree, TrainParams

log = logging.getLogger(__name__)


class GradHess(NamedTuple):
    g: np.ndarray
    h: np.ndarray


class SplitCandidate(NamedTuple):
    feature_index: int
    threshold: float
    default_left: bool
    gain: float


@dataclass
class ColumnIndex:
    """Per-feature row ids of present values, sorted ascending by value.

    ``rank`` is each sorted entry's dense rank among the feature's distinct
    values, which are stored in ``uniq[uptr[f]:uptr[f + 1]]``. Built once per
    feature matrix and shared by every tree (and by both output models of a
    multi-output fit).
    """

    X: np.ndarray
    present: np.ndarray
    order: np.ndarray
    rank: np.ndarray
    fptr: np.ndarray
    uniq: np.ndarray
    uptr: np.ndarray

    @classmethod
    def build(cls, X) -> "ColumnIndex":
        X = np.ascontiguousarray(X, dtype=float)
        if X.ndim != 2:
            raise ValueError(f"feature matrix must be 2-D, got shape {X.shape}")
        if np.isinf(X).any():
            raise ValueError("features must be finite or NaN (missing)")
        idx_t = np.int32 if len(X) < 2**31 else np.int64
        orders, ranks, uniqs = [], [], []
        for f in range(X.shape[1]):
            col = X[:, f]
            present = np.flatnonzero(~np.isnan(col))
            idx = present[np.argsort(col[present], kind="stable")]
            v = col[idx]
            new = np.empty(len(v), bool)
            new[:1] = True
            new[1:] = v[1:] > v[:-1]
            orders.append(idx.astype(idx_t))
            ranks.append((np.cumsum(new) - 1).astype(np.int32))
            uniqs.append(v[new])
        fptr = np.concatenate([[0], np.cumsum([len(o) for o in orders], dtype=np.int64)]).astype(np.int64)
        uptr = np.concatenate([[0], np.cumsum([len(u) for u in uniqs], dtype=np.int64)]).astype(np.int64)
        cat = lambda parts, dt: np.concatenate(parts).astype(dt) if parts else np.empty(0, dt)
        return cls(X, (~np.isnan(X)).astype(np.uint8), cat(orders, idx_t), cat(ranks, np.int32), fptr,
                   cat(uniqs, float), uptr)

    @property
    def n_samples(self) -> int:
        return self.X.shape[0]

    @property
    def n_features(self) -> int:
        return self.X.shape[1]

    @property
    def nnz(self) -> int:
        return len(self.order)


class _Scratch:
    """Double-buffered segment storage reused by every tree grown on one index."""

    def __init__(self, index: ColumnIndex, unit_h: bool, max_depth: int):
        nnz = index.nnz
        self.unit_h = unit_h
        self.lpos = _position_scratch(index.n_samples, max_depth)
        self.bufs = []
        for _ in range(2):
            self.bufs += [np.empty(nnz, index.order.dtype), np.empty(nnz, np.int32), np.empty(nnz),
                          np.empty(0 if unit_h else nnz)]


def _inv_table(n: int, lam: float) -> np.ndarray:
    c = np.arange(n + 1, dtype=float)
    with np.errstate(divide="ignore"):
        return 1.0 / (c + lam)


def grad_hess(target, pred) -> GradHess:
    """Gradient and Hessian of ``0.5 * (pred - target)**2`` w.r.t. ``pred``."""
    target = np.asarray(target, dtype=float)
    pred = np.asarray(pred, dtype=float)
    g = pred - target
    return GradHess(g, np.ones_like(g))


def leaf_weight(G: float, H: float, lam: float) -> float:
    if not H + lam > 0:
        raise ValueError(f"H + lambda must be > 0, got {H} + {lam}")
    return -G / (H + lam)


def split_gain(GL: float, HL: float, GR: float, HR: float, lam: float, gamma: float) -> float:
    return 0.5 * (GL**2 / (HL + lam) + GR**2 / (HR + lam) - (GL + GR) ** 2 / (HL + HR + lam)) - gamma


def _cap_nodes(n: int, max_depth: int) -> int:
    # every split leaves >= 1 sample per child, so there are at most n leaves
    return min(2 ** min(max_depth + 1, 62) - 1, 2 * n - 1)


def _position_scratch(n: int, max_depth: int) -> np.ndarray:
    # widest level that is ever scanned holds 2**(max_depth - 1) nodes
    width = min(2 ** min(max(max_depth - 1, 0), 62), n)
    for dtype in (np.int8, np.int16, np.int32):
        if width <= np.iinfo(dtype).max:
            return np.zeros(n, dtype)
    return np.zeros(n, np.int64)


def _as_gh(gh: GradHess) -> tuple[np.ndarray, np.ndarray, bool]:
    g = np.ascontiguousarray(gh.g, dtype=float)
    h = np.ascontiguousarray(gh.h, dtype=float)
    return g, h, bool((h == 1.0).all())


def find_best_split(X, gh: GradHess, members=None, params: TrainParams = TrainParams(),
                    index: Optional[ColumnIndex] = None) -> Optional[SplitCandidate]:
    """Best split of one node, or None when no split has positive gain.

    Candidates are every midpoint between consecutive distinct present values
    of every feature, each with MISSING routed left and right. Ties go to the
    lowest feature, then the lowest threshold, then left.
    """
    index = index if index is not None else ColumnIndex.build(X)
    n = index.n_samples
    lpos = np.full(n, -1, np.int8)
    lpos[np.arange(n) if members is None else np.asarray(members)] = 0
    g, h, unit_h = _as_gh(gh)
    if len(g) != n or len(h) != n:
        raise ValueError("gradient and hessian must have one entry per sample")
    if (lpos == 0).sum() < 2 * params.min_samples_leaf:
        return None
    Gt, Ht, Ct = _kernels.node_totals(lpos, g, h, unit_h, 1)
    Gp, Hp, Cp = _kernels.present_sums(index.present, lpos, g, h, unit_h, 1)
    keep = lpos[index.order] == 0
    order = index.order[keep]
    counts = np.array([keep[a:b].sum() for a, b in zip(index.fptr[:-1], index.fptr[1:])], np.int64)
    ends = np.cumsum(counts).astype(np.int64)
    seg_s = (ends - counts).reshape(-1, 1)
    seg_e = ends.reshape(-1, 1)
    gain, feat, thr, dl = _kernels.best_splits(
        index.rank[keep], g[order], h[order], unit_h, seg_s, seg_e, 1, Gt, Ht, Ct, Gp, Hp, Cp,
        _inv_table(n, float(params.lam)), float(params.lam), float(params.gamma), int(params.min_samples_leaf),
        index.uniq, index.uptr)
    if feat[0] < 0:
        return None
    return SplitCandidate(int(feat[0]), float(thr[0]), bool(dl[0]), float(gain[0]))


def _fit_tree(index: ColumnIndex, g, h, unit_h: bool, params: TrainParams,
              scratch: Optional[_Scratch] = None, inv: Optional[np.ndarray] = None) -> tuple[Tree, np.ndarray]:
    n = index.n_samples
    if scratch is None or scratch.unit_h != unit_h:
        scratch = _Scratch(index, unit_h, params.max_depth)
    if inv is None:
        inv = _inv_table(n, float(params.lam))
    scratch.lpos[:] = 0
    feat, thr, dl, left, right, weight, leaf = _kernels.grow_tree(
        index.X, index.present, index.order, index.rank, index.fptr, index.uniq, index.uptr, g, h, unit_h, inv,
        scratch.lpos, int(params.max_depth), float(params.lam), float(params.gamma),
        int(params.min_samples_leaf), _cap_nodes(n, params.max_depth), *scratch.bufs)
    return Tree(feat, thr, dl, left, right, weight), leaf


def fit_tree(X, gh: GradHess, params: TrainParams = TrainParams(), index: Optional[ColumnIndex] = None) -> Tree:
    index = index if index is not None else ColumnIndex.build(X)
    if index.n_samples == 0:
        raise ValueError("cannot fit a tree on zero samples")
    g, h, unit_h = _as_gh(gh)
    if len(g) != index.n_samples or len(h) != index.n_samples:
        raise ValueError("gradient and hessian must have one entry per sample")
    if (h < 0).any():
        raise ValueError("hessian must be non-negative")
    tree, _ = _fit_tree(index, g, h, unit_h, params)
    return tree


def train(X, y, params: TrainParams = TrainParams(), index: Optional[ColumnIndex] = None) -> BoostedModel:
    """Forward-stagewise boosting of ``params.nrounds`` trees on squared error.

    ``model.train_loss[t]`` is the mean of ``0.5 * residual**2`` after ``t`` trees.
    """
    y = np.ascontiguousarray(y, dtype=float)
    index = index if index is not None else ColumnIndex.build(X)
    if index.n_samples == 0:
        raise ValueError("cannot train on an empty dataset")
    if y.shape != (index.n_samples,):
        raise ValueError(f"targets must have shape ({index.n_samples},), got {y.shape}")
    if not np.isfinite(y).all():
        raise ValueError("targets must be finite")

    pred = np.full(index.n_samples, float(params.base_score))
    losses = [0.5 * float(np.mean((pred - y) ** 2))]
    trees = []
    scratch = _Scratch(index, True, params.max_depth)
    inv = _inv_table(index.n_samples, float(params.lam))
    for t in range(params.nrounds):
        gh = grad_hess(y, pred)
        tree, leaf = _fit_tree(index, gh.g, gh.h, True, params, scratch, inv)
        pred += params.eta * tree.value[leaf]
        trees.append(tree)
        losses.append(0.5 * float(np.mean((pred - y) ** 2)))
        if (t + 1) % 50 == 0:
            log.debug("round %d: train rmse %.6g", t + 1, np.sqrt(2 * losses[-1]))
    model = BoostedModel(trees, params.eta, params.base_score, index.n_features, params)
    model.train_loss = losses
    return model
