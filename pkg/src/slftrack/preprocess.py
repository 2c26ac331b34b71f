"""Turn measurement tracks into fixed-length, rotation-normalized samples.

Pipeline per track: cut into overlapping windows of length ``tau``, rotate each
window so its first increment points along +x, then for every in-window time
``k`` express the first ``k`` rotated points relative to the current one,
padding the older side with ``MISSING``.

``MISSING`` is NaN inside feature arrays; real features are always finite.
"""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence, Union

import numpy as np

from .simkit import TrackPair

log = logging.getLogger(__name__)

MISSING = float("nan")


class DegenerateBasis(ValueError):
    """First two points of a window coincide, so the rotation angle is undefined."""


class InsufficientLength(ValueError):
    pass


@dataclass
class Window:
    points: np.ndarray
    track_id: int = 0
    start_index: int = 1


@dataclass
class RotatedWindow:
    points: np.ndarray
    alpha: float


@dataclass
class SampleSet:
    """Column-oriented samples: one row per (track, window, in-window time)."""

    features: np.ndarray  # (G, 2(tau-1)), NaN = MISSING
    targets: np.ndarray  # (G, 2) rotated errors
    alpha: np.ndarray
    track_id: np.ndarray
    window_index: np.ndarray  # 1-based
    k: np.ndarray  # in-window time, 1-based
    tau: int
    skipped: int = 0

    def __len__(self):
        return len(self.targets)


def rotate_vec(v, alpha: float) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    a, b = v[..., 0], v[..., 1]
    c, s = np.cos(alpha), np.sin(alpha)
    return np.stack([a * c - b * s, b * c + a * s], axis=-1)


def inverse_rotate_vec(t, alpha: float) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    t1, t2 = t[..., 0], t[..., 1]
    c, s = np.cos(alpha), np.sin(alpha)
    return np.stack([t1 * c + t2 * s, t2 * c - t1 * s], axis=-1)


def rotation_angle(z1, z2) -> float:
    dx = float(z2[0]) - float(z1[0])
    dy = float(z2[1]) - float(z1[1])
    if dx == 0.0 and dy == 0.0:
        raise DegenerateBasis(f"identical basis points {tuple(z1)}")
    return -math.atan2(dy, dx)


def window_tracks(seq, tau: int, track_id: int = 0) -> list[Window]:
    seq = np.asarray(seq, dtype=float)
    if tau < 2:
        raise ValueError(f"tau must be >= 2, got {tau}")
    T = len(seq)
    if T < tau:
        raise InsufficientLength(f"sequence of length {T} is shorter than tau={tau}")
    return [Window(seq[i:i + tau].copy(), track_id, i + 1) for i in range(T - tau + 1)]


def rotate_window(w: Window) -> RotatedWindow:
    pts = np.asarray(w.points, dtype=float)
    alpha = rotation_angle(pts[0], pts[1])
    out = np.empty_like(pts)
    out[0] = pts[0]
    # the basis increment lies on +x by construction; keep its y exactly zero
    out[1] = pts[0] + (np.hypot(*(pts[1] - pts[0])), 0.0)
    for k in range(2, len(pts)):
        out[k] = rotate_vec(pts[k] - pts[k - 1], alpha) + out[k - 1]
    return RotatedWindow(out, alpha)


def extract_features(rw: RotatedWindow, k: int) -> np.ndarray:
    """Relative displacements of the padded window w.r.t. its current point.

    Returns ``2(tau-1)`` values ordered oldest to newest, ``(x, y)`` per slot.
    """
    pts = np.asarray(rw.points, dtype=float)
    tau = len(pts)
    if not 1 <= k <= tau:
        raise ValueError(f"k must lie in [1, {tau}], got {k}")
    padded = np.full((tau, 2), MISSING)
    padded[tau - k:] = pts[:k]
    return (padded[:-1] - padded[-1]).reshape(-1)


def rotate_target(x, z, alpha: float) -> np.ndarray:
    return rotate_vec(np.asarray(x, dtype=float) - np.asarray(z, dtype=float), alpha)


def window_features(points: np.ndarray, alphas: np.ndarray, tau: int, rotate: bool = True) -> np.ndarray:
    """Features for every in-window time of a batch of windows.

    ``points`` is ``(S, tau, 2)`` raw measurements, ``alphas`` is ``(S,)``.
    Returns ``(S, tau, 2(tau-1))``; row ``k-1`` of each window is that
    window's sample at in-window time ``k``. With ``rotate`` the lone
    feature at ``k = 2`` is the rotated basis increment, whose y is exactly 0
    (rounding noise there would otherwise be split on).
    """
    S = len(points)
    c, s = np.cos(alphas)[:, None, None], np.sin(alphas)[:, None, None]
    feats = np.full((S, tau, tau - 1, 2), MISSING)
    for k in range(2, tau + 1):
        # relative displacement of the rotated window equals the rotated raw displacement
        d = points[:, :k - 1] - points[:, k - 1:k]
        rx = d[..., 0:1] * c - d[..., 1:2] * s
        ry = d[..., 1:2] * c + d[..., 0:1] * s
        feats[:, k - 1, tau - k:, 0] = rx[..., 0]
        feats[:, k - 1, tau - k:, 1] = ry[..., 0]
    if rotate:
        feats[:, 1, tau - 2, 1] = 0.0
    return feats.reshape(S, tau, 2 * (tau - 1))


def build_dataset(tracks: Sequence[TrackPair], tau: int, rotate: bool = True) -> SampleSet:
    """Expand tracks into ``N (T - tau + 1) tau`` samples.

    With ``rotate=False`` every window keeps alpha = 0 (the no-rotation ablation).
    Windows whose first two measurements coincide are skipped and counted.
    """
    if tau < 2:
        raise ValueError(f"tau must be >= 2, got {tau}")
    feats, targets, alphas, tids, widx, ks = [], [], [], [], [], []
    skipped = 0
    for tp in tracks:
        T = len(tp)
        if T < tau:
            raise InsufficientLength(f"track {tp.track_id} has length {T} < tau={tau}")
        S = T - tau + 1
        idx = np.arange(S)[:, None] + np.arange(tau)[None, :]
        z = tp.meas[idx]
        x = tp.positions[idx]
        inc = z[:, 1] - z[:, 0]
        ok = (inc[:, 0] != 0.0) | (inc[:, 1] != 0.0)
        if not ok.all():
            bad = np.flatnonzero(~ok) + 1
            log.warning("track %s: skipping windows %s with degenerate rotation basis", tp.track_id, bad.tolist())
            skipped += int((~ok).sum())
        z, x = z[ok], x[ok]
        win = np.arange(1, S + 1)[ok]
        a = -np.arctan2(inc[ok, 1], inc[ok, 0]) if rotate else np.zeros(len(z))
        n = len(z)
        feats.append(window_features(z, a, tau, rotate).reshape(n * tau, -1))
        targets.append(rotate_vec(x - z, a[:, None]).reshape(n * tau, 2))
        alphas.append(np.repeat(a, tau))
        tids.append(np.full(n * tau, tp.track_id))
        widx.append(np.repeat(win, tau))
        ks.append(np.tile(np.arange(1, tau + 1), n))
    if not feats:
        empty = np.empty(0)
        return SampleSet(np.empty((0, 2 * (tau - 1))), np.empty((0, 2)), empty, empty.astype(int),
                         empty.astype(int), empty.astype(int), tau, skipped)
    return SampleSet(np.concatenate(feats), np.concatenate(targets), np.concatenate(alphas),
                     np.concatenate(tids), np.concatenate(widx), np.concatenate(ks), tau, skipped)


def _cell(v: float) -> str:
    return "" if math.isnan(v) else repr(float(v))


def write_samples(path: Union[str, Path], samples: SampleSet) -> None:
    nf = samples.features.shape[1]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["track_id", "window_index", "k", "alpha", *(f"f_{i}" for i in range(1, nf + 1)),
                    "target_x", "target_y"])
        for i in range(len(samples)):
            w.writerow([int(samples.track_id[i]), int(samples.window_index[i]), int(samples.k[i]),
                        repr(float(samples.alpha[i])), *(_cell(v) for v in samples.features[i]),
                        repr(float(samples.targets[i, 0])), repr(float(samples.targets[i, 1]))])


def read_samples(path: Union[str, Path]) -> SampleSet:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        nf = len(header) - 6
        if nf < 2 or nf % 2:
            raise ValueError(f"{path}: unexpected column count {len(header)}")
        rows = list(reader)
    arr = lambda col, typ: np.array([typ(r[col]) for r in rows])  # noqa: E731
    feats = np.array([[float(c) if c != "" else MISSING for c in r[4:4 + nf]] for r in rows]).reshape(-1, nf)
    return SampleSet(
        features=feats,
        targets=np.array([[float(r[-2]), float(r[-1])] for r in rows]).reshape(-1, 2),
        alpha=arr(3, float), track_id=arr(0, int), window_index=arr(1, int), k=arr(2, int),
        tau=nf // 2 + 1,
    )
