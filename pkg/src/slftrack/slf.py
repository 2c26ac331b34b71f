"""Train the learned filter and run it online over measurement tracks.

Estimation for a track at step k: take the trailing window of up to ``tau``
measurements, rotate it so its first increment points along +x, predict the
rotated error with one boosted model per coordinate, rotate the prediction
back and add it to the current measurement.
"""
from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Sequence, Union

import numpy as np

from . import gbt
from .gbt import BoostedModel, ColumnIndex, TrainParams
from .preprocess import MISSING, SampleSet, build_dataset, inverse_rotate_vec
from .simkit import TrackPair

log = logging.getLogger(__name__)

BUNDLE_FORMAT = "slftrack-bundle/1"

# per-step status codes of an online run
OK, RAW_FIRST, DEGENERATE = 0, 1, 2


class InsufficientHistory(ValueError):
    pass


@dataclass
class SlfModel:
    model_x: BoostedModel
    model_y: BoostedModel
    tau: int
    train_params: TrainParams
    rotate: bool = True
    train_rmse: float = float("nan")
    n_samples: int = 0
    fingerprint: str = ""
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        n = 2 * (self.tau - 1)
        if self.model_x.n_features != n or self.model_y.n_features != n:
            raise ValueError(f"both models need {n} features for tau={self.tau}")

    @property
    def n_features(self) -> int:
        return 2 * (self.tau - 1)

    def predict_rotated(self, features: np.ndarray) -> np.ndarray:
        return np.stack([self.model_x.predict(features), self.model_y.predict(features)], axis=-1)

    def manifest(self) -> dict:
        return {
            "format": BUNDLE_FORMAT,
            "tau": self.tau,
            "rotate": self.rotate,
            "params": self.train_params.to_dict(),
            "train_rmse": self.train_rmse,
            "n_samples": self.n_samples,
            "dataset_fingerprint": self.fingerprint,
            **self.extra,
        }


class Estimate(NamedTuple):
    x: float
    y: float
    fallback: bool  # True when the raw measurement was returned


class FilterResult(NamedTuple):
    estimates: np.ndarray  # (N, T, 2)
    status: np.ndarray  # (N, T) of OK / RAW_FIRST / DEGENERATE


def dataset_fingerprint(samples: SampleSet) -> str:
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(samples.features).tobytes())
    h.update(np.ascontiguousarray(samples.targets).tobytes())
    return h.hexdigest()[:16]


def slf_train_samples(samples: SampleSet, params: TrainParams, rotate: bool = True) -> SlfModel:
    if len(samples) == 0:
        raise ValueError("cannot train on an empty sample set")
    index = ColumnIndex.build(samples.features)
    mx = gbt.train(None, samples.targets[:, 0], params, index=index)
    my = gbt.train(None, samples.targets[:, 1], params, index=index)
    # both losses are mean 0.5*r^2 per coordinate, so the pooled squared norm is 2*(lx + ly)
    rmse = float(np.sqrt(2.0 * (mx.train_loss[-1] + my.train_loss[-1])))
    log.info("trained on %d samples: rmse %.4f", len(samples), rmse)
    return SlfModel(mx, my, samples.tau, params, rotate, rmse, len(samples), dataset_fingerprint(samples))


def slf_train(tracks: Sequence[TrackPair], tau: int, params: TrainParams = TrainParams(),
              rotate: bool = True) -> SlfModel:
    """Build the sample set and fit one boosted model per rotated-error coordinate."""
    return slf_train_samples(build_dataset(tracks, tau, rotate=rotate), params, rotate)


def online_features(meas: np.ndarray, tau: int, rotate: bool = True):
    """Features of every step of ``(N, T, 2)`` tracks from their trailing windows.

    Returns ``(features (N, T, 2(tau-1)), alpha (N, T), status (N, T))``. Rows
    with a non-OK status hold all-MISSING features and alpha 0.
    """
    meas = np.asarray(meas, dtype=float)
    N, T, _ = meas.shape
    feats = np.full((N, T, tau - 1, 2), MISSING)
    alpha = np.zeros((N, T))
    status = np.full((N, T), OK, np.int8)
    status[:, 0] = RAW_FIRST
    for k in range(2, T + 1):
        start = max(0, k - tau)
        pts = meas[:, start:k]
        m = k - start
        inc = pts[:, 1] - pts[:, 0]
        bad = (inc[:, 0] == 0.0) & (inc[:, 1] == 0.0)
        a = np.where(bad, 0.0, -np.arctan2(inc[:, 1], inc[:, 0])) if rotate else np.zeros(N)
        c, s = np.cos(a)[:, None], np.sin(a)[:, None]
        d = pts[:, :m - 1] - pts[:, m - 1:m]
        feats[:, k - 1, tau - m:, 0] = d[..., 0] * c - d[..., 1] * s
        feats[:, k - 1, tau - m:, 1] = d[..., 1] * c + d[..., 0] * s
        if rotate and m == 2:
            feats[:, k - 1, tau - 2, 1] = 0.0  # rotated basis increment, as in training
        feats[bad, k - 1] = MISSING
        alpha[:, k - 1] = a
        status[bad, k - 1] = DEGENERATE
    return feats.reshape(N, T, 2 * (tau - 1)), alpha, status


def slf_filter_batch(model: SlfModel, meas: np.ndarray) -> FilterResult:
    """Online estimates for ``(N, T, 2)`` measurement tracks (causal, per step)."""
    meas = np.asarray(meas, dtype=float)
    if meas.ndim != 3 or meas.shape[2] != 2:
        raise ValueError(f"measurements must be (N, T, 2), got {meas.shape}")
    if meas.shape[1] < 2:
        raise InsufficientHistory("filtering needs at least 2 measurements per track")
    N, T, _ = meas.shape
    feats, alpha, status = online_features(meas, model.tau, model.rotate)
    est = meas.copy()
    ok = status == OK
    if ok.any():
        r = model.predict_rotated(feats[ok])
        est[ok] = meas[ok] + inverse_rotate_vec(r, alpha[ok])
    n_bad = int((status == DEGENERATE).sum())
    if n_bad:
        log.warning("%d steps with a degenerate rotation basis fell back to raw measurements", n_bad)
    return FilterResult(est, status)


def slf_filter_track(model: SlfModel, meas) -> np.ndarray:
    """``(T, 2)`` estimates for one track; step 1 is the raw measurement."""
    z = np.asarray([tuple(m)[:2] for m in meas], dtype=float)
    return slf_filter_batch(model, z[None])[0][0]


def slf_estimate_point(model: SlfModel, recent) -> Estimate:
    """Estimate the current position from the most recent measurements (last = current)."""
    z = np.asarray([tuple(m)[:2] for m in recent], dtype=float)
    if len(z) < 2:
        raise InsufficientHistory("need at least 2 measurements for a rotation basis")
    z = z[-model.tau:]
    feats, alpha, status = online_features(z[None], model.tau, model.rotate)
    if status[0, -1] != OK:
        log.warning("degenerate rotation basis; returning the raw measurement")
        return Estimate(float(z[-1, 0]), float(z[-1, 1]), True)
    r = model.predict_rotated(feats[0, -1:])
    x = z[-1] + inverse_rotate_vec(r[0], alpha[0, -1])
    return Estimate(float(x[0]), float(x[1]), False)


def save_bundle(model: SlfModel, directory: Union[str, Path]) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    gbt.dump(model.model_x, d / "model_x.json")
    gbt.dump(model.model_y, d / "model_y.json")
    (d / "manifest.json").write_text(json.dumps(model.manifest(), indent=1, sort_keys=True) + "\n")
    return d


def load_bundle(directory: Union[str, Path]) -> SlfModel:
    d = Path(directory)
    man = json.loads((d / "manifest.json").read_text())
    if man.get("format") != BUNDLE_FORMAT:
        raise ValueError(f"{d}: unsupported bundle format {man.get('format')!r}")
    known = {"format", "tau", "rotate", "params", "train_rmse", "n_samples", "dataset_fingerprint"}
    return SlfModel(gbt.load(d / "model_x.json"), gbt.load(d / "model_y.json"), int(man["tau"]),
                    TrainParams.from_dict(man["params"]), bool(man["rotate"]), float(man["train_rmse"]),
                    int(man["n_samples"]), man["dataset_fingerprint"],
                    {k: v for k, v in man.items() if k not in known})
