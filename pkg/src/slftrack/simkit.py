"""Constant-velocity track simulation.

State ordering is ``[px, vx, py, vy]`` throughout the package; measurements
observe ``[px, py]``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence, Union

import numpy as np

# measurement matrix for the CV state ordering
H = np.array([[1.0, 0.0, 0.0, 0.0], [0.0, 0.0, 1.0, 0.0]])

# uniform initial-state box used by the general case
PAPER_INIT_BOX = ((-5000.0, 5000.0), (-25.0, 25.0), (-5000.0, 5000.0), (-30.0, 30.0))

DATASET_COLUMNS = ("track_id", "k", "zx", "zy", "true_px", "true_vx", "true_py", "true_vy")


class StateVector(NamedTuple):
    px: float
    vx: float
    py: float
    vy: float


class Measurement(NamedTuple):
    zx: float
    zy: float
    k: int


@dataclass(frozen=True)
class Gaussian:
    """Zero-mean white-acceleration process noise of intensity ``qs``."""

    qs: float

    def __post_init__(self):
        if not self.qs >= 0:
            raise ValueError(f"qs must be >= 0, got {self.qs}")


@dataclass(frozen=True)
class TimeVarying:
    """Gaussian process noise whose intensity grows as ``slope * k``."""

    slope: float

    def __post_init__(self):
        if not self.slope >= 0:
            raise ValueError(f"slope must be >= 0, got {self.slope}")


@dataclass(frozen=True)
class GaussPlusExp:
    """Gaussian process noise plus an additive Exp(kappa) draw per component."""

    qs: float
    kappa: float

    def __post_init__(self):
        if not self.qs >= 0:
            raise ValueError(f"qs must be >= 0, got {self.qs}")
        if not self.kappa > 0:
            raise ValueError(f"kappa must be > 0, got {self.kappa}")


ProcessNoiseSpec = Union[Gaussian, TimeVarying, GaussPlusExp]


@dataclass(frozen=True)
class GaussianMeas:
    vx2: float
    vy2: float

    def __post_init__(self):
        if not (self.vx2 >= 0 and self.vy2 >= 0):
            raise ValueError(f"measurement variances must be >= 0, got {self.vx2}, {self.vy2}")


@dataclass(frozen=True)
class GaussTimesExp:
    """Gaussian measurement noise multiplied element-wise by Exp(kappa)."""

    vx2: float
    vy2: float
    kappa: float

    def __post_init__(self):
        if not (self.vx2 >= 0 and self.vy2 >= 0):
            raise ValueError(f"measurement variances must be >= 0, got {self.vx2}, {self.vy2}")
        if not self.kappa > 0:
            raise ValueError(f"kappa must be > 0, got {self.kappa}")


MeasNoiseSpec = Union[GaussianMeas, GaussTimesExp]


@dataclass(frozen=True)
class ScenarioConfig:
    dt: float = 1.0
    T: int = 50
    n_tracks: int = 100
    init_box: tuple = PAPER_INIT_BOX
    proc: ProcessNoiseSpec = field(default_factory=lambda: Gaussian(1.0))
    meas: MeasNoiseSpec = field(default_factory=lambda: GaussianMeas(30.0, 20.0))
    seed: int = 0

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError(f"dt must be > 0, got {self.dt}")
        if self.T < 2:
            raise ValueError(f"T must be >= 2, got {self.T}")
        if self.n_tracks < 1:
            raise ValueError(f"n_tracks must be >= 1, got {self.n_tracks}")
        box = tuple(tuple(float(v) for v in lim) for lim in self.init_box)
        if len(box) != 4 or any(len(lim) != 2 or lim[0] > lim[1] for lim in box):
            raise ValueError(f"init_box must hold 4 (lower, upper) pairs, got {self.init_box}")
        object.__setattr__(self, "init_box", box)


@dataclass
class TrackPair:
    """Aligned truth ``(T, 4)`` and measurement ``(T, 2)`` arrays for one target."""

    truth: np.ndarray
    meas: np.ndarray
    track_id: int = 0

    def __post_init__(self):
        self.truth = np.asarray(self.truth, dtype=float)
        self.meas = np.asarray(self.meas, dtype=float)
        if self.truth.ndim != 2 or self.truth.shape[1] != 4:
            raise ValueError(f"truth must be (T, 4), got {self.truth.shape}")
        if self.meas.shape != (len(self.truth), 2):
            raise ValueError(f"meas must be ({len(self.truth)}, 2), got {self.meas.shape}")

    def __len__(self):
        return len(self.truth)

    @property
    def positions(self) -> np.ndarray:
        return self.truth[:, [0, 2]]

    def states(self) -> list[StateVector]:
        return [StateVector(*map(float, row)) for row in self.truth]

    def measurements(self) -> list[Measurement]:
        return [Measurement(float(x), float(y), k + 1) for k, (x, y) in enumerate(self.meas)]


def transition_matrix(dt: float) -> np.ndarray:
    if not dt > 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    return np.kron(np.eye(2), np.array([[1.0, dt], [0.0, 1.0]]))


def process_cov(qs: float, dt: float) -> np.ndarray:
    if not qs >= 0:
        raise ValueError(f"qs must be >= 0, got {qs}")
    if not dt > 0:
        raise ValueError(f"dt must be > 0, got {dt}")
    block = np.array([[dt**3 / 3.0, dt**2 / 2.0], [dt**2 / 2.0, dt]])
    return qs * np.kron(np.eye(2), block)


def meas_cov(vx2: float, vy2: float) -> np.ndarray:
    if not (vx2 >= 0 and vy2 >= 0):
        raise ValueError(f"measurement variances must be >= 0, got {vx2}, {vy2}")
    return np.diag([float(vx2), float(vy2)])


def track_rng(seed: int, track_id: int) -> np.random.Generator:
    """Independent stream per track so adding tracks never perturbs earlier ones."""
    return np.random.default_rng(np.random.SeedSequence([int(seed) & (2**64 - 1), int(track_id)]))


def _cv_block_factor(qs: float, dt: float) -> np.ndarray:
    # Cholesky factor of the per-axis 2x2 block; the block is PD for dt > 0
    block = np.array([[dt**3 / 3.0, dt**2 / 2.0], [dt**2 / 2.0, dt]])
    return math.sqrt(qs) * np.linalg.cholesky(block)


def _simulate_one(cfg: ScenarioConfig, track_id: int) -> TrackPair:
    rng = track_rng(cfg.seed, track_id)
    T, dt = cfg.T, cfg.dt
    F = transition_matrix(dt)
    lo = np.array([lim[0] for lim in cfg.init_box])
    hi = np.array([lim[1] for lim in cfg.init_box])

    x = lo + (hi - lo) * rng.random(4)
    # fixed draw order: gaussian (T-1, 2 axes, 2), extra (T-1, 4), meas (T, 2), meas extra (T, 2)
    proc_std = rng.standard_normal((T - 1, 2, 2))
    proc_exp = rng.exponential(1.0 / cfg.proc.kappa, (T - 1, 4)) if isinstance(cfg.proc, GaussPlusExp) else None
    meas_std = rng.standard_normal((T, 2))
    meas_exp = rng.exponential(1.0 / cfg.meas.kappa, (T, 2)) if isinstance(cfg.meas, GaussTimesExp) else None

    truth = np.empty((T, 4))
    truth[0] = x
    unit = _cv_block_factor(1.0, dt)
    for k in range(1, T):
        # noise w_k drives x_k -> x_{k+1}; k is the 1-based index of the source step
        if isinstance(cfg.proc, TimeVarying):
            qs = cfg.proc.slope * k
        else:
            qs = cfg.proc.qs
        w = math.sqrt(qs) * (unit @ proc_std[k - 1].T).T.reshape(4)
        x = F @ x + w
        if proc_exp is not None:
            x = x + proc_exp[k - 1]
        truth[k] = x

    v = meas_std * np.sqrt([cfg.meas.vx2, cfg.meas.vy2])
    if meas_exp is not None:
        v = v * meas_exp
    meas = truth[:, [0, 2]] + v
    return TrackPair(truth, meas, track_id)


def simulate_tracks(cfg: ScenarioConfig) -> list[TrackPair]:
    return [_simulate_one(cfg, j) for j in range(cfg.n_tracks)]


def _fmt(x: float) -> str:
    return repr(float(x))


def write_dataset(path: Union[str, Path], tracks: Iterable[TrackPair]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(DATASET_COLUMNS)
        for tp in tracks:
            for k in range(len(tp)):
                w.writerow([tp.track_id, k + 1, _fmt(tp.meas[k, 0]), _fmt(tp.meas[k, 1]),
                            *(_fmt(v) for v in tp.truth[k])])


def read_dataset(path: Union[str, Path]) -> list[TrackPair]:
    rows: dict[int, list] = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(DATASET_COLUMNS) - set(reader.fieldnames or ())
        if missing:
            raise ValueError(f"{path}: missing columns {sorted(missing)}")
        for row in reader:
            rows.setdefault(int(row["track_id"]), []).append(row)
    tracks = []
    for tid, rs in rows.items():
        rs.sort(key=lambda r: int(r["k"]))
        ks = [int(r["k"]) for r in rs]
        if ks != list(range(1, len(rs) + 1)):
            raise ValueError(f"{path}: track {tid} has non-contiguous k values")
        meas = [[float(r["zx"]), float(r["zy"])] for r in rs]
        truth = [[float(r[c]) for c in DATASET_COLUMNS[4:]] for r in rs]
        tracks.append(TrackPair(np.array(truth), np.array(meas), tid))
    return tracks


def stack_tracks(tracks: Sequence[TrackPair]) -> tuple[np.ndarray, np.ndarray]:
    """Stack equal-length tracks into ``(N, T, 4)`` truth and ``(N, T, 2)`` measurements."""
    lengths = {len(tp) for tp in tracks}
    if len(lengths) != 1:
        raise ValueError(f"tracks must share one length, got {sorted(lengths)}")
    return np.stack([tp.truth for tp in tracks]), np.stack([tp.meas for tp in tracks])
