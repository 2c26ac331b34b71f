"""Experiment harness: scenario presets, RMSE series, KF-vs-SLF runs and sweeps."""
from __future__ import annotations

import csv
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np

from .gbt import TrainParams
from .kalman import KfModel, kf_run_batch
from .simkit import (PAPER_INIT_BOX, GaussianMeas, GaussPlusExp, GaussTimesExp, Gaussian, ScenarioConfig,
                     TimeVarying, simulate_tracks, stack_tracks)
from .slf import slf_filter_batch, slf_train

log = logging.getLogger(__name__)

PRESETS = ("general", "sweep", "ablation", "special1", "special2", "special3", "qr-grid")
SWEEP_AXES = ("tau", "samples", "nrounds", "max_depth", "eta")

ABLATION_TRAIN_BOX = ((0.0, 5000.0), (0.0, 25.0), (0.0, 5000.0), (0.0, 30.0))
ABLATION_TEST_BOX = ((-5000.0, 0.0), (-25.0, 0.0), (-5000.0, 0.0), (-30.0, 0.0))
QS_GRID = (0.01, 0.1, 1.0, 3.0)
R_GRID = ((3.0, 2.0), (8.0, 5.0), (15.0, 10.0), (30.0, 20.0))
DEFAULT_SWEEP = {"tau": [5, 10, 20, 30], "samples": [250, 500, 1000, 2000], "nrounds": [1, 50, 200],
                 "max_depth": [2, 4, 6, 8], "eta": [0.05, 0.1, 0.3]}


@dataclass(frozen=True)
class Profile:
    train_tracks: int
    test_tracks: int
    nrounds: int
    max_depth: int = 8
    eta: float = 0.05


PROFILES = {
    "paper": Profile(10000, 5000, 500),
    "desk": Profile(2000, 500, 200),
    # fewer, larger boosting steps; used where run time matters more than the last few cm
    "fast": Profile(2000, 500, 40, 8, 0.25),
    "smoke": Profile(100, 50, 10, 4, 0.3),
}


@dataclass
class RmseSeries:
    label: str
    values: np.ndarray  # k = 1..T

    def mean(self, k_lo: int, k_hi: int) -> float:
        return float(np.mean(self.values[k_lo - 1:k_hi]))


@dataclass
class ExperimentSpec:
    preset: str
    train: ScenarioConfig
    test: ScenarioConfig
    params: TrainParams
    tau: int = 20
    kf_qs: float = 1.0
    kf_r: tuple = (30.0, 20.0)
    ablation: bool = False
    k_range: Optional[tuple] = None  # inclusive, 1-based; default (tau, T)
    out_dir: Optional[Path] = None
    plots: bool = False
    label: str = ""

    def __post_init__(self):
        if self.train.seed == self.test.seed:
            raise ValueError("train and test seeds must differ")
        if self.train.T != self.test.T or self.train.dt != self.test.dt:
            raise ValueError("train and test sets must share T and dt")
        if not 2 <= self.tau <= self.train.T:
            raise ValueError(f"tau must lie in [2, T={self.train.T}], got {self.tau}")
        lo, hi = self.window
        if not 1 <= lo <= hi <= self.train.T:
            raise ValueError(f"k_range {self.k_range} outside [1, {self.train.T}]")

    @property
    def window(self) -> tuple:
        return tuple(self.k_range) if self.k_range else (self.tau, self.train.T)

    def kf_model(self) -> KfModel:
        return KfModel.cv(self.kf_qs, *self.kf_r, dt=self.train.dt)


@dataclass
class ExperimentResult:
    series: list
    means: dict
    train_rmse: dict
    spec: ExperimentSpec
    files: list = field(default_factory=list)

    def row(self) -> dict:
        return {s.label: self.means[s.label] for s in self.series}


def derive_seed(seed: int, role: int) -> int:
    return int(np.random.SeedSequence([int(seed) & (2**64 - 1), role]).generate_state(1, np.uint64)[0])


def rmse_series(estimates, truth, label: str = "") -> RmseSeries:
    """Per-step position RMSE over tracks; ``truth`` may be positions or full states."""
    est = np.asarray(estimates, dtype=float)
    tru = np.asarray(truth, dtype=float)
    if tru.ndim == 3 and tru.shape[-1] == 4:
        tru = tru[..., [0, 2]]
    if est.ndim == 2:
        est, tru = est[None], tru[None] if tru.ndim == 2 else tru
    if est.shape != tru.shape or est.shape[-1] != 2:
        raise ValueError(f"estimate shape {est.shape} does not match truth shape {tru.shape}")
    return RmseSeries(label, np.sqrt(np.mean(np.sum((est - tru) ** 2, axis=-1), axis=0)))


def _scenario(preset: str, T: int, n: int, seed: int, box=PAPER_INIT_BOX, qs: float = 1.0,
              r: tuple = (30.0, 20.0)) -> ScenarioConfig:
    proc, meas = Gaussian(qs), GaussianMeas(*r)
    if preset == "special1":
        proc = TimeVarying(0.5)
    elif preset == "special2":
        proc = GaussPlusExp(qs, 1.0)
    elif preset == "special3":
        proc, meas = GaussPlusExp(qs, 1.0), GaussTimesExp(r[0], r[1], 1.0)
    return ScenarioConfig(dt=1.0, T=T, n_tracks=n, init_box=box, proc=proc, meas=meas, seed=seed)


def make_spec(preset: str, seed: int, profile: Union[str, Profile] = "desk", *, tau: int = 20,
              T: Optional[int] = None, train_tracks: Optional[int] = None, test_tracks: Optional[int] = None,
              params: Optional[TrainParams] = None, qs: float = 1.0, r: tuple = (30.0, 20.0),
              k_range: Optional[tuple] = None, out_dir=None, plots: bool = False, label: str = "") -> ExperimentSpec:
    """One experiment of a preset. ``qr-grid`` members are selected through ``qs`` and ``r``."""
    if preset not in PRESETS:
        raise ValueError(f"unknown preset {preset!r}; choose from {PRESETS}")
    prof = PROFILES[profile] if isinstance(profile, str) else profile
    T = T or (50 if preset in ("general", "sweep") else 30)
    n_train = train_tracks or prof.train_tracks
    n_test = test_tracks or prof.test_tracks
    params = params or TrainParams(nrounds=prof.nrounds, max_depth=prof.max_depth, eta=prof.eta)
    s_train, s_test = derive_seed(seed, 0), derive_seed(seed, 1)
    ablation = preset == "ablation"
    box_train = ABLATION_TRAIN_BOX if ablation else PAPER_INIT_BOX
    box_test = ABLATION_TEST_BOX if ablation else PAPER_INIT_BOX
    train = _scenario(preset, T, n_train, s_train, box_train, qs, r)
    test = _scenario(preset, T, n_test, s_test, box_test, qs, r)
    # the KF always assumes plain Gaussian noise at the nominal intensities
    return ExperimentSpec(preset, train, test, params, tau, qs, tuple(r), ablation, k_range,
                          Path(out_dir) if out_dir else None, plots, label or preset)


def _fmt(x: float) -> str:
    return repr(float(x))


def write_series_csv(path: Path, series: Sequence[RmseSeries]) -> None:
    T = len(series[0].values)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["k"] + [f"rmse_{s.label}" for s in series])
        for k in range(T):
            w.writerow([k + 1] + [_fmt(s.values[k]) for s in series])


def read_series_csv(path: Union[str, Path]) -> list:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header, body = rows[0], rows[1:]
    return [RmseSeries(h.removeprefix("rmse_"), np.array([float(r[i]) for r in body]))
            for i, h in enumerate(header) if i > 0]


def write_plot(csv_path: Union[str, Path], svg_path: Union[str, Path], title: str = "") -> None:
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    series = read_series_csv(csv_path)
    fig, ax = plt.subplots(figsize=(6, 4))
    for s in series:
        ax.plot(np.arange(1, len(s.values) + 1), s.values, label=s.label)
    ax.set_xlabel("k (s)")
    ax.set_ylabel("position RMSE (m)")
    ax.set_title(title)
    ax.legend()
    fig.tight_layout()
    # fixed metadata keeps the SVG byte-stable
    fig.savefig(svg_path, format="svg", metadata={"Date": None})
    plt.close(fig)


def _summary(spec: ExperimentSpec, means: dict, train_rmse: dict) -> dict:
    return {
        "preset": spec.preset,
        "label": spec.label,
        "k_range": list(spec.window),
        "tau": spec.tau,
        "T": spec.train.T,
        "train": {"n_tracks": spec.train.n_tracks, "seed": spec.train.seed, "init_box": spec.train.init_box,
                  "proc": {type(spec.train.proc).__name__: asdict(spec.train.proc)},
                  "meas": {type(spec.train.meas).__name__: asdict(spec.train.meas)}},
        "test": {"n_tracks": spec.test.n_tracks, "seed": spec.test.seed, "init_box": spec.test.init_box},
        "kf_model": {"qs": spec.kf_qs, "vx2": spec.kf_r[0], "vy2": spec.kf_r[1]},
        "params": spec.params.to_dict(),
        "train_rmse": train_rmse,
        "mean_rmse": means,
    }


def _check_consistency(csv_path: Path, means: dict, window: tuple) -> None:
    lo, hi = window
    for s in read_series_csv(csv_path):
        again = s.mean(lo, hi)
        if not math.isclose(again, means[s.label], rel_tol=1e-12, abs_tol=1e-12):
            raise RuntimeError(f"{csv_path}: mean of {s.label} is {again}, summary says {means[s.label]}")


def run_experiment(spec: ExperimentSpec) -> ExperimentResult:
    """Simulate, train, filter and score; writes ``rmse.csv`` and ``summary.json`` when ``out_dir`` is set."""
    t0 = time.perf_counter()
    truth_te, meas_te = stack_tracks(simulate_tracks(spec.test))
    train_tracks = simulate_tracks(spec.train)
    pos = truth_te[..., [0, 2]]

    series = [rmse_series(meas_te, pos, "meas"),
              rmse_series(kf_run_batch(meas_te, spec.kf_model(), spec.train.dt), pos, "kf")]
    train_rmse = {}
    variants = [("slf", True)] + ([("slf_norot", False)] if spec.ablation else [])
    for name, rotate in variants:
        model = slf_train(train_tracks, spec.tau, spec.params, rotate=rotate)
        train_rmse[name] = model.train_rmse
        series.append(rmse_series(slf_filter_batch(model, meas_te).estimates, pos, name))
    lo, hi = spec.window
    means = {s.label: s.mean(lo, hi) for s in series}
    log.info("%s: %s (%.1fs)", spec.label, {k: round(v, 4) for k, v in means.items()}, time.perf_counter() - t0)

    result = ExperimentResult(series, means, train_rmse, spec)
    if spec.out_dir is not None:
        out = Path(spec.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        csv_path = out / "rmse.csv"
        write_series_csv(csv_path, series)
        (out / "summary.json").write_text(json.dumps(_summary(spec, means, train_rmse), indent=1) + "\n")
        _check_consistency(csv_path, means, spec.window)
        result.files = [csv_path, out / "summary.json"]
        if spec.plots:
            write_plot(csv_path, out / "rmse.svg", spec.label)
            result.files.append(out / "rmse.svg")
    return result


def _with_axis(spec: ExperimentSpec, axis: str, value) -> ExperimentSpec:
    if axis == "tau":
        return replace(spec, tau=int(value))
    if axis == "samples":
        return replace(spec, train=replace(spec.train, n_tracks=int(value)))
    if axis == "nrounds":
        return replace(spec, params=replace(spec.params, nrounds=int(value)))
    if axis == "max_depth":
        return replace(spec, params=replace(spec.params, max_depth=int(value)))
    if axis == "eta":
        return replace(spec, params=replace(spec.params, eta=float(value)))
    raise ValueError(f"unknown sweep axis {axis!r}; choose from {SWEEP_AXES}")


def sweep_hyperparams(base: ExperimentSpec, axis: str, values: Sequence, out_dir=None) -> list:
    """One mean-RMSE row per value of ``axis``; other settings come from ``base``."""
    if not values:
        raise ValueError("sweep needs at least one value")
    if axis == "tau" and base.k_range is None:
        # compare every window length over the same steps
        base = replace(base, k_range=(max(int(v) for v in values), base.train.T))
    rows = []
    for v in values:
        spec = replace(_with_axis(base, axis, v), out_dir=None, plots=False, label=f"{axis}={v}")
        res = run_experiment(spec)
        rows.append({axis: v, "k_lo": spec.window[0], "k_hi": spec.window[1],
                     **{f"mean_{k}": m for k, m in res.means.items()}})
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "sweep.csv", "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
            w.writeheader()
            for r in rows:
                w.writerow({k: _fmt(v) if isinstance(v, float) else v for k, v in r.items()})
    return rows


def reproduce(preset: str, seed: int, profile: Union[str, Profile] = "desk", out_dir=None, plots: bool = False,
              **overrides) -> list:
    """End-to-end data behind one figure; ``qr-grid`` and ``sweep`` expand to several runs."""
    out = Path(out_dir) if out_dir else None
    if preset == "qr-grid":
        results = []
        for qs in QS_GRID:
            results.append(run_experiment(make_spec(preset, seed, profile, qs=qs, label=f"qs={qs}", plots=plots,
                                                    out_dir=out / f"qs_{qs}" if out else None, **overrides)))
        for r in R_GRID:
            results.append(run_experiment(make_spec(preset, seed, profile, r=r, label=f"R=diag{r}", plots=plots,
                                                    out_dir=out / f"R_{r[0]}_{r[1]}" if out else None,
                                                    **overrides)))
        return results
    if preset == "sweep":
        axis = overrides.pop("axis", "tau")
        values = overrides.pop("values", None) or DEFAULT_SWEEP[axis]
        return sweep_hyperparams(make_spec(preset, seed, profile, **overrides), axis, values, out)
    overrides.pop("axis", None), overrides.pop("values", None)
    return [run_experiment(make_spec(preset, seed, profile, out_dir=out, plots=plots, **overrides))]
