"""HTTP front end over the library: every CLI subcommand maps to one POST route."""
from __future__ import annotations

import csv
import logging
from dataclasses import replace
from pathlib import Path

import numpy as np
from fastapi import FastAPI, HTTPException

from .. import __version__, bench
from ..gbt import TrainParams
from ..kalman import KfModel, kf_run_batch
from ..preprocess import build_dataset
from ..simkit import (GaussianMeas, GaussPlusExp, GaussTimesExp, Gaussian, PAPER_INIT_BOX, ScenarioConfig,
                      TimeVarying, read_dataset, simulate_tracks, stack_tracks, write_dataset)
from ..slf import DEGENERATE, load_bundle, save_bundle, slf_filter_batch, slf_train_samples
from .schemas import (EvaluateRequest, EvaluateResponse, FilterRequest, FilterResponse, GenerateRequest,
                      GenerateResponse, NoiseSpec, ReproduceRequest, ReproduceResponse, RunOverrides, RunSummary,
                      SweepRequest, SweepResponse, TrainParamsModel, TrainRequest, TrainResponse)

log = logging.getLogger(__name__)

app = FastAPI(title="slftrack", version=__version__)

INT_AXES = {"tau", "samples", "nrounds", "max_depth"}


@app.exception_handler(FileNotFoundError)
async def _missing(request, exc):
    from fastapi.responses import JSONResponse
    return JSONResponse(status_code=404, content={"detail": str(exc)})


@app.exception_handler(ValueError)
async def _invalid(request, exc):
    from fastapi.responses import JSONResponse
    return JSONResponse(status_code=422, content={"detail": str(exc)})


def _noise(n: NoiseSpec):
    proc = {"gaussian": lambda: Gaussian(n.qs), "time-varying": lambda: TimeVarying(n.slope),
            "gauss+exp": lambda: GaussPlusExp(n.qs, n.kappa)}[n.proc]()
    meas = GaussianMeas(n.vx2, n.vy2) if n.meas == "gaussian" else GaussTimesExp(n.vx2, n.vy2, n.kappa)
    return proc, meas


def _params(p: TrainParamsModel) -> TrainParams:
    return TrainParams(**p.model_dump())


def _overrides(o: RunOverrides, profile: str) -> dict:
    d = {"tau": o.tau, "T": o.T, "train_tracks": o.train_tracks, "test_tracks": o.test_tracks,
         "k_range": tuple(o.k_range) if o.k_range else None}
    patch = o.params.model_dump(exclude_none=True)
    if patch:
        prof = bench.PROFILES[profile]
        base = TrainParams(nrounds=prof.nrounds, max_depth=prof.max_depth, eta=prof.eta)
        d["params"] = replace(base, **patch)
    return d


def _summary(res: bench.ExperimentResult) -> RunSummary:
    return RunSummary(label=res.spec.label, mean_rmse=res.means, train_rmse=res.train_rmse,
                      files=[str(f) for f in res.files])


@app.get("/health")
def health():
    return {"status": "ok", "version": __version__}


@app.get("/presets")
def presets():
    return {"presets": list(bench.PRESETS), "profiles": {k: vars(v) for k, v in bench.PROFILES.items()},
            "sweep_axes": list(bench.SWEEP_AXES)}


@app.post("/generate", response_model=GenerateResponse)
def generate(req: GenerateRequest):
    proc, meas = _noise(req.noise)
    cfg = ScenarioConfig(dt=req.dt, T=req.T, n_tracks=req.n_tracks, init_box=req.init_box or PAPER_INIT_BOX,
                         proc=proc, meas=meas, seed=req.seed)
    Path(req.out).parent.mkdir(parents=True, exist_ok=True)
    write_dataset(req.out, simulate_tracks(cfg))
    return GenerateResponse(out=req.out, n_tracks=req.n_tracks, n_rows=req.n_tracks * req.T)


@app.post("/train", response_model=TrainResponse)
def train(req: TrainRequest):
    samples = build_dataset(read_dataset(req.dataset), req.tau, rotate=req.rotate)
    model = slf_train_samples(samples, _params(req.params), rotate=req.rotate)
    save_bundle(model, req.bundle)
    return TrainResponse(bundle=req.bundle, n_samples=len(samples), skipped_windows=samples.skipped,
                         train_rmse=model.train_rmse, fingerprint=model.fingerprint)


@app.post("/filter", response_model=FilterResponse)
def filter_tracks(req: FilterRequest):
    model = load_bundle(req.bundle)
    if req.tracks is not None:
        out = []
        fallback = 0
        for tr in req.tracks:
            res = slf_filter_batch(model, np.asarray(tr, dtype=float)[None])
            out.append([tuple(map(float, p)) for p in res.estimates[0]])
            fallback += int((res.status == DEGENERATE).sum())
        return FilterResponse(n_tracks=len(out), estimates=out, fallback_steps=fallback)

    tracks = read_dataset(req.dataset)
    _, meas = stack_tracks(tracks)
    res = slf_filter_batch(model, meas)
    Path(req.out).parent.mkdir(parents=True, exist_ok=True)
    with open(req.out, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["track_id", "k", "est_x", "est_y", "status"])
        for j, tp in enumerate(tracks):
            for k in range(meas.shape[1]):
                e = res.estimates[j, k]
                w.writerow([tp.track_id, k + 1, repr(float(e[0])), repr(float(e[1])), int(res.status[j, k])])
    return FilterResponse(out=req.out, n_tracks=len(tracks), fallback_steps=int((res.status == DEGENERATE).sum()))


@app.post("/evaluate", response_model=EvaluateResponse)
def evaluate(req: EvaluateRequest):
    model = load_bundle(req.bundle)
    truth, meas = stack_tracks(read_dataset(req.dataset))
    T = meas.shape[1]
    series = [bench.rmse_series(meas, truth, "meas"),
              bench.rmse_series(kf_run_batch(meas, KfModel.cv(req.kf_qs, req.kf_vx2, req.kf_vy2), 1.0), truth,
                                "kf"),
              bench.rmse_series(slf_filter_batch(model, meas).estimates, truth, "slf")]
    if req.bundle_norot:
        series.append(bench.rmse_series(slf_filter_batch(load_bundle(req.bundle_norot), meas).estimates, truth,
                                        "slf_norot"))
    lo, hi = req.k_range or (min(model.tau, T), T)
    if not 1 <= lo <= hi <= T:
        raise ValueError(f"k_range ({lo}, {hi}) outside [1, {T}]")
    Path(req.out).parent.mkdir(parents=True, exist_ok=True)
    bench.write_series_csv(Path(req.out), series)
    return EvaluateResponse(out=req.out, k_range=(lo, hi), mean_rmse={s.label: s.mean(lo, hi) for s in series})


@app.post("/reproduce", response_model=ReproduceResponse)
def reproduce(req: ReproduceRequest):
    out = bench.reproduce(req.preset, req.seed, req.profile, req.out_dir, req.plots,
                          **_overrides(req.overrides, req.profile))
    if req.preset == "sweep":
        return ReproduceResponse(preset=req.preset, seed=req.seed, sweep=out)
    return ReproduceResponse(preset=req.preset, seed=req.seed, runs=[_summary(r) for r in out])


@app.post("/sweep", response_model=SweepResponse)
def sweep(req: SweepRequest):
    if req.preset in ("sweep", "qr-grid"):
        raise HTTPException(422, f"preset {req.preset!r} cannot be the base of a sweep")
    values = [int(v) if req.axis in INT_AXES else float(v) for v in req.values]
    if req.axis in INT_AXES and any(v != int(v) for v in req.values):
        raise HTTPException(422, f"axis {req.axis} takes integer values")
    base = bench.make_spec(req.preset, req.seed, req.profile, **_overrides(req.overrides, req.profile))
    rows = bench.sweep_hyperparams(base, req.axis, values, req.out_dir)
    return SweepResponse(axis=req.axis, rows=rows)
