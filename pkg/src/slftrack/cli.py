"""Command-line client for the slftrack service.

Requests go to ``--url`` (or ``$SLFTRACK_URL``) when set; otherwise the
service app runs in-process.
"""
from __future__ import annotations

import json
import logging
import warnings
from pathlib import Path

import click

from .config import default_map, load_config

PRESETS = ("general", "sweep", "ablation", "special1", "special2", "special3", "qr-grid")
PROFILES = ("paper", "desk", "fast", "smoke")
AXES = ("tau", "samples", "nrounds", "max_depth", "eta")


class Client:
    def __init__(self, url=None):
        self.url = url.rstrip("/") if url else None
        self._local = None

    def post(self, route: str, payload: dict) -> dict:
        if self.url:
            import httpx
            try:
                resp = httpx.post(self.url + route, json=payload, timeout=None)
            except httpx.HTTPError as e:
                raise click.ClickException(f"{self.url}{route}: {e}")
        else:
            if self._local is None:
                warnings.filterwarnings("ignore", message="Using `httpx` with")
                from fastapi.testclient import TestClient
                from .service import app
                self._local = TestClient(app)
            resp = self._local.post(route, json=payload)
        if resp.status_code != 200:
            detail = resp.json().get("detail", resp.text)
            raise click.ClickException(f"{route} failed ({resp.status_code}): {detail}")
        return resp.json()


def _abs(p):
    # the service may run elsewhere, but paths are resolved on this side
    return str(Path(p).resolve()) if p is not None else None


def _emit(result: dict):
    click.echo(json.dumps(result, indent=1))


def _param_patch(**kw) -> dict:
    return {k: v for k, v in kw.items() if v is not None}


def train_param_options(required_defaults: bool):
    """Boosting options; with ``required_defaults`` False they only override a profile."""
    d = (lambda v: v) if required_defaults else (lambda v: None)

    def wrap(f):
        for opt in reversed([
            click.option("--nrounds", type=int, default=d(200), show_default=required_defaults,
                         help="Number of trees per coordinate."),
            click.option("--max-depth", type=int, default=d(8), show_default=required_defaults),
            click.option("--eta", type=float, default=d(0.05), show_default=required_defaults,
                         help="Shrinkage."),
            click.option("--lam", type=float, default=d(1.0), show_default=required_defaults,
                         help="L2 leaf penalty."),
            click.option("--gamma", type=float, default=d(0.0), show_default=required_defaults,
                         help="Per-leaf penalty."),
            click.option("--min-samples-leaf", type=int, default=d(1), show_default=required_defaults),
            click.option("--base-score", type=float, default=d(0.0), show_default=required_defaults),
        ]):
            f = opt(f)
        return f
    return wrap


def run_options(f):
    for opt in reversed([
        click.option("--profile", type=click.Choice(PROFILES), default="desk", show_default=True,
                     help="Scale of the run (tracks and boosting defaults)."),
        click.option("--tau", type=int, default=20, show_default=True, help="Sliding window length."),
        click.option("--T", "T", type=int, default=None, help="Track length (preset default if omitted)."),
        click.option("--train-tracks", type=int, default=None),
        click.option("--test-tracks", type=int, default=None),
        click.option("--k-range", type=(int, int), default=None, help="Inclusive k window for mean RMSE."),
        click.option("--out-dir", type=click.Path(file_okay=False), default=None),
    ]):
        f = opt(f)
    return train_param_options(False)(f)


def _overrides(kw) -> dict:
    return {"tau": kw["tau"], "T": kw["T"], "train_tracks": kw["train_tracks"], "test_tracks": kw["test_tracks"],
            "k_range": list(kw["k_range"]) if kw["k_range"] else None,
            "params": _param_patch(**{k: kw[k] for k in ("nrounds", "max_depth", "eta", "lam", "gamma",
                                                          "min_samples_leaf", "base_score")})}


@click.group()
@click.option("--url", envvar="SLFTRACK_URL", default=None, help="Service URL; in-process when omitted.")
@click.option("--config", "config_path", type=click.Path(exists=True, dir_okay=False), default=None,
              help="YAML file supplying defaults for any option.")
@click.option("-v", "--verbose", count=True)
@click.pass_context
def main(ctx, url, config_path, verbose):
    """Learned tracking filter: simulate, train, filter, evaluate and reproduce experiments."""
    logging.basicConfig(level=logging.WARNING - 10 * min(verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    if config_path:
        ctx.default_map = default_map(load_config(config_path), main.commands)
    ctx.obj = Client(url)


@main.command()
@click.option("--out", required=True, type=click.Path(dir_okay=False), help="Dataset CSV to write.")
@click.option("--seed", type=int, required=True)
@click.option("--n-tracks", type=int, default=100, show_default=True)
@click.option("--T", "T", type=int, default=50, show_default=True)
@click.option("--dt", type=float, default=1.0, show_default=True)
@click.option("--proc", type=click.Choice(["gaussian", "time-varying", "gauss+exp"]), default="gaussian",
              show_default=True)
@click.option("--meas", type=click.Choice(["gaussian", "gauss*exp"]), default="gaussian", show_default=True)
@click.option("--qs", type=float, default=1.0, show_default=True)
@click.option("--slope", type=float, default=0.5, show_default=True, help="qs per step for time-varying noise.")
@click.option("--kappa", type=float, default=1.0, show_default=True)
@click.option("--vx2", type=float, default=30.0, show_default=True)
@click.option("--vy2", type=float, default=20.0, show_default=True)
@click.option("--init-box", type=(float, float), multiple=True,
              help="Four (lower, upper) pairs for px, vx, py, vy.")
@click.pass_obj
def generate(client, out, seed, n_tracks, T, dt, proc, meas, qs, slope, kappa, vx2, vy2, init_box):
    """Simulate tracks and write a dataset CSV."""
    payload = {"out": _abs(out), "seed": seed, "n_tracks": n_tracks, "T": T, "dt": dt,
               "init_box": [list(b) for b in init_box] or None,
               "noise": {"proc": proc, "meas": meas, "qs": qs, "slope": slope, "kappa": kappa, "vx2": vx2,
                         "vy2": vy2}}
    _emit(client.post("/generate", payload))


@main.command()
@click.option("--dataset", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--bundle", required=True, type=click.Path(file_okay=False), help="Model bundle directory.")
@click.option("--tau", type=int, default=20, show_default=True)
@click.option("--rotate/--no-rotate", default=True, show_default=True)
@train_param_options(True)
@click.pass_obj
def train(client, dataset, bundle, tau, rotate, **params):
    """Train a model bundle from a dataset CSV."""
    _emit(client.post("/train", {"dataset": _abs(dataset), "bundle": _abs(bundle), "tau": tau, "rotate": rotate,
                                 "params": params}))


@main.command("filter")
@click.option("--bundle", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--dataset", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", required=True, type=click.Path(dir_okay=False), help="Estimates CSV to write.")
@click.pass_obj
def filter_cmd(client, bundle, dataset, out):
    """Run the trained filter over every track of a dataset."""
    _emit(client.post("/filter", {"bundle": _abs(bundle), "dataset": _abs(dataset), "out": _abs(out)}))


@main.command()
@click.option("--dataset", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--bundle", required=True, type=click.Path(exists=True, file_okay=False))
@click.option("--out", required=True, type=click.Path(dir_okay=False), help="RMSE series CSV to write.")
@click.option("--bundle-norot", type=click.Path(exists=True, file_okay=False), default=None,
              help="Bundle trained without rotation; adds an rmse_slf_norot column.")
@click.option("--kf-qs", type=float, default=1.0, show_default=True)
@click.option("--kf-vx2", type=float, default=30.0, show_default=True)
@click.option("--kf-vy2", type=float, default=20.0, show_default=True)
@click.option("--k-range", type=(int, int), default=None)
@click.pass_obj
def evaluate(client, dataset, bundle, out, bundle_norot, kf_qs, kf_vx2, kf_vy2, k_range):
    """Per-step RMSE of measurements, the Kalman baseline and the trained filter."""
    _emit(client.post("/evaluate", {"dataset": _abs(dataset), "bundle": _abs(bundle), "out": _abs(out),
                                    "bundle_norot": _abs(bundle_norot), "kf_qs": kf_qs, "kf_vx2": kf_vx2,
                                    "kf_vy2": kf_vy2, "k_range": list(k_range) if k_range else None}))


@main.command()
@click.argument("preset", type=click.Choice(PRESETS))
@click.option("--seed", type=int, required=True)
@click.option("--plots/--no-plots", default=False, help="Also write SVG plots of every series.")
@run_options
@click.pass_obj
def reproduce(client, preset, seed, plots, profile, out_dir, **kw):
    """Run a preset experiment end to end."""
    _emit(client.post("/reproduce", {"preset": preset, "seed": seed, "profile": profile, "plots": plots,
                                     "out_dir": _abs(out_dir), "overrides": _overrides(kw)}))


@main.command()
@click.option("--axis", type=click.Choice(AXES), required=True)
@click.option("--values", required=True, help="Comma-separated values, e.g. 5,10,20,30.")
@click.option("--seed", type=int, required=True)
@click.option("--preset", type=click.Choice([p for p in PRESETS if p not in ("sweep", "qr-grid")]),
              default="general", show_default=True)
@run_options
@click.pass_obj
def sweep(client, axis, values, seed, preset, profile, out_dir, **kw):
    """Mean RMSE for each value of one hyperparameter."""
    vals = [float(v) for v in str(values).split(",") if v.strip()] if not isinstance(values, list) else values
    _emit(client.post("/sweep", {"axis": axis, "values": vals, "seed": seed, "preset": preset, "profile": profile,
                                 "out_dir": _abs(out_dir), "overrides": _overrides(kw)}))


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", type=int, default=8000, show_default=True)
def serve(host, port):
    """Run the HTTP service."""
    import uvicorn
    uvicorn.run("slftrack.service:app", host=host, port=port)


if __name__ == "__main__":
    main()
