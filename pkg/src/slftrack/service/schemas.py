from __future__ import annotations

from typing import Literal, Optional

from pydantic import BaseModel, Field, field_validator, model_validator

from ..bench import PRESETS, PROFILES, SWEEP_AXES

Preset = Literal[PRESETS]  # type: ignore[valid-type]
Profile = Literal[tuple(PROFILES)]  # type: ignore[valid-type]


class NoiseSpec(BaseModel):
    """Truth-generating noise. ``proc``/``meas`` pick the variant; unused fields are ignored."""

    proc: Literal["gaussian", "time-varying", "gauss+exp"] = "gaussian"
    meas: Literal["gaussian", "gauss*exp"] = "gaussian"
    qs: float = Field(1.0, ge=0)
    slope: float = Field(0.5, ge=0)
    kappa: float = Field(1.0, gt=0)
    vx2: float = Field(30.0, ge=0)
    vy2: float = Field(20.0, ge=0)


class TrainParamsModel(BaseModel):
    nrounds: int = Field(200, ge=0)
    max_depth: int = Field(8, ge=0)
    eta: float = Field(0.05, gt=0, le=1)
    lam: float = Field(1.0, ge=0)
    gamma: float = Field(0.0, ge=0)
    min_samples_leaf: int = Field(1, ge=1)
    base_score: float = 0.0


class TrainParamsPatch(BaseModel):
    """Subset of training parameters laid over a profile's defaults."""

    nrounds: Optional[int] = Field(None, ge=0)
    max_depth: Optional[int] = Field(None, ge=0)
    eta: Optional[float] = Field(None, gt=0, le=1)
    lam: Optional[float] = Field(None, ge=0)
    gamma: Optional[float] = Field(None, ge=0)
    min_samples_leaf: Optional[int] = Field(None, ge=1)
    base_score: Optional[float] = None


class GenerateRequest(BaseModel):
    out: str
    n_tracks: int = Field(100, ge=1)
    T: int = Field(50, ge=2)
    dt: float = Field(1.0, gt=0)
    seed: int
    init_box: Optional[list[tuple[float, float]]] = None
    noise: NoiseSpec = NoiseSpec()

    @field_validator("init_box")
    @classmethod
    def _four_ranges(cls, v):
        if v is not None and len(v) != 4:
            raise ValueError("init_box needs 4 (lower, upper) pairs")
        return v


class GenerateResponse(BaseModel):
    out: str
    n_tracks: int
    n_rows: int


class TrainRequest(BaseModel):
    dataset: str
    bundle: str
    tau: int = Field(20, ge=2)
    rotate: bool = True
    params: TrainParamsModel = TrainParamsModel()


class TrainResponse(BaseModel):
    bundle: str
    n_samples: int
    skipped_windows: int
    train_rmse: float
    fingerprint: str


class FilterRequest(BaseModel):
    """Filter either a dataset file (written to ``out``) or inline tracks (returned)."""

    bundle: str
    dataset: Optional[str] = None
    out: Optional[str] = None
    tracks: Optional[list[list[tuple[float, float]]]] = None

    @model_validator(mode="after")
    def _one_source(self):
        if (self.dataset is None) == (self.tracks is None):
            raise ValueError("give exactly one of dataset or tracks")
        if self.dataset is not None and self.out is None:
            raise ValueError("filtering a dataset needs an output path")
        return self


class FilterResponse(BaseModel):
    out: Optional[str] = None
    n_tracks: int
    estimates: Optional[list[list[tuple[float, float]]]] = None
    fallback_steps: int


class EvaluateRequest(BaseModel):
    dataset: str
    bundle: str
    out: str
    bundle_norot: Optional[str] = None
    kf_qs: float = Field(1.0, ge=0)
    kf_vx2: float = Field(30.0, ge=0)
    kf_vy2: float = Field(20.0, ge=0)
    k_range: Optional[tuple[int, int]] = None


class EvaluateResponse(BaseModel):
    out: str
    k_range: tuple[int, int]
    mean_rmse: dict[str, float]


class RunOverrides(BaseModel):
    tau: int = Field(20, ge=2)
    T: Optional[int] = Field(None, ge=2)
    train_tracks: Optional[int] = Field(None, ge=1)
    test_tracks: Optional[int] = Field(None, ge=1)
    params: TrainParamsPatch = TrainParamsPatch()
    k_range: Optional[tuple[int, int]] = None


class ReproduceRequest(BaseModel):
    preset: Preset
    seed: int
    profile: Profile = "desk"
    out_dir: Optional[str] = None
    plots: bool = False
    overrides: RunOverrides = RunOverrides()


class RunSummary(BaseModel):
    label: str
    mean_rmse: dict[str, float]
    train_rmse: dict[str, float]
    files: list[str]


class ReproduceResponse(BaseModel):
    preset: str
    seed: int
    runs: list[RunSummary] = []
    sweep: list[dict] = []


class SweepRequest(BaseModel):
    axis: Literal[SWEEP_AXES]  # type: ignore[valid-type]
    values: list[float] = Field(min_length=1)
    seed: int
    preset: Preset = "general"
    profile: Profile = "desk"
    out_dir: Optional[str] = None
    overrides: RunOverrides = RunOverrides()


class SweepResponse(BaseModel):
    axis: str
    rows: list[dict]
