"""JSON configuration schema for study commands.

Unknown keys are rejected and errors name the offending field. Seeds are
required: studies have no wall-clock default.
"""
from __future__ import annotations

import json
from pathlib import Path
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .core import Mechanism

SCHEMA_VERSION = "1"

NN_METHODS = ("tsnn", "otsnn", "rownn", "colnn", "drnn", "allrow", "allcol")
SPECTRAL_METHODS = ("usvt", "softimpute")
STUDY_METHODS = NN_METHODS + SPECTRAL_METHODS


class ConfigError(ValueError):
    pass


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class MechanismConfig(_Strict):
    kind: Literal["mcar", "mnar"] = "mcar"
    p: float = Field(0.75, gt=0, le=1)
    p_dead: float = Field(0.2, ge=0, lt=1)
    base: float = Field(0.4, ge=0, le=1)
    bump: float = 0.2

    def build(self) -> Mechanism:
        return Mechanism(self.kind, self.p, self.p_dead, self.base, self.bump)


class GridConfig(_Strict):
    points: int = Field(8, ge=1)
    # percentile range per method; missing methods use the library defaults
    percentiles: dict[str, tuple[float, float]] = Field(default_factory=dict)


class _StudyBase(_Strict):
    n_list: list[int] = Field(default_factory=lambda: [50, 100, 150, 200, 250, 300])
    mechanism: MechanismConfig = Field(default_factory=MechanismConfig)
    lam: float = Field(1.0, gt=0, le=1)
    target_snr: Optional[float] = Field(None, gt=0)
    noise_sd: Optional[float] = Field(None, ge=0)
    replicates: int = Field(10, ge=1)
    seed: int
    folds: int = Field(5, ge=2)
    grid: GridConfig = Field(default_factory=GridConfig)
    # what a training entry may not use while the grid is scored (see tuning.tune)
    tune_leave_out: Literal["none", "target", "cross"] = "cross"

    @field_validator("n_list")
    @classmethod
    def _ascending(cls, v):
        if not v or any(x < 2 for x in v) or sorted(set(v)) != v:
            raise ValueError("n_list must be a nonempty strictly ascending list of sizes >= 2")
        return v

    @model_validator(mode="after")
    def _noise(self):
        if (self.target_snr is None) == (self.noise_sd is None):
            raise ValueError("give exactly one of target_snr and noise_sd")
        return self


class DecayStudyConfig(_StudyBase):
    methods: list[str] = Field(default_factory=lambda: ["tsnn"])
    fallback_mean: bool = True
    usvt_eta: float = Field(2.02, gt=0)
    softimpute_lambdas: list[float] = Field(default_factory=lambda: [float(x) for x in _default_lambdas()])
    softimpute_max_iter: int = Field(100, ge=1)
    softimpute_tol: float = Field(1e-5, gt=0)

    @field_validator("methods")
    @classmethod
    def _known(cls, v):
        for name in v:
            if name not in STUDY_METHODS:
                raise ValueError(f"unknown method {name!r}; expected one of {', '.join(STUDY_METHODS)}")
        if not v:
            raise ValueError("methods must be nonempty")
        return v


class CoverageStudyConfig(_StudyBase):
    level: float = Field(0.95, ge=0, lt=1)
    # intervals need undersmoothed fits, so only the target cell is left out here
    tune_leave_out: Literal["none", "target", "cross"] = "target"
    cap_row: Optional[int] = Field(None, ge=1)
    cap_col: Optional[int] = Field(None, ge=1)


class HoldoutStudyConfig(_Strict):
    input: str
    header: bool = False
    methods: list[str] = Field(default_factory=lambda: ["tsnn", "rownn", "colnn", "drnn", "allrow", "allcol"])
    folds: int = Field(5, ge=2)
    holdout_cols: int = Field(40, ge=1)
    seed: int
    grid: GridConfig = Field(default_factory=lambda: GridConfig(percentiles={
        "tsnn": (8.0, 50.0), "rownn": (25.0, 85.0), "colnn": (25.0, 85.0), "drnn": (25.0, 85.0)}))
    usvt_eta: float = Field(2.02, gt=0)
    softimpute_lambdas: list[float] = Field(default_factory=lambda: [float(x) for x in _default_lambdas()])

    @field_validator("methods")
    @classmethod
    def _known(cls, v):
        for name in v:
            if name not in STUDY_METHODS or name == "otsnn":
                raise ValueError(f"unknown or unsupported holdout method {name!r}")
        return v


STUDY_KINDS = {"decay": DecayStudyConfig, "coverage": CoverageStudyConfig, "holdout": HoldoutStudyConfig}


def _default_lambdas():
    from .baselines import DEFAULT_LAMBDA_GRID

    return DEFAULT_LAMBDA_GRID


def _format(err: ValidationError) -> str:
    parts = []
    for e in err.errors():
        loc = ".".join(str(x) for x in e["loc"]) or "<root>"
        if e["type"] == "extra_forbidden":
            parts.append(f"unknown key '{loc}'")
        elif e["type"] == "missing":
            parts.append(f"missing required field '{loc}'")
        else:
            parts.append(f"{loc}: {e['msg']}")
    return "; ".join(parts)


def parse_config(kind: str, data: dict):
    try:
        model = STUDY_KINDS[kind]
    except KeyError:
        raise ConfigError(f"unknown study kind {kind!r}") from None
    try:
        return model.model_validate(data)
    except ValidationError as err:
        raise ConfigError(_format(err)) from None


def read_config_json(path, kind: str):
    try:
        data = json.loads(Path(path).read_text())
    except json.JSONDecodeError as err:
        raise ConfigError(f"{path}: invalid JSON ({err.msg} at line {err.lineno})") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a JSON object")
    return parse_config(kind, data)
