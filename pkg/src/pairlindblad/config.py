"""Experiment configuration files (YAML) and their validation."""

from __future__ import annotations

import hashlib
import json
import math
from typing import Annotated, Literal, Optional, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, TypeAdapter, ValidationError, field_validator, model_validator

from .meanfield import ModelKind, ModelSpec


class ConfigError(ValueError):
    """Invalid experiment configuration; ``errors`` lists every violation."""

    def __init__(self, errors: list[dict]):
        self.errors = errors
        super().__init__("; ".join(f"{e['path'] or '<root>'}: {e['message']}" for e in errors))


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


PositiveFloat = Annotated[float, Field(gt=0, allow_inf_nan=False)]
NonNegFloat = Annotated[float, Field(ge=0, allow_inf_nan=False)]
BlochTriple = Annotated[list[float], Field(min_length=3, max_length=3)]


def _in_ball(u: list[float]) -> list[float]:
    if math.sqrt(sum(c * c for c in u)) > 1 + 1e-10:
        raise ValueError("Bloch vector must satisfy |u| <= 1")
    return u


class ModelConfig(_Strict):
    kind: ModelKind
    gamma: PositiveFloat = 1.0
    theta: Optional[float] = None

    @model_validator(mode="after")
    def _theta(self):
        if self.kind is ModelKind.PAIR_DEPHASING:
            if self.theta is None:
                raise ValueError("theta is required for PairDephasing")
            if abs(math.sin(self.theta)) < 1e-12:
                raise ValueError("sin(theta) must be nonzero")
        elif self.theta is not None:
            raise ValueError(f"theta is only used by PairDephasing, not {self.kind.value}")
        return self

    def spec(self) -> ModelSpec:
        return ModelSpec(self.kind, self.gamma, self.theta)


class _Output(_Strict):
    output_path: str = "out.csv"
    format: Literal["csv", "json"] = "csv"


class MeanfieldTrajectoryConfig(_Output):
    experiment: Literal["MeanfieldTrajectory"] = "MeanfieldTrajectory"
    model: ModelConfig
    u0: BlochTriple
    t_end: NonNegFloat = 10.0
    dt: PositiveFloat = 1e-3
    samples: Annotated[int, Field(ge=1)] = 101

    _u0 = field_validator("u0")(_in_ball)


class DephasingRateScanConfig(_Output):
    experiment: Literal["DephasingRateScan"] = "DephasingRateScan"
    theta: float = math.pi / 4
    gamma: PositiveFloat = 1.0
    uz_values: Annotated[list[Annotated[float, Field(ge=-1, le=1)]], Field(min_length=1)] = [-1.0, -0.5, 0.0, 0.5, 1.0]
    transverse: Annotated[float, Field(gt=0, lt=1)] = 1e-4
    t_end: PositiveFloat = 10.0
    dt: PositiveFloat = 1e-3

    @field_validator("theta")
    @classmethod
    def _nontrivial(cls, theta):
        if abs(math.sin(theta)) < 1e-12:
            raise ValueError("sin(theta) must be nonzero")
        return theta


class HemisphereScanConfig(_Output):
    experiment: Literal["HemisphereScan"] = "HemisphereScan"
    initial_states: Annotated[list[BlochTriple], Field(min_length=1)] = [[0.0, 0.0, 0.0], [0.6, 0.0, -0.2], [0.3, 0.4, 0.0]]
    t_end: NonNegFloat = 20.0
    dt: PositiveFloat = 1e-3
    samples: Annotated[int, Field(ge=1)] = 101

    @field_validator("initial_states")
    @classmethod
    def _states(cls, states):
        for u in states:
            _in_ball(u)
        return states


def _even_sizes(sizes: list[int]) -> list[int]:
    bad = [n for n in sizes if n < 2 or n % 2]
    if bad:
        raise ValueError(f"N must be even and >= 2, got {bad}")
    return sizes


class MasterCurveConfig(_Output):
    experiment: Literal["MasterCurve"] = "MasterCurve"
    sizes: Annotated[list[int], Field(min_length=1)] = [16, 64, 256]
    gamma: PositiveFloat = 1.0
    t_end: NonNegFloat = 10.0
    samples: Annotated[int, Field(ge=1)] = 201

    _sizes = field_validator("sizes")(_even_sizes)


class GillespieCurveConfig(_Output):
    experiment: Literal["GillespieCurve"] = "GillespieCurve"
    N: Annotated[int, Field(ge=2)] = 1000
    gamma: PositiveFloat = 1.0
    runs: Annotated[int, Field(ge=1)] = 10_000
    seed: Annotated[int, Field(ge=0, lt=2**64)] = 0
    m0: Optional[Annotated[int, Field(ge=0)]] = None
    sample_times: Annotated[list[NonNegFloat], Field(min_length=1)] = [0.5, 1.0, 2.0, 5.0]
    threads: Annotated[int, Field(ge=1)] = 1

    @field_validator("N")
    @classmethod
    def _even(cls, n):
        return _even_sizes([n])[0]

    @field_validator("sample_times")
    @classmethod
    def _ascending(cls, times):
        if any(b < a for a, b in zip(times, times[1:])):
            raise ValueError("sample_times must be ascending")
        return times

    @model_validator(mode="after")
    def _m0(self):
        if self.m0 is not None and self.m0 > self.N:
            raise ValueError(f"m0 = {self.m0} exceeds N = {self.N}")
        return self


class ContinuumInitial(_Strict):
    kind: Literal["point", "beta"] = "point"
    x0: Annotated[float, Field(ge=0, le=1)] = 1.0
    a: PositiveFloat = 4.0
    b: PositiveFloat = 4.0


class ContinuumCurveConfig(_Output):
    experiment: Literal["ContinuumCurve"] = "ContinuumCurve"
    initial: ContinuumInitial = ContinuumInitial()
    grid_points: Annotated[int, Field(ge=2)] = 2048
    t_end: NonNegFloat = 10.0
    samples: Annotated[int, Field(ge=1)] = 201


class FactorizationStudyConfig(_Output):
    experiment: Literal["FactorizationStudy"] = "FactorizationStudy"
    model: ModelConfig = ModelConfig(kind=ModelKind.PAIR_DECAY)
    u0: BlochTriple = [0.6, 0.0, -0.6]
    sizes: Annotated[list[Annotated[int, Field(ge=2, le=8)]], Field(min_length=1)] = [4, 6, 8]
    t: NonNegFloat = 1.0
    dt: PositiveFloat = 1e-3

    _u0 = field_validator("u0")(_in_ball)


class VerifySuiteConfig(_Output):
    experiment: Literal["VerifySuite"] = "VerifySuite"


ExperimentConfig = Annotated[
    Union[
        MeanfieldTrajectoryConfig,
        DephasingRateScanConfig,
        HemisphereScanConfig,
        MasterCurveConfig,
        GillespieCurveConfig,
        ContinuumCurveConfig,
        FactorizationStudyConfig,
        VerifySuiteConfig,
    ],
    Field(discriminator="experiment"),
]
EXPERIMENTS = (
    "MeanfieldTrajectory",
    "DephasingRateScan",
    "HemisphereScan",
    "MasterCurve",
    "GillespieCurve",
    "ContinuumCurve",
    "FactorizationStudy",
    "VerifySuite",
)
_adapter = TypeAdapter(ExperimentConfig)


def _errors(exc: ValidationError, tag: str | None) -> list[dict]:
    out = []
    for err in exc.errors():
        loc = list(err["loc"])
        if loc and loc[0] == tag:
            loc = loc[1:]
        out.append({"path": ".".join(str(p) for p in loc), "message": err["msg"]})
    return out


def parse_mapping(config_text: bytes | str) -> dict:
    if isinstance(config_text, bytes):
        try:
            config_text = config_text.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ConfigError([{"path": "", "message": f"not UTF-8: {exc}"}]) from None
    if not config_text.strip():
        raise ConfigError([{"path": "", "message": "empty configuration"}])
    try:
        data = yaml.safe_load(config_text)
    except yaml.YAMLError as exc:
        raise ConfigError([{"path": "", "message": f"parse error: {exc}"}]) from None
    if not isinstance(data, dict):
        raise ConfigError([{"path": "", "message": "configuration must be a mapping"}])
    return data


def validate(config_text: bytes | str, experiment: str | None = None, overrides: dict | None = None):
    """Parse and validate a configuration, reporting every violation at once.

    ``experiment`` fills in (or must match) the ``experiment`` field;
    ``overrides`` replaces top-level keys before validation.
    """
    data = parse_mapping(config_text)
    if experiment is not None:
        declared = data.setdefault("experiment", experiment)
        if declared != experiment:
            raise ConfigError([{"path": "experiment", "message": f"config declares {declared!r} but {experiment!r} was requested"}])
    data.update(overrides or {})
    if data.get("experiment") not in EXPERIMENTS:
        raise ConfigError([{"path": "experiment", "message": f"must be one of {', '.join(EXPERIMENTS)}"}])
    try:
        return _adapter.validate_python(data)
    except ValidationError as exc:
        raise ConfigError(_errors(exc, data.get("experiment"))) from None


def config_hash(cfg) -> str:
    canonical = json.dumps(cfg.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()
