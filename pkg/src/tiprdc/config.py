"""Run configuration files (YAML or JSON) and their resolution into core objects."""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .baselines import BaselineConfig
from .datasets import CsvSchema, LabeledDataset, SyntheticSpec, generate_synthetic, load_csv, preset
from .evaluation import DEFAULT_AUDIT_ARCHITECTURES, DEFAULT_LAMBDAS, EvalSpec
from .nn import ConfigError
from .rng import derive_seed
from .training import TrainConfig


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class CsvSection(_Strict):
    path: str
    features: List[str]
    u: str
    y: Optional[str] = None
    u_classes: Optional[int] = None
    y_classes: Optional[int] = None
    test_fraction: float = 0.2


class DatasetSection(_Strict):
    preset: Optional[str] = None
    synthetic: Optional[Dict[str, Any]] = None
    csv: Optional[CsvSection] = None

    @model_validator(mode="after")
    def _one_source(self):
        given = [k for k in ("preset", "synthetic", "csv") if getattr(self, k) is not None]
        if len(given) > 1:
            raise ValueError(f"choose one dataset source, got {given}")
        if not given:
            self.preset = "family-A"
        return self


class TrainSection(_Strict):
    lam: float = Field(0.9, ge=0.0, le=1.0)
    batch_size: int = Field(64, ge=2)
    epochs: int = Field(30, ge=0)
    pretrain_epochs: int = Field(2, ge=0)
    lr_extractor: float = Field(5e-4, gt=0)
    lr_classifier: float = Field(5e-3, gt=0)
    lr_critic: float = Field(1e-3, gt=0)
    decay_epochs: int = Field(10, ge=0)
    decay_gamma: float = Field(0.5, gt=0)
    feature_dim: int = Field(8, ge=1)
    extractor_hidden: List[int] = [64]
    extractor_output_activation: str = "tanh"
    classifier_hidden: List[int] = [32]
    critic_hidden: List[int] = [64, 32]
    critic_injection: Dict[str, int] = {"x": 0, "z": 1, "u": 2}
    classifier_steps: int = Field(5, ge=1)
    critic_steps: int = Field(1, ge=1)


class EvalSection(_Strict):
    hidden: List[int] = [32]
    epochs: int = Field(30, ge=1)
    lr: float = Field(2e-3, gt=0)
    batch_size: int = Field(64, ge=2)


class SweepSection(_Strict):
    lambdas: List[float] = list(DEFAULT_LAMBDAS)
    seeds: int = Field(3, ge=1)

    @field_validator("lambdas")
    @classmethod
    def _in_range(cls, v):
        if not v:
            raise ValueError("lambda grid is empty")
        for lam in v:
            if not 0.0 <= lam <= 1.0:
                raise ValueError(f"lambda {lam} outside [0, 1]")
        return v


class AuditSection(_Strict):
    architectures: List[List[int]] = [list(a) for a in DEFAULT_AUDIT_ARCHITECTURES]

    @field_validator("architectures")
    @classmethod
    def _nonempty(cls, v):
        if not v or any(not a or min(a) < 1 for a in v):
            raise ValueError("need at least one architecture with positive widths")
        return v


class BaselineSection(_Strict):
    kind: Literal["noisy", "dp", "encoder", "hybrid"]
    sigma: float = Field(1.0, gt=0)
    epsilon: float = Field(0.5, gt=0)
    retained_dim: int = Field(4, ge=1)
    encoder_hidden: List[int] = [64]
    encoder_dim: int = 8
    encoder_activation: str = "tanh"
    encoder_epochs: int = 20
    encoder_lr: float = 1e-3


class RunConfig(_Strict):
    seed: int = 0
    output: str = "runs/default"
    dataset: DatasetSection = DatasetSection()
    train: TrainSection = TrainSection()
    eval: EvalSection = EvalSection()
    sweep: SweepSection = SweepSection()
    audit: AuditSection = AuditSection()
    baselines: List[BaselineSection] = []

    # resolution -------------------------------------------------------
    def train_config(self, seed_index: int = 0) -> TrainConfig:
        return TrainConfig(seed=self.seed_for(seed_index), **self.train.model_dump())

    def seed_for(self, index: int) -> int:
        return derive_seed(self.seed, "run", index)

    def seeds(self) -> list[int]:
        return [self.seed_for(i) for i in range(self.sweep.seeds)]

    def eval_spec(self) -> EvalSpec:
        return EvalSpec(**self.eval.model_dump())

    def baseline_config(self, section: BaselineSection) -> BaselineConfig:
        return BaselineConfig(seed=derive_seed(self.seed, "baseline"), **section.model_dump())

    def load_dataset(self) -> LabeledDataset:
        ds = self.dataset
        if ds.csv is not None:
            path = Path(ds.csv.path)
            if not path.is_file():
                raise ConfigError(f"dataset.csv.path: file not found: {path}")
            fields = ds.csv.model_dump()
            fields.pop("path")
            return load_csv(path, CsvSchema(seed=derive_seed(self.seed, "split"), **fields))
        if ds.synthetic is not None:
            try:
                spec = SyntheticSpec(**ds.synthetic)
            except TypeError as exc:
                raise ConfigError(f"dataset.synthetic: {exc}") from None
            return generate_synthetic(spec)
        try:
            return generate_synthetic(preset(ds.preset))
        except ValueError as exc:
            raise ConfigError(f"dataset.preset: {exc}") from None

    def resolved(self) -> dict:
        return self.model_dump(mode="json")


def _describe(err: ValidationError) -> str:
    parts = []
    for e in err.errors():
        loc = ".".join(str(p) for p in e["loc"]) or "<root>"
        parts.append(f"{loc}: {e['msg']}")
    return "; ".join(parts)


def parse_config(data: Optional[dict]) -> RunConfig:
    try:
        return RunConfig.model_validate(data or {})
    except ValidationError as err:
        raise ConfigError(f"invalid config: {_describe(err)}") from None


def load_config(path: Optional[Union[str, Path]]) -> RunConfig:
    """Read a YAML/JSON config; ``None`` gives all defaults."""
    if path is None:
        return parse_config({})
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config: file not found: {p}")
    try:
        data = yaml.safe_load(p.read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigError(f"config: cannot parse {p}: {exc}") from None
    if data is not None and not isinstance(data, dict):
        raise ConfigError("config: top level must be a mapping")
    return parse_config(data)


def with_overrides(cfg: RunConfig, **overrides) -> RunConfig:
    """Apply dotted-path overrides (``{"train.lam": 0.5}``) and revalidate."""
    data = cfg.model_dump()
    for dotted, value in overrides.items():
        if value is None:
            continue
        node = data
        *head, last = dotted.split(".")
        for key in head:
            node = node[key]
        node[last] = value
    return parse_config(data)


def dump_resolved(cfg: RunConfig, path: Union[str, Path]) -> None:
    Path(path).write_text(json.dumps(cfg.resolved(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
