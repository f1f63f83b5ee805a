"""Experiment configuration schema (JSON) and named presets."""

from __future__ import annotations

import json
import os
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .errors import ConfigError


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid", frozen=True)


class HyperParams(_Strict):
    lambda_cot_max: float = Field(10.0, ge=0)
    lambda_dif_max: float = Field(0.5, ge=0)
    warmup_epochs: int = Field(40, ge=0)
    total_epochs: int = Field(300, ge=1)
    lr0: float = Field(0.05, ge=0)
    momentum: float = Field(0.9, ge=0)
    weight_decay: float = Field(1e-4, ge=0)
    batch_size: int = Field(100, ge=1)
    fgsm_epsilon: float = Field(0.02, ge=0)
    n_views: int = Field(2, ge=2)

    @field_validator("n_views")
    @classmethod
    def _even(cls, v):
        if v % 2:
            raise ValueError(f"n_views must be even, got {v}")
        return v

    @model_validator(mode="after")
    def _warmup_fits(self):
        if self.warmup_epochs > self.total_epochs:
            raise ValueError("warmup_epochs must not exceed total_epochs")
        return self


# Constants from the large-scale recipes. Image datasets are not shipped; these
# only fix the loss weights and schedules.
PRESETS = {
    "desk": {},
    "svhn-like": dict(lambda_cot_max=10.0, lambda_dif_max=0.5, warmup_epochs=80,
                      total_epochs=600, lr0=0.05, batch_size=100),
    "cifar10-like": dict(lambda_cot_max=10.0, lambda_dif_max=0.5, warmup_epochs=80,
                         total_epochs=600, lr0=0.05, batch_size=100),
    "cifar100-like": dict(lambda_cot_max=10.0, lambda_dif_max=1.0, warmup_epochs=80,
                          total_epochs=600, lr0=0.05, batch_size=100),
    # co-training phase after supervised pretraining; lambdas start at their maxima
    "imagenet-like": dict(lambda_cot_max=1.0, lambda_dif_max=0.1, warmup_epochs=0,
                          total_epochs=20, lr0=0.005, batch_size=128),
}


class DatasetBlock(_Strict):
    generator: Optional[Literal["two-moons", "gaussian-blobs"]] = "two-moons"
    params: dict = Field(default_factory=lambda: {"n": 2000, "noise_sd": 0.1})
    seed: int = 0
    n_test: int = Field(1000, ge=1)
    test_seed: int = 1
    csv: Optional[str] = None
    test_csv: Optional[str] = None
    n_labeled: int = Field(20, ge=1)
    split_seed: int = 0

    @model_validator(mode="after")
    def _source(self):
        if self.csv is None and self.generator is None:
            raise ValueError("either generator or csv must be set")
        return self


class ModelBlock(_Strict):
    layer_dims: list[int] = Field(default_factory=lambda: [2, 32, 32, 2])
    seeds: Optional[list[int]] = None

    @field_validator("layer_dims")
    @classmethod
    def _dims(cls, v):
        if len(v) < 2 or any(d <= 0 for d in v):
            raise ValueError("layer_dims needs >= 2 positive entries")
        return v


class RunBlock(_Strict):
    output_dir: str = "runs/default"
    metrics_path: Optional[str] = None
    checkpoint_interval: int = Field(0, ge=0)
    mode: Literal["dct", "sup_only", "cot_only", "dif_only"] = "dct"
    schedule: Literal["real", "fake"] = "real"
    pretrain_epochs: int = Field(0, ge=0)
    seed: int = 0
    probe_size: int = Field(256, ge=1)
    probe_seed: int = 0
    parallel: bool = False


class ExperimentConfig(_Strict):
    preset: Optional[str] = None
    dataset: DatasetBlock = Field(default_factory=DatasetBlock)
    model: ModelBlock = Field(default_factory=ModelBlock)
    hyperparams: HyperParams = Field(default_factory=HyperParams)
    run: RunBlock = Field(default_factory=RunBlock)

    @model_validator(mode="before")
    @classmethod
    def _apply_preset(cls, data):
        if isinstance(data, dict) and data.get("preset") is not None:
            name = data["preset"]
            if name not in PRESETS:
                raise ValueError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
            hp = dict(PRESETS[name])
            hp.update(data.get("hyperparams") or {})
            data = {**data, "hyperparams": hp}
        return data

    @model_validator(mode="after")
    def _cross_checks(self):
        if self.model.seeds is not None and len(self.model.seeds) != self.hyperparams.n_views:
            raise ValueError("model.seeds must have one entry per view (hyperparams.n_views)")
        return self

    def view_seeds(self):
        if self.model.seeds is not None:
            return list(self.model.seeds)
        return [self.run.seed * 1000 + i + 1 for i in range(self.hyperparams.n_views)]

    def lambda_mask(self):
        """(use_cot, use_dif) for the configured mode."""
        return {
            "dct": (True, True),
            "sup_only": (False, False),
            "cot_only": (True, False),
            "dif_only": (False, True),
        }[self.run.mode]

    def effective_hyperparams(self):
        use_cot, use_dif = self.lambda_mask()
        hp = self.hyperparams
        return hp.model_copy(
            update={
                "lambda_cot_max": hp.lambda_cot_max if use_cot else 0.0,
                "lambda_dif_max": hp.lambda_dif_max if use_dif else 0.0,
            }
        )

    def with_run(self, **updates):
        return self.model_copy(update={"run": self.run.model_copy(update=updates)})

    def to_json(self):
        data = self.model_dump(mode="json")
        data["preset"] = None  # hyperparams already carry the resolved values
        return json.dumps(data, indent=2, sort_keys=True) + "\n"


def _field_path(err):
    return ".".join(str(p) for p in err["loc"] if not str(p).startswith("function-after"))


def parse_config(data, base_dir=None):
    """Validate a config dict; relative paths are resolved against ``base_dir``."""
    try:
        cfg = ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        err = exc.errors()[0]
        path = _field_path(err) or "<root>"
        raise ConfigError(err["msg"], field=path) from None
    if base_dir is not None:
        cfg = _resolve_paths(cfg, base_dir)
    return cfg


def _resolve_paths(cfg, base_dir):
    def fix(p):
        return p if p is None or os.path.isabs(p) else os.path.normpath(os.path.join(base_dir, p))

    ds = cfg.dataset.model_copy(update={"csv": fix(cfg.dataset.csv), "test_csv": fix(cfg.dataset.test_csv)})
    run = cfg.run.model_copy(
        update={"output_dir": fix(cfg.run.output_dir), "metrics_path": fix(cfg.run.metrics_path)}
    )
    return cfg.model_copy(update={"dataset": ds, "run": run})


def load_config(path):
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON at line {exc.lineno}: {exc.msg}", field="<file>") from None
    return parse_config(data, base_dir=os.path.dirname(os.path.abspath(path)))
