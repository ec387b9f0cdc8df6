"""Run configuration: one JSON document that resolves to every component config."""
from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Literal

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .connectivity import GraphBuildConfig
from .hwcl import HwclConfig
from .model import ModelConfig
from .signal_io import WindowConfig
from .training import StageConfig, TrainConfig


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid", validate_assignment=True)


class WindowSection(_Section):
    T: int = Field(8, ge=1)
    S: int | None = Field(None, ge=1)
    band_low_hz: float = Field(0.01, gt=0)
    band_high_hz: float = Field(0.10, gt=0)
    tr_seconds: float = Field(2.0, gt=0)
    min_timepoints: int = Field(230, ge=1)
    on_short: Literal["error", "drop"] = "error"

    @model_validator(mode="after")
    def _band(self):
        if self.band_low_hz >= self.band_high_hz:
            raise ValueError("band_low_hz must be below band_high_hz")
        return self


class GraphSection(_Section):
    tau: float = Field(0.44, ge=0, lt=1)
    eps_minmax: float = Field(1e-8, gt=0)
    rho_clamp: float = Field(1 - 1e-7, gt=0, lt=1)
    eps_fft: float = Field(1e-8, gt=0)
    use_distance_prior: bool = True


class ModelSection(_Section):
    hidden: int = Field(64, ge=1)
    n_spatial: int = Field(2, ge=1)
    n_stgin: int = Field(3, ge=1)
    L: int = Field(3, ge=0)
    direction: Literal["causal", "literal"] = "causal"
    joint_temporal: bool = True
    alpha_init: float = Field(1.0, gt=0)
    beta_init: float = Field(0.5, gt=0)
    cheb_K: int = Field(2, ge=1)
    cheb_hidden: int = Field(64, ge=1)
    embed_dim: int = Field(256, ge=1)
    gru_hidden: int = Field(256, ge=1)
    dropout: float = Field(0.2, ge=0, lt=1)


class HwclSection(_Section):
    lambda_neg: float = Field(0.2, ge=0)


class StageSection(_Section):
    lr: float = Field(ge=0)
    weight_decay: float = Field(ge=0)
    epochs: int = Field(ge=0)
    batch_size: int = Field(16, ge=1)
    clip_norm: float | None = Field(5.0, gt=0)


class TrainSection(_Section):
    stage1: StageSection = StageSection(lr=9e-4, weight_decay=6e-6, epochs=40)
    stage2: StageSection = StageSection(lr=2e-3, weight_decay=4e-5, epochs=120)
    lambda_hw: float = Field(0.1, ge=0)
    pretrain: bool = True
    pretrain_scope: Literal["fold", "global"] = "fold"
    seed: int = Field(0, ge=0)
    folds: int = Field(10, ge=2)
    repeats: int = Field(10, ge=1)
    threshold: float = Field(0.5, gt=0, lt=1)


class SaliencySection(_Section):
    top_edges: int = Field(15, ge=1)
    top_rois: int = Field(10, ge=1)
    absolute: bool = True
    correct_only: bool = False


class SweepSection(_Section):
    T: list[int] = [4, 6, 8, 10, 12, 16, 24, 32]
    tau: list[float] = [round(0.35 + 0.01 * i, 2) for i in range(16)]
    lambda_hw: list[float] = [0.01, 0.05, 0.1, 0.2, 0.3, 0.5, 1.0]

    @field_validator("T", "tau", "lambda_hw")
    @classmethod
    def _nonempty(cls, v):
        if not v:
            raise ValueError("sweep grid must not be empty")
        return v


class PathsSection(_Section):
    cohort: str | None = None
    out_dir: str = "runs/latest"
    checkpoint: str | None = None


class RunConfig(_Section):
    window: WindowSection = WindowSection()
    graph: GraphSection = GraphSection()
    model: ModelSection = ModelSection()
    hwcl: HwclSection = HwclSection()
    train: TrainSection = TrainSection()
    saliency: SaliencySection = SaliencySection()
    sweep: SweepSection = SweepSection()
    paths: PathsSection = PathsSection()

    # -- file form ------------------------------------------------------
    @classmethod
    def from_file(cls, path) -> "RunConfig":
        return cls.model_validate_json(Path(path).read_text())

    def to_json(self) -> str:
        return json.dumps(self.model_dump(mode="json"), indent=2, sort_keys=True) + "\n"

    def save(self, path) -> None:
        Path(path).write_text(self.to_json())

    @classmethod
    def schema_json(cls) -> str:
        return json.dumps(cls.model_json_schema(), indent=2, sort_keys=True) + "\n"

    def with_overrides(self, overrides: dict[str, Any]) -> "RunConfig":
        """Copy with dotted-key overrides (``{"train.lambda_hw": 0}``), re-validated."""
        data = self.model_dump(mode="python")
        for key, value in overrides.items():
            node = data
            *head, last = key.split(".")
            for part in head:
                if part not in node or not isinstance(node[part], dict):
                    raise KeyError(f"unknown config field {key!r}")
                node = node[part]
            if last not in node:
                raise KeyError(f"unknown config field {key!r}")
            node[last] = value
        return RunConfig.model_validate(data)

    # -- component configs --------------------------------------------
    def window_config(self) -> WindowConfig:
        w = self.window
        return WindowConfig(w.T, w.S, w.band_low_hz, w.band_high_hz)

    def graph_config(self) -> GraphBuildConfig:
        return GraphBuildConfig(**self.graph.model_dump())

    def model_config_(self) -> ModelConfig:
        return ModelConfig(**self.model.model_dump())

    def hwcl_config(self) -> HwclConfig:
        return HwclConfig(self.hwcl.lambda_neg)

    def train_config(self) -> TrainConfig:
        t = self.train
        return TrainConfig(
            stage1=StageConfig(**t.stage1.model_dump()),
            stage2=StageConfig(**t.stage2.model_dump()),
            lambda_hw=t.lambda_hw, pretrain=t.pretrain, pretrain_scope=t.pretrain_scope,
            seed=t.seed, folds=t.folds, repeats=t.repeats, threshold=t.threshold,
        )


def desk_profile(**overrides) -> RunConfig:
    """Narrow widths and 5-fold single-repeat CV so a full run fits a desktop CPU."""
    base = RunConfig().with_overrides({
        "model.hidden": 16, "model.cheb_hidden": 16, "model.embed_dim": 32, "model.gru_hidden": 32,
        "train.folds": 5, "train.repeats": 1,
    })
    return base.with_overrides(overrides) if overrides else base


def describe_error(err: ValidationError) -> str:
    """One line per offending field, named by its dotted path."""
    lines = []
    for e in err.errors():
        loc = ".".join(str(p) for p in e["loc"]) or "<root>"
        lines.append(f"{loc}: {e['msg']}")
    return "\n".join(lines)
