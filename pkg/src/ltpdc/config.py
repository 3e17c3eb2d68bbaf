"""Config files for the ``simulate`` and ``experiment`` commands (JSON)."""

from __future__ import annotations

import json
from pathlib import Path
from typing import List, Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .distributions import GroupSpec
from .errors import ParseError
from .losses import LossSpec
from .metrics import DEFAULT_ALPHA, EPSILON
from .trainer import ExperimentConfig


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class MetricOptions(_Strict):
    alpha: float = Field(DEFAULT_ALPHA, gt=0)
    epsilon: float = Field(EPSILON, gt=0)
    many_min: int = 100
    few_max: int = Field(20, ge=1)

    @model_validator(mode="after")
    def _thresholds(self):
        if self.many_min <= self.few_max:
            raise ValueError("many_min must exceed few_max")
        return self

    def group_spec(self) -> GroupSpec:
        return GroupSpec(self.many_min, self.few_max)


class SimulateFile(MetricOptions):
    num_classes: int = Field(10, ge=2)
    n_max: int = Field(500, ge=1)
    imbalance_factors: List[float] = Field(default_factory=lambda: [1.0, 10.0, 100.0], min_length=1)
    confusability: float = Field(0.5, ge=0, lt=1)
    n_test_per_class: int = Field(200, ge=1)
    seeds: List[int] = Field(default_factory=lambda: [0], min_length=1)


class LossEntry(_Strict):
    family: Literal["CE", "BCE", "CB-CE", "LDAM", "BalCE"]
    beta: float = Field(0.999, ge=0, lt=1)
    margin_scale: Optional[float] = Field(None, ge=0)
    s: float = Field(30.0, gt=0)
    max_margin: float = Field(0.5, gt=0)
    tau: float = Field(0.0, ge=0)

    def to_spec(self) -> LossSpec:
        return LossSpec(family=self.family, beta=self.beta, margin_scale=self.margin_scale, s=self.s,
                        max_margin=self.max_margin, tau=self.tau)


class ExperimentFile(MetricOptions):
    num_classes: int = Field(10, ge=2)
    dim: int = Field(20, ge=2)
    n_max: int = Field(500, ge=1)
    separation: float = Field(2.0, gt=0)
    noise_sigma: float = Field(1.0, ge=0)
    n_test_per_class: int = Field(200, ge=1)
    epochs: int = Field(500, ge=1, le=100_000)
    learning_rate: float = Field(0.5, gt=0)
    batch_size: Optional[int] = Field(None, ge=1)
    weight_decay: float = Field(0.0, ge=0)
    imbalance_factors: List[float] = Field(default_factory=lambda: [100.0], min_length=1)
    seeds: List[int] = Field(default_factory=lambda: [0, 1, 2, 3, 4], min_length=1)
    losses: List[LossEntry] = Field(
        default_factory=lambda: [LossEntry(family="CE"), LossEntry(family="BalCE")], min_length=1
    )

    def experiment_config(self) -> ExperimentConfig:
        return ExperimentConfig(
            num_classes=self.num_classes, dim=self.dim, n_max=self.n_max, separation=self.separation,
            noise_sigma=self.noise_sigma, n_test_per_class=self.n_test_per_class, epochs=self.epochs,
            learning_rate=self.learning_rate, batch_size=self.batch_size, weight_decay=self.weight_decay,
            alpha=self.alpha, epsilon=self.epsilon, group_spec=self.group_spec(),
        )


def load_config(path, model):
    """Parse and validate a JSON config; errors carry the offending field path."""
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ParseError(str(exc), path=path) from exc
    except json.JSONDecodeError as exc:
        raise ParseError(exc.msg, line=exc.lineno, path=path) from exc
    try:
        return model.model_validate(raw)
    except ValidationError as exc:
        err = exc.errors()[0]
        field = ".".join(str(p) for p in err["loc"]) or "<root>"
        raise ParseError(f"{field}: {err['msg']}", path=path) from exc
