"""Request and response models for the HTTP service."""

from __future__ import annotations

from typing import Literal

from pydantic import BaseModel, Field


class FactorIn(BaseModel):
    name: str
    levels: list[str] = Field(min_length=2)


class PlanRequest(BaseModel):
    array: str = "L16_mixed"
    factors: list[FactorIn] | None = None  # default: the published Table 1 factors


class Trial(BaseModel):
    run: int
    settings: dict[str, str]


class PlanResponse(BaseModel):
    array: str
    assignment: dict[str, int]
    trials: list[Trial]
    plan_csv: str


class OrthogonalityRequest(BaseModel):
    cells: list[list[int]]
    levels_per_column: list[int] | None = None


class ViolationOut(BaseModel):
    kind: Literal["balance", "pair"]
    columns: list[int]
    levels: list[int]
    count: int
    expected: float


class OrthogonalityResponse(BaseModel):
    passed: bool
    violations: list[ViolationOut]


class AnalyzeRequest(BaseModel):
    responses_csv: str | None = Field(None, description="run,train_loss,train_acc,val_loss,val_acc; default: shipped fixture")
    plan_csv: str | None = Field(None, description="run,A..F plan; default: shipped fixture")
    metric: str = "val_accuracy"
    objective: Literal["max", "min"] | None = None


class LevelMean(BaseModel):
    level: str
    mean: float


class FactorEffect(BaseModel):
    factor: str
    levels: list[LevelMean]
    delta: float
    rank: int


class Interval(BaseModel):
    metric: str
    n: int
    mean: float
    std: float
    lower: float
    upper: float


class Optimum(BaseModel):
    metric: str
    objective: str
    levels: dict[str, str]
    predicted: float
    grand_mean: float


class AnalyzeResponse(BaseModel):
    metric: str
    effects: list[FactorEffect]
    intervals: list[Interval]
    optimum: Optimum


class MaterializeRequest(BaseModel):
    settings: dict[str, str]
    scale: Literal["desk", "full"] = "desk"


class LayerRow(BaseModel):
    name: str
    type: str
    output_shape: list[int]
    params: int


class MaterializeResponse(BaseModel):
    input_shape: list[int]
    layers: list[LayerRow]
    total_params: int
    optimizer: str
    learning_rate: float
    loss: str
    epochs: int
    batch_size: int
    seed: int


class SnRequest(BaseModel):
    values: list[float] = Field(min_length=1)
    objective: Literal["max", "min"]


class SnResponse(BaseModel):
    sn_db: float
