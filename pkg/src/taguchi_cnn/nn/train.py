"""Mini-batch training with per-epoch metrics and best-epoch selection."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from . import losses, model
from .optim import SGD, Adam, init_state, optimizer_step


class TrainingError(RuntimeError):
    pass


@dataclass(frozen=True)
class TrainingConfig:
    optimizer: SGD | Adam = field(default_factory=Adam)
    loss: str = "hinge"
    batch_size: int = 32
    epochs: int = 30
    seed: int = 0
    dtype: str = "float64"  # "float32" trades precision for roughly twice the speed

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.loss not in losses.LOSSES:
            raise ValueError(f"unknown loss {self.loss!r}")
        if self.dtype not in ("float32", "float64"):
            raise ValueError(f"dtype must be float32 or float64, not {self.dtype!r}")


@dataclass(frozen=True)
class EpochMetrics:
    train_loss: float
    train_accuracy: float
    val_loss: float
    val_accuracy: float

    def as_dict(self) -> dict[str, float]:
        return asdict(self)


@dataclass(frozen=True)
class TrainData:
    """Images are (N, H, W, C) float64; labels are +1 (defective) / -1."""

    x_train: np.ndarray
    y_train: np.ndarray
    x_val: np.ndarray
    y_val: np.ndarray


@dataclass
class TrainResult:
    history: list[EpochMetrics]
    best_epoch: int  # 1-based
    params: model.Params
    best_params: model.Params

    @property
    def best(self) -> EpochMetrics:
        return self.history[self.best_epoch - 1]


def _is_better(m: EpochMetrics, best: EpochMetrics) -> bool:
    # highest val accuracy, then lowest val loss; earlier epochs win exact ties
    if m.val_accuracy != best.val_accuracy:
        return m.val_accuracy > best.val_accuracy
    return m.val_loss < best.val_loss


def evaluate(spec: model.ModelSpec, params: model.Params, x: np.ndarray, y: np.ndarray, kind: str,
             batch_size: int = 64) -> tuple[float, float]:
    scores = model.predict(spec, params, x, batch_size)
    value, _ = losses.loss(scores, y, kind)
    return value, losses.accuracy(scores, y)


def train(spec: model.ModelSpec, data: TrainData, config: TrainingConfig) -> TrainResult:
    """Train from a seeded init; deterministic for fixed inputs.

    Reported train loss/accuracy for an epoch are averages over that epoch's
    mini-batches, measured before each batch's update.
    """
    dtype = np.dtype(config.dtype)
    x, y = np.asarray(data.x_train, dtype=dtype), np.asarray(data.y_train, dtype=np.float64)
    if len(x) == 0:
        raise TrainingError("training set is empty")
    if len(np.unique(y)) < 2:
        raise TrainingError("training set contains a single class")
    x_val, y_val = np.asarray(data.x_val, dtype=dtype), np.asarray(data.y_val, dtype=np.float64)
    if len(x_val) == 0:
        x_val, y_val = x, y

    init_rng = np.random.default_rng([config.seed, 0])
    shuffle_rng = np.random.default_rng([config.seed, 1])
    params = model.cast_params(model.init_params(spec, init_rng), dtype)
    state = init_state(params, config.optimizer)

    history: list[EpochMetrics] = []
    best_epoch, best_params = 0, None
    n = len(x)
    for epoch in range(config.epochs):
        order = shuffle_rng.permutation(n)
        loss_sum = 0.0
        correct = 0.0
        for start in range(0, n, config.batch_size):
            idx = order[start : start + config.batch_size]
            scores, cache = model.forward(spec, params, x[idx])
            value, dscores = losses.loss(scores, y[idx], config.loss)
            if not np.isfinite(value):
                raise TrainingError(f"loss diverged at epoch {epoch + 1}")
            loss_sum += value * len(idx)
            correct += losses.accuracy(scores, y[idx]) * len(idx)
            grads = model.backward(spec, params, cache, dscores)
            optimizer_step(params, grads, state, config.optimizer)
        val_loss, val_acc = evaluate(spec, params, x_val, y_val, config.loss)
        m = EpochMetrics(loss_sum / n, correct / n, val_loss, val_acc)
        history.append(m)
        if best_params is None or _is_better(m, history[best_epoch - 1]):
            best_epoch = epoch + 1
            best_params = [None if p is None else {k: v.copy() for k, v in p.items()} for p in params]
    return TrainResult(history, best_epoch, params, best_params)
