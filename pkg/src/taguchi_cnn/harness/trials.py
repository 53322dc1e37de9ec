"""Mapping factor levels to training runs, and executing them resumably."""

from __future__ import annotations

import json
import re
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Iterable

import numpy as np

from ..analysis import METRICS, PredictedOptimum, ResponseRecord, ResponseTable, format_responses, main_effects, \
    predict_response
from ..doe import ExperimentPlan, TrialConfig, assign_factors, build_standard_array, dump_plan
from ..nn import model
from ..nn.checkpoint import save_checkpoint
from ..nn.optim import SGD, Adam
from ..nn.train import EpochMetrics, TrainData, TrainingConfig, TrainingError, train
from ..synthdata import DatasetSpec, build_dataset
from .config import StudyConfig, dump_config


class TrialConfigError(ValueError):
    """A trial names a level the harness cannot map to a model or training setting."""


class StudyError(RuntimeError):
    pass


def _norm(label: str) -> str:
    return re.sub(r"[\s\[\]._\-]", "", str(label).lower())


# normalised label -> setting; several spellings of each published label are accepted
_LOSSES = {"hinge": "hinge", "sqdhinge": "squared_hinge", "squaredhinge": "squared_hinge"}
_ACTIVATIONS = {"relu": "relu", "relu6": "relu6"}
_OPTIMIZERS = {"adam": "adam", "sgd": "sgd"}


def _lookup(factor: str, label: str, table: dict[str, str]) -> str:
    try:
        return table[_norm(label)]
    except KeyError:
        raise TrialConfigError(f"factor {factor}: unknown level {label!r}") from None


def _square(factor: str, label: str) -> int:
    m = re.fullmatch(r"(\d+)(?:x(\d+))?", _norm(label))
    if not m or (m.group(2) and m.group(1) != m.group(2)):
        raise TrialConfigError(f"factor {factor}: unknown level {label!r}")
    return int(m.group(1))


@dataclass(frozen=True)
class MaterializedTrial:
    spec: model.ModelSpec
    training: TrainingConfig
    dataset: DatasetSpec
    input_size: int


def trial_seed(study_seed: int, run_index: int) -> int:
    return int(np.random.SeedSequence([int(study_seed), int(run_index)]).generate_state(1)[0])


def materialize_trial(trial: TrialConfig, study: StudyConfig) -> MaterializedTrial:
    """Turn a trial's level labels into a model, a training config and a dataset spec.

    Factors missing from the study fall back to the published optimum levels.
    """
    s = {"layers": "10", "image_size": "[100x100]", "optimizer": "adam", "loss": "Sqd. Hinge",
         "activation": "ReLU6", "filter_size": "[3x3]", **trial.settings}
    unknown = set(s) - {"layers", "image_size", "optimizer", "loss", "activation", "filter_size"}
    if unknown:
        raise TrialConfigError(f"unknown factor(s) {', '.join(sorted(unknown))}")

    try:
        layers = int(_norm(s["layers"]))
    except ValueError:
        raise TrialConfigError(f"factor layers: unknown level {s['layers']!r}") from None
    if layers not in model.BLOCK_TEMPLATES:
        raise TrialConfigError(f"factor layers: unknown level {s['layers']!r}")
    sizes = {_norm(k): int(v) for k, v in study.image_sizes.items()}
    if _norm(s["image_size"]) not in sizes:
        _square("image_size", s["image_size"])  # malformed labels get the generic message
        raise TrialConfigError(f"factor image_size: no input size configured for level {s['image_size']!r}")
    size = sizes[_norm(s["image_size"])]
    kernel = _square("filter_size", s["filter_size"])
    activation = _lookup("activation", s["activation"], _ACTIVATIONS)
    loss = _lookup("loss", s["loss"], _LOSSES)
    opt_name = _lookup("optimizer", s["optimizer"], _OPTIMIZERS)

    spec = model.sequential_cnn(layers, size, kernel, activation)
    optimizer = Adam(study.learning_rate) if opt_name == "adam" else SGD(study.learning_rate)
    training = TrainingConfig(optimizer, loss, study.batch_size, study.epochs,
                              trial_seed(study.seed, trial.run_index), study.precision)
    return MaterializedTrial(spec, training, study.dataset, size)


@dataclass
class TrialResult:
    trial: TrialConfig
    status: str  # "ok" or "failed"
    metrics: EpochMetrics | None = None
    best_epoch: int | None = None
    seconds: float = 0.0
    checkpoint: str | None = None
    error: str | None = None
    history: list[EpochMetrics] = field(default_factory=list)
    fingerprint: str = ""

    @property
    def ok(self) -> bool:
        return self.status == "ok"

    def record(self) -> ResponseRecord:
        m = self.metrics
        return ResponseRecord(self.trial.run_index, m.train_loss, m.train_accuracy, m.val_loss, m.val_accuracy)

    def to_json(self) -> str:
        data = {
            "run": self.trial.run_index,
            "settings": self.trial.settings,
            "status": self.status,
            "metrics": self.metrics.as_dict() if self.metrics else None,
            "best_epoch": self.best_epoch,
            "seconds": self.seconds,
            "checkpoint": self.checkpoint,
            "error": self.error,
            "fingerprint": self.fingerprint,
            "history": [m.as_dict() for m in self.history],
        }
        return json.dumps(data, indent=1) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "TrialResult":
        d = json.loads(text)
        return cls(
            TrialConfig(int(d["run"]), dict(d["settings"])),
            d["status"],
            EpochMetrics(**d["metrics"]) if d.get("metrics") else None,
            d.get("best_epoch"),
            float(d.get("seconds", 0.0)),
            d.get("checkpoint"),
            d.get("error"),
            [EpochMetrics(**m) for m in d.get("history", [])],
            d.get("fingerprint", ""),
        )


_DATA_CACHE: dict[tuple[str, int], TrainData] = {}


def trial_data(dataset: DatasetSpec, input_size: int) -> TrainData:
    """Synthetic train/val arrays resampled to the trial's input size (cached per process)."""
    key = (repr(dataset), input_size)
    if key not in _DATA_CACHE:
        if len(_DATA_CACHE) > 8:
            _DATA_CACHE.clear()
        _DATA_CACHE[key] = build_dataset(dataset).to_train_data(input_size)
    return _DATA_CACHE[key]


def _checkpoint_path(study: StudyConfig, trial: TrialConfig, name: str | None = None) -> Path:
    return study.out / "checkpoints" / f"{name or f'run_{trial.run_index:02d}'}.ckpt"


def execute_trial(study: StudyConfig, trial: TrialConfig, checkpoint_name: str | None = None) -> TrialResult:
    """Train one trial. Training failures are captured in the result; mapping errors raise."""
    mt = materialize_trial(trial, study)
    data = trial_data(mt.dataset, mt.input_size)
    start = time.perf_counter()
    try:
        result = train(mt.spec, data, mt.training)
    except TrainingError as exc:
        return TrialResult(trial, "failed", seconds=time.perf_counter() - start, error=str(exc),
                           fingerprint=study.fingerprint())
    seconds = time.perf_counter() - start
    ckpt = None
    if study.checkpoints:
        path = _checkpoint_path(study, trial, checkpoint_name)
        path.parent.mkdir(parents=True, exist_ok=True)
        save_checkpoint(path, mt.spec, result.best_params,
                        {"run": trial.run_index, "settings": trial.settings, "best_epoch": result.best_epoch})
        ckpt = str(path.relative_to(study.out))
    return TrialResult(trial, "ok", result.best, result.best_epoch, seconds, ckpt, None, result.history,
                       study.fingerprint())


def _execute_packed(args):
    return execute_trial(*args)


def study_plan(study: StudyConfig) -> ExperimentPlan:
    return assign_factors(build_standard_array(study.array), study.factors)


def trial_path(study: StudyConfig, run_index: int) -> Path:
    return study.out / "trials" / f"run_{run_index:02d}.json"


def _completed(study: StudyConfig, trial: TrialConfig) -> TrialResult | None:
    path = trial_path(study, trial.run_index)
    if not path.exists():
        return None
    try:
        prev = TrialResult.from_json(path.read_text(encoding="utf-8"))
    except (ValueError, KeyError, TypeError):
        return None
    if prev.ok and prev.fingerprint == study.fingerprint() and prev.trial.settings == trial.settings:
        return prev
    return None


@dataclass
class StudyResult:
    plan: ExperimentPlan
    trials: list[TrialResult]
    executed: list[int]
    responses: ResponseTable | None

    @property
    def failures(self) -> list[TrialResult]:
        return [t for t in self.trials if not t.ok]


def run_study(study: StudyConfig, progress: Callable[[TrialResult], None] | None = None,
              only: Iterable[int] | None = None) -> StudyResult:
    """Run every trial of the plan, skipping ones already persisted under ``study.out``.

    ``only`` restricts execution to the given run indices (the rest must already exist
    for a response table to be written).
    """
    plan = study_plan(study)
    for t in plan.trials:  # refuse to start if any trial cannot be mapped
        materialize_trial(t, study)
    study.out.mkdir(parents=True, exist_ok=True)
    (study.out / "trials").mkdir(exist_ok=True)
    (study.out / "plan.csv").write_text(dump_plan(plan), encoding="utf-8")
    (study.out / "config.yaml").write_text(dump_config(study), encoding="utf-8")

    wanted = None if only is None else set(only)
    results: dict[int, TrialResult] = {}
    todo: list[TrialConfig] = []
    for t in plan.trials:
        prev = _completed(study, t)
        if prev is not None:
            results[t.run_index] = prev
        elif wanted is None or t.run_index in wanted:
            todo.append(t)

    def finish(res: TrialResult) -> None:
        trial_path(study, res.trial.run_index).write_text(res.to_json(), encoding="utf-8")
        results[res.trial.run_index] = res
        if progress:
            progress(res)

    if study.parallel == 1 or len(todo) < 2:
        for t in todo:
            finish(execute_trial(study, t))
    else:
        with ProcessPoolExecutor(max_workers=study.parallel) as pool:
            for res in pool.map(_execute_packed, [(study, t) for t in todo]):
                finish(res)

    ordered = [results[t.run_index] for t in plan.trials if t.run_index in results]
    responses = None
    resp_path = study.out / "responses.csv"
    if len(ordered) == len(plan.trials) and all(r.ok for r in ordered):
        responses = ResponseTable(plan, tuple(r.record() for r in ordered))
        resp_path.write_text(format_responses(responses), encoding="utf-8")
    elif resp_path.exists():
        resp_path.unlink()  # never leave a stale or partial table behind
    return StudyResult(plan, ordered, [t.run_index for t in todo], responses)


@dataclass
class ConfirmResult:
    optimum: PredictedOptimum
    trial: TrialResult
    predicted: dict[str, float]  # additive-model prediction per metric

    def rows(self) -> list[tuple[str, float | None, float | None]]:
        """(metric, predicted, observed) for the four response metrics."""
        observed = self.trial.metrics.as_dict() if self.trial.metrics else {}
        return [(m, self.predicted.get(m), observed.get(m)) for m in METRICS]

    def to_json(self) -> str:
        data = {
            "optimum": asdict(self.optimum),
            "predicted": self.predicted,
            "observed": self.trial.metrics.as_dict() if self.trial.metrics else None,
            "status": self.trial.status,
            "error": self.trial.error,
            "best_epoch": self.trial.best_epoch,
            "checkpoint": self.trial.checkpoint,
        }
        return json.dumps(data, indent=1) + "\n"


CONFIRM_RUN = 0  # run index used for the confirmation trial's seed


def confirm(study: StudyConfig, optimum: PredictedOptimum, responses: ResponseTable | None = None) -> ConfirmResult:
    """Train the predicted-best levels with the study budget and compare against the additive model."""
    trial = TrialConfig(CONFIRM_RUN, dict(optimum.levels))
    result = execute_trial(study, trial, checkpoint_name="confirm")
    predicted = {optimum.metric: optimum.predicted}
    if responses is not None:
        for m in METRICS:
            predicted[m] = predict_response(main_effects(responses, m), optimum.levels)
    out = ConfirmResult(optimum, result, predicted)
    study.out.mkdir(parents=True, exist_ok=True)
    (study.out / "confirm.json").write_text(out.to_json(), encoding="utf-8")
    return out
