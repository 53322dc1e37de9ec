"""Main effects, deltas, ranks, S/N ratios, interval summaries and the
additive-model optimum over a response table."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Sequence, TextIO

import numpy as np
from scipy import stats

from .doe import ExperimentPlan, FixtureError, fixture_text

METRICS = ("train_loss", "train_accuracy", "val_loss", "val_accuracy")

# fixture column names -> canonical metric names
_METRIC_ALIASES = {
    "train_acc": "train_accuracy",
    "val_acc": "val_accuracy",
    **{m: m for m in METRICS},
}


class InsufficientDataError(ValueError):
    pass


class UnknownMetricError(KeyError):
    pass


def canonical_metric(name: str) -> str:
    try:
        return _METRIC_ALIASES[name]
    except KeyError:
        raise UnknownMetricError(f"unknown metric {name!r}; expected one of {', '.join(METRICS)}") from None


def default_objective(metric: str) -> str:
    """Losses are smaller-is-better, accuracies larger-is-better."""
    return "min" if canonical_metric(metric).endswith("loss") else "max"


def _objective(objective: str) -> str:
    obj = objective.lower()
    if obj in ("max", "larger", "larger-is-better", "larger_is_better"):
        return "max"
    if obj in ("min", "smaller", "smaller-is-better", "smaller_is_better"):
        return "min"
    raise ValueError(f"objective must be 'max' or 'min', got {objective!r}")


@dataclass(frozen=True)
class ResponseRecord:
    run_index: int
    train_loss: float
    train_accuracy: float
    val_loss: float
    val_accuracy: float

    def __post_init__(self):
        for m in ("train_loss", "val_loss"):
            if not getattr(self, m) >= 0:
                raise ValueError(f"run {self.run_index}: {m} must be nonnegative")
        for m in ("train_accuracy", "val_accuracy"):
            if not 0.0 <= getattr(self, m) <= 1.0:
                raise ValueError(f"run {self.run_index}: {m} must lie in [0, 1]")


@dataclass(frozen=True)
class ResponseTable:
    plan: ExperimentPlan
    records: tuple[ResponseRecord, ...]

    def __post_init__(self):
        runs = [r.run_index for r in self.records]
        expected = [t.run_index for t in self.plan.trials]
        if sorted(runs) != sorted(expected) or len(set(runs)) != len(runs):
            raise FixtureError(
                f"response runs {sorted(runs)} do not match plan runs {expected}"
            )
        order = {run: i for i, run in enumerate(expected)}
        object.__setattr__(
            self, "records", tuple(sorted(self.records, key=lambda r: order[r.run_index]))
        )

    def values(self, metric: str) -> np.ndarray:
        metric = canonical_metric(metric)
        return np.array([getattr(r, metric) for r in self.records], dtype=np.float64)


@dataclass(frozen=True)
class IntervalSummary:
    metric: str
    n: int
    mean: float
    std: float
    half_width: float

    @property
    def lower(self) -> float:
        return self.mean - self.half_width

    @property
    def upper(self) -> float:
        return self.mean + self.half_width


@dataclass(frozen=True)
class MainEffectsTable:
    metric: str
    factors: tuple[str, ...]
    per_factor: dict[str, tuple[tuple[str, float], ...]]
    delta: dict[str, float]
    rank: dict[str, int]
    grand_mean: float

    def level_means(self, factor: str) -> dict[str, float]:
        return dict(self.per_factor[factor])


@dataclass(frozen=True)
class SnTable:
    metric: str
    objective: str
    per_factor: dict[str, tuple[tuple[str, float], ...]]
    delta: dict[str, float]
    rank: dict[str, int]


@dataclass(frozen=True)
class PredictedOptimum:
    metric: str
    objective: str
    levels: dict[str, str]
    predicted: float
    grand_mean: float


def parse_responses(source: TextIO | str, plan: ExperimentPlan) -> ResponseTable:
    """Parse ``run,train_loss,train_acc,val_loss,val_acc`` text against a plan."""
    text = source if isinstance(source, str) else source.read()
    reader = csv.reader(io.StringIO(text))
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise FixtureError("empty response table") from None
    if header[0] != "run" or len(header) != 5:
        raise FixtureError("expected header run,train_loss,train_acc,val_loss,val_acc", 1)
    try:
        metrics = [canonical_metric(h) for h in header[1:]]
    except UnknownMetricError as exc:
        raise FixtureError(exc.args[0], 1) from None
    if sorted(metrics) != sorted(METRICS):
        raise FixtureError("response header must name each metric once", 1)

    records = []
    for line_no, row in enumerate(reader, start=2):
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 5:
            raise FixtureError(f"expected 5 fields, got {len(row)}", line_no)
        try:
            run = int(row[0])
            values = {m: float(v) for m, v in zip(metrics, row[1:])}
            records.append(ResponseRecord(run, **values))
        except ValueError as exc:
            raise FixtureError(str(exc), line_no) from None
    if len(records) != len(plan.trials):
        raise FixtureError(
            f"plan has {len(plan.trials)} runs but response table has {len(records)}"
        )
    return ResponseTable(plan, tuple(records))


def format_responses(table: ResponseTable) -> str:
    """Inverse of ``parse_responses``; floats use shortest round-trip repr."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["run", "train_loss", "train_acc", "val_loss", "val_acc"])
    for r in table.records:
        writer.writerow(
            [r.run_index, repr(r.train_loss), repr(r.train_accuracy), repr(r.val_loss), repr(r.val_accuracy)]
        )
    return buf.getvalue()


def load_table2_responses(plan: ExperimentPlan) -> ResponseTable:
    return parse_responses(fixture_text("table2_responses.csv"), plan)


def interval_summary_values(metric: str, values: Sequence[float], confidence: float = 0.95) -> IntervalSummary:
    y = np.asarray(values, dtype=np.float64)
    n = y.size
    if n < 2:
        raise InsufficientDataError(f"{metric}: need at least 2 values, got {n}")
    mean = float(y.mean())
    std = float(y.std(ddof=1))
    t = stats.t.ppf(0.5 + confidence / 2, n - 1)
    return IntervalSummary(metric, n, mean, std, float(t * std / math.sqrt(n)))


def interval_summary(table: ResponseTable, metric: str, confidence: float = 0.95) -> IntervalSummary:
    """Mean with a Student-t confidence half-width (n - 1 degrees of freedom)."""
    metric = canonical_metric(metric)
    return interval_summary_values(metric, table.values(metric), confidence)


def _ranks(factors: Sequence[str], delta: dict[str, float]) -> dict[str, int]:
    # stable sort keeps declaration order on ties
    ordered = sorted(factors, key=lambda f: -delta[f])
    return {f: i + 1 for i, f in enumerate(ordered)}


def _level_means(plan: ExperimentPlan, y: np.ndarray) -> dict[str, tuple[tuple[str, float], ...]]:
    out = {}
    for f in plan.factors:
        col = plan.level_column(f.name)
        out[f.name] = tuple(
            (label, float(y[col == i].mean())) for i, label in enumerate(f.levels)
        )
    return out


def main_effects(table: ResponseTable, metric: str) -> MainEffectsTable:
    metric = canonical_metric(metric)
    y = table.values(metric)
    per_factor = _level_means(table.plan, y)
    delta = {}
    for name, pairs in per_factor.items():
        means = [m for _, m in pairs]
        delta[name] = max(means) - min(means)
    factors = tuple(f.name for f in table.plan.factors)
    return MainEffectsTable(metric, factors, per_factor, delta, _ranks(factors, delta), float(y.mean()))


def sn_ratio(values: Sequence[float], objective: str) -> float:
    """Taguchi signal-to-noise ratio in decibels.

    larger-is-better:  -10 log10(mean(1 / y**2))
    smaller-is-better: -10 log10(mean(y**2))
    """
    obj = _objective(objective)
    y = np.asarray(values, dtype=np.float64)
    if y.size == 0:
        raise ValueError("sn_ratio needs at least one value")
    if np.any(~(y > 0)):
        raise ValueError("sn_ratio requires strictly positive values")
    if obj == "max":
        return float(-10.0 * np.log10(np.mean(1.0 / y**2)))
    return float(-10.0 * np.log10(np.mean(y**2)))


def sn_effects(table: ResponseTable, metric: str, objective: str | None = None) -> SnTable:
    """Per-level mean S/N, one ratio per run (single replicate)."""
    metric = canonical_metric(metric)
    obj = _objective(objective or default_objective(metric))
    sn = np.array([sn_ratio([v], obj) for v in table.values(metric)])
    per_factor = _level_means(table.plan, sn)
    delta = {n: max(m for _, m in p) - min(m for _, m in p) for n, p in per_factor.items()}
    factors = tuple(f.name for f in table.plan.factors)
    return SnTable(metric, obj, per_factor, delta, _ranks(factors, delta))


def rank_factors(effects: MainEffectsTable | SnTable) -> list[str]:
    return sorted(effects.rank, key=effects.rank.__getitem__)


def _best_level(pairs: Sequence[tuple[str, float]], obj: str) -> tuple[str, float]:
    best = pairs[0]
    for label, mean in pairs[1:]:
        if (obj == "max" and mean > best[1]) or (obj == "min" and mean < best[1]):
            best = (label, mean)
    return best


def predict_response(effects: MainEffectsTable, levels: dict[str, str]) -> float:
    """Additive model: grand mean plus each chosen level's deviation from it."""
    t = effects.grand_mean
    return t + sum(effects.level_means(f)[levels[f]] - t for f in effects.factors)


def predict_best(table: ResponseTable, metric: str, objective: str | None = None) -> PredictedOptimum:
    metric = canonical_metric(metric)
    obj = _objective(objective or default_objective(metric))
    effects = main_effects(table, metric)
    levels = {f: _best_level(effects.per_factor[f], obj)[0] for f in effects.factors}
    return PredictedOptimum(metric, obj, levels, predict_response(effects, levels), effects.grand_mean)
