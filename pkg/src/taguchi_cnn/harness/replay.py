"""Analysis bundles for a response table: the published fixture or a finished study."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from ..analysis import (
    METRICS,
    IntervalSummary,
    MainEffectsTable,
    PredictedOptimum,
    ResponseTable,
    SnTable,
    canonical_metric,
    interval_summary,
    main_effects,
    parse_responses,
    predict_best,
    sn_effects,
)
from ..doe import fixture_text, load_plan_fixture


@dataclass(frozen=True)
class AnalysisBundle:
    metric: str
    responses: ResponseTable
    intervals: tuple[IntervalSummary, ...]
    effects: dict[str, MainEffectsTable]
    sn: dict[str, SnTable]
    optimum: PredictedOptimum

    def summary(self) -> str:
        eff = self.effects[self.metric]
        lines = [f"metric: {self.metric} ({self.optimum.objective})"]
        for f in eff.factors:
            means = ", ".join(f"{lv}={m:.6f}" for lv, m in eff.per_factor[f])
            lines.append(f"  {f:<12} delta={eff.delta[f]:.6f} rank={eff.rank[f]}  {means}")
        best = ", ".join(f"{k}={v}" for k, v in self.optimum.levels.items())
        lines.append(f"optimum: {best}")
        lines.append(f"predicted: {self.optimum.predicted:.6f} (grand mean {self.optimum.grand_mean:.6f})")
        for s in self.intervals:
            lines.append(f"  {s.metric:<15} mean={s.mean:.6f} 95% CI [{s.lower:.6f}, {s.upper:.6f}]")
        return "\n".join(lines)


def analyze(responses: ResponseTable, metric: str = "val_accuracy", objective: str | None = None) -> AnalysisBundle:
    metric = canonical_metric(metric)
    return AnalysisBundle(
        metric,
        responses,
        tuple(interval_summary(responses, m) for m in METRICS),
        {m: main_effects(responses, m) for m in METRICS},
        _sn_tables(responses),
        predict_best(responses, metric, objective),
    )


def _sn_tables(responses: ResponseTable) -> dict[str, SnTable]:
    # a per-run S/N is undefined for a zero response (e.g. a training loss that hit 0.0);
    # such metrics are left out rather than failing the whole analysis
    tables = {}
    for m in METRICS:
        try:
            tables[m] = sn_effects(responses, m)
        except ValueError:
            pass
    return tables


def replay(plan_text: str | None = None, responses_text: str | None = None,
           metric: str = "val_accuracy", objective: str | None = None) -> AnalysisBundle:
    """Analyse the shipped plan/response fixtures (or caller-supplied ones); no training."""
    plan = load_plan_fixture(plan_text if plan_text is not None else fixture_text("table2_plan.csv"))
    text = responses_text if responses_text is not None else fixture_text("table2_responses.csv")
    return analyze(parse_responses(text, plan), metric, objective)


def emit_bundle(bundle: AnalysisBundle, out_dir: str | Path) -> list[Path]:
    """Report files for the bundle's primary metric plus S/N level means for every metric."""
    from .. import report  # matplotlib is only needed when writing files

    out = Path(out_dir)
    written = report.emit_report(out, bundle.effects[bundle.metric], bundle.intervals, bundle.optimum)
    rows = ["metric,objective,factor,level,sn_db"]
    for m, sn in bundle.sn.items():
        for f, pairs in sn.per_factor.items():
            for label, value in pairs:
                rows.append(f"{m},{sn.objective},{f},{label},{value:.6f}")
    path = out / "sn_effects.csv"
    path.write_text("\n".join(rows) + "\n", encoding="utf-8")
    return written + [path]
