"""Write analysis artifacts to disk: CSV tables plus SVG main-effect and interval plots."""

from __future__ import annotations

import csv
import io
from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .analysis import IntervalSummary, MainEffectsTable, PredictedOptimum  # noqa: E402

# fixed salt and no timestamp keep SVG output byte-stable
_SVG_RC = {"svg.hashsalt": "taguchi-cnn", "svg.fonttype": "none", "font.family": "DejaVu Sans"}
_SVG_META = {"Date": None, "Creator": None}


def _csv(rows: Sequence[Sequence[object]]) -> str:
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(rows)
    return buf.getvalue()


def _fmt(x: float) -> str:
    return f"{x:.6f}"


def effects_text(effects: MainEffectsTable) -> str:
    rows: list[list[object]] = [["metric", "factor", "level", "mean"]]
    for f in effects.factors:
        for label, mean in effects.per_factor[f]:
            rows.append([effects.metric, f, label, _fmt(mean)])
    rows.append([])
    rows.append(["metric", "factor", "delta", "rank"])
    for f in effects.factors:
        rows.append([effects.metric, f, _fmt(effects.delta[f]), effects.rank[f]])
    return _csv(rows)


def intervals_text(intervals: Sequence[IntervalSummary]) -> str:
    rows: list[list[object]] = [["metric", "n", "mean", "std", "half_width", "lower", "upper"]]
    for s in intervals:
        rows.append([s.metric, s.n, _fmt(s.mean), _fmt(s.std), _fmt(s.half_width), _fmt(s.lower), _fmt(s.upper)])
    return _csv(rows)


def optimum_text(optimum: PredictedOptimum) -> str:
    rows: list[list[object]] = [["metric", "objective", "factor", "level"]]
    for f, label in optimum.levels.items():
        rows.append([optimum.metric, optimum.objective, f, label])
    rows.append([])
    rows.append(["grand_mean", "predicted"])
    rows.append([_fmt(optimum.grand_mean), _fmt(optimum.predicted)])
    return _csv(rows)


def _save_svg(fig, path: Path) -> None:
    fig.savefig(path, format="svg", metadata=_SVG_META)
    plt.close(fig)


def plot_main_effects(effects: MainEffectsTable, path: Path) -> None:
    with plt.rc_context(_SVG_RC):
        n = len(effects.factors)
        fig, axes = plt.subplots(1, n, figsize=(2.4 * n, 3.2), sharey=True)
        if n == 1:
            axes = [axes]
        for ax, f in zip(axes, effects.factors):
            labels = [label for label, _ in effects.per_factor[f]]
            means = [m for _, m in effects.per_factor[f]]
            ax.plot(range(len(labels)), means, "o-", color="tab:blue")
            ax.axhline(effects.grand_mean, color="gray", linestyle="--", linewidth=0.8)
            ax.set_xticks(range(len(labels)))
            ax.set_xticklabels(labels, rotation=30, fontsize=7)
            ax.set_title(f"{f} (rank {effects.rank[f]})", fontsize=8)
            ax.grid(True, alpha=0.3)
        axes[0].set_ylabel(f"mean of {effects.metric}")
        fig.tight_layout()
        _save_svg(fig, path)


def plot_intervals(intervals: Sequence[IntervalSummary], path: Path) -> None:
    with plt.rc_context(_SVG_RC):
        fig, ax = plt.subplots(figsize=(5, 3.2))
        x = range(len(intervals))
        ax.errorbar(
            list(x),
            [s.mean for s in intervals],
            yerr=[s.half_width for s in intervals],
            fmt="o",
            capsize=4,
            color="tab:blue",
        )
        ax.set_xticks(list(x))
        ax.set_xticklabels([s.metric for s in intervals], rotation=20, fontsize=8)
        ax.set_ylabel("mean with 95% CI")
        ax.grid(True, alpha=0.3)
        fig.tight_layout()
        _save_svg(fig, path)


def emit_report(
    out_dir: str | Path,
    effects: MainEffectsTable | None = None,
    intervals: Sequence[IntervalSummary] = (),
    optimum: PredictedOptimum | None = None,
) -> list[Path]:
    """Write whatever artifacts are given; returns the written paths.

    Raises OSError when ``out_dir`` cannot be created or written.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: list[Path] = []

    def put(name: str, text: str) -> None:
        p = out / name
        p.write_text(text, encoding="utf-8")
        written.append(p)

    if effects is not None:
        put("main_effects.csv", effects_text(effects))
        p = out / "main_effects.svg"
        plot_main_effects(effects, p)
        written.append(p)
    if intervals:
        put("intervals.csv", intervals_text(intervals))
        p = out / "intervals.svg"
        plot_intervals(intervals, p)
        written.append(p)
    if optimum is not None:
        put("optimum.csv", optimum_text(optimum))
    return written
