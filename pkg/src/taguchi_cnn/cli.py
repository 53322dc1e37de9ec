"""Command-line interface.

Exit codes: 0 success, 1 usage error, 2 fixture/data error, 3 trial failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .analysis import InsufficientDataError, UnknownMetricError, parse_responses
from .doe import FixtureError, dump_plan
from .harness import (
    ConfigError,
    StudyConfig,
    TrialConfigError,
    analyze,
    confirm,
    dump_config,
    emit_bundle,
    load_config,
    replay,
    run_study,
    study_plan,
    with_overrides,
)

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_TRIAL = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _study(args) -> StudyConfig:
    study = load_config(args.config) if getattr(args, "config", None) else StudyConfig()
    return with_overrides(
        study,
        out=Path(args.out) if getattr(args, "out", None) else None,
        seed=getattr(args, "seed", None),
        epochs=getattr(args, "epochs", None),
        parallel=getattr(args, "parallel", None),
    )


def _progress(res) -> None:
    if res.ok:
        m = res.metrics
        print(f"run {res.trial.run_index:2d}  val_acc={m.val_accuracy:.4f}  val_loss={m.val_loss:.4f}  "
              f"best_epoch={res.best_epoch}  {res.seconds:.1f}s", flush=True)
    else:
        print(f"run {res.trial.run_index:2d}  FAILED: {res.error}", flush=True)


def _load_responses(out: Path, responses: str | None):
    """Response table for a study directory; the plan is rebuilt from its saved config."""
    resp_path = Path(responses) if responses else out / "responses.csv"
    if not resp_path.exists():
        raise FileNotFoundError(f"no response table at {resp_path}; run the study first")
    cfg = out / "config.yaml"
    study = load_config(cfg) if cfg.exists() else StudyConfig()
    return parse_responses(resp_path.read_text(encoding="utf-8"), study_plan(study))


def cmd_plan(args) -> int:
    study = _study(args)
    text = dump_plan(study_plan(study))
    if args.out:
        study.out.mkdir(parents=True, exist_ok=True)
        (study.out / "plan.csv").write_text(text, encoding="utf-8")
        (study.out / "config.yaml").write_text(dump_config(study), encoding="utf-8")
        print(f"wrote {study.out / 'plan.csv'}")
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_config(args) -> int:
    sys.stdout.write(dump_config(_study(args)))
    return EXIT_OK


def cmd_run(args) -> int:
    study = _study(args)
    result = run_study(study, progress=_progress)
    skipped = len(result.trials) - len(result.executed)
    print(f"{len(result.executed)} trial(s) executed, {skipped} reused from {study.out / 'trials'}")
    if result.failures:
        for f in result.failures:
            print(f"run {f.trial.run_index} failed: {f.error}", file=sys.stderr)
        return EXIT_TRIAL
    print(f"responses: {study.out / 'responses.csv'}")
    return EXIT_OK


def cmd_analyze(args) -> int:
    out = Path(args.out or StudyConfig().out)
    table = _load_responses(out, args.responses)
    bundle = analyze(table, args.metric, args.objective)
    print(bundle.summary())
    emit_bundle(bundle, out / "report")
    print(f"report: {out / 'report'}")
    return EXIT_OK


def cmd_confirm(args) -> int:
    study = _study(args)
    table = _load_responses(study.out, args.responses)
    bundle = analyze(table, args.metric, args.objective)
    result = confirm(study, bundle.optimum, table)
    print("levels: " + ", ".join(f"{k}={v}" for k, v in bundle.optimum.levels.items()))
    if not result.trial.ok:
        print(f"confirmation run failed: {result.trial.error}", file=sys.stderr)
        return EXIT_TRIAL
    print(f"{'metric':<15} {'predicted':>10} {'observed':>10}")
    for metric, pred, obs in result.rows():
        p = f"{pred:10.4f}" if pred is not None else f"{'-':>10}"
        print(f"{metric:<15} {p} {obs:10.4f}")
    return EXIT_OK


def cmd_replay(args) -> int:
    plan_text = Path(args.plan).read_text(encoding="utf-8") if args.plan else None
    resp_text = Path(args.responses).read_text(encoding="utf-8") if args.responses else None
    bundle = replay(plan_text, resp_text, args.metric, args.objective)
    print(bundle.summary())
    if args.out:
        emit_bundle(bundle, Path(args.out))
        print(f"report: {args.out}")
    return EXIT_OK


def cmd_dataset(args) -> int:
    from .synthdata import build_dataset, export_dataset

    study = _study(args)
    if not args.out:
        raise UsageError("dataset needs --out")
    manifest = export_dataset(build_dataset(study.dataset), Path(args.out))
    print(f"wrote {manifest}")
    return EXIT_OK


def cmd_serve(args) -> int:
    import uvicorn

    uvicorn.run("taguchi_cnn.service.app:app", host=args.host, port=args.port)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="taguchi-cnn", description="Taguchi design-of-experiments toolkit for a small CNN.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, study=True, metric=False):
        p.add_argument("--out", help="output directory")
        if study:
            p.add_argument("--config", help="study configuration file (YAML)")
            p.add_argument("--seed", type=int)
            p.add_argument("--epochs", type=int)
            p.add_argument("--parallel", type=int)
        if metric:
            p.add_argument("--metric", default="val_accuracy")
            p.add_argument("--objective", choices=["max", "min"])
        return p

    common(sub.add_parser("plan", help="emit the experiment plan")).set_defaults(func=cmd_plan)
    common(sub.add_parser("config", help="print the resolved configuration")).set_defaults(func=cmd_config)
    common(sub.add_parser("run", help="execute (or resume) the study")).set_defaults(func=cmd_run)
    p = common(sub.add_parser("analyze", help="analyse a response table"), study=False, metric=True)
    p.add_argument("responses", nargs="?", help="response CSV (default: <out>/responses.csv)")
    p.set_defaults(func=cmd_analyze)
    p = common(sub.add_parser("confirm", help="train the predicted optimum"), metric=True)
    p.add_argument("--responses", help="response CSV (default: <out>/responses.csv)")
    p.set_defaults(func=cmd_confirm)
    p = common(sub.add_parser("replay", help="analyse the published plan and responses"), study=False, metric=True)
    p.add_argument("--plan", help="plan CSV (default: shipped fixture)")
    p.add_argument("--responses", help="response CSV (default: shipped fixture)")
    p.set_defaults(func=cmd_replay)
    common(sub.add_parser("dataset", help="generate and export the synthetic dataset")).set_defaults(func=cmd_dataset)
    p = sub.add_parser("serve", help="run the HTTP service")
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8000)
    p.set_defaults(func=cmd_serve)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, ConfigError, UnknownMetricError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) else exc
        print(f"error: {msg}", file=sys.stderr)
        return EXIT_USAGE
    except (FixtureError, FileNotFoundError, InsufficientDataError, TrialConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
