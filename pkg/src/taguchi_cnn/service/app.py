"""FastAPI application. Long-running studies stay on the command line; these endpoints are fast."""

from __future__ import annotations

import numpy as np
from fastapi import FastAPI, HTTPException

from .. import __version__
from ..analysis import UnknownMetricError, sn_ratio
from ..doe import (
    TABLE1_FACTORS,
    AssignmentError,
    Factor,
    FixtureError,
    OrthogonalArray,
    TrialConfig,
    UnsupportedDesignError,
    assign_factors,
    build_standard_array,
    dump_plan,
    verify_orthogonality,
)
from ..harness import AnalysisBundle, StudyConfig, TrialConfigError, materialize_trial, full_scale, replay
from ..nn import model
from ..nn.optim import Adam
from . import schemas

app = FastAPI(title="taguchi-cnn", version=__version__)


@app.get("/health")
def health() -> dict[str, str]:
    return {"status": "ok", "version": __version__}


@app.post("/plan", response_model=schemas.PlanResponse)
def plan(req: schemas.PlanRequest) -> schemas.PlanResponse:
    try:
        factors = [Factor(f.name, tuple(f.levels)) for f in req.factors] if req.factors else list(TABLE1_FACTORS)
        p = assign_factors(build_standard_array(req.array), factors)
    except (UnsupportedDesignError, AssignmentError, ValueError) as exc:
        raise HTTPException(422, str(exc)) from None
    return schemas.PlanResponse(
        array=p.array.name,
        assignment=p.assignment,
        trials=[schemas.Trial(run=t.run_index, settings=t.settings) for t in p.trials],
        plan_csv=dump_plan(p),
    )


@app.post("/orthogonality", response_model=schemas.OrthogonalityResponse)
def orthogonality(req: schemas.OrthogonalityRequest) -> schemas.OrthogonalityResponse:
    cells = np.asarray(req.cells)
    if cells.ndim != 2 or cells.size == 0:
        raise HTTPException(422, "cells must be a non-empty rectangular matrix")
    levels = req.levels_per_column or [int(cells[:, c].max()) + 1 for c in range(cells.shape[1])]
    try:
        report = verify_orthogonality(OrthogonalArray(cells, tuple(levels), "request"))
    except ValueError as exc:
        raise HTTPException(422, str(exc)) from None
    return schemas.OrthogonalityResponse(
        passed=report.passed,
        violations=[
            schemas.ViolationOut(kind=v.kind, columns=list(v.columns), levels=list(v.levels), count=v.count,
                                 expected=v.expected)
            for v in report.violations
        ],
    )


def _bundle_out(bundle: AnalysisBundle) -> schemas.AnalyzeResponse:
    eff = bundle.effects[bundle.metric]
    return schemas.AnalyzeResponse(
        metric=bundle.metric,
        effects=[
            schemas.FactorEffect(
                factor=f,
                levels=[schemas.LevelMean(level=lv, mean=m) for lv, m in eff.per_factor[f]],
                delta=eff.delta[f],
                rank=eff.rank[f],
            )
            for f in eff.factors
        ],
        intervals=[
            schemas.Interval(metric=s.metric, n=s.n, mean=s.mean, std=s.std, lower=s.lower, upper=s.upper)
            for s in bundle.intervals
        ],
        optimum=schemas.Optimum(**{k: getattr(bundle.optimum, k) for k in schemas.Optimum.model_fields}),
    )


@app.get("/replay", response_model=schemas.AnalyzeResponse)
def replay_fixture(metric: str = "val_accuracy") -> schemas.AnalyzeResponse:
    return analyze(schemas.AnalyzeRequest(metric=metric))


@app.post("/analyze", response_model=schemas.AnalyzeResponse)
def analyze(req: schemas.AnalyzeRequest) -> schemas.AnalyzeResponse:
    try:
        bundle = replay(req.plan_csv, req.responses_csv, req.metric, req.objective)
    except UnknownMetricError as exc:
        raise HTTPException(422, exc.args[0]) from None
    except (FixtureError, ValueError) as exc:
        raise HTTPException(422, str(exc)) from None
    return _bundle_out(bundle)


@app.post("/materialize", response_model=schemas.MaterializeResponse)
def materialize(req: schemas.MaterializeRequest) -> schemas.MaterializeResponse:
    study = StudyConfig() if req.scale == "desk" else full_scale()
    try:
        mt = materialize_trial(TrialConfig(0, dict(req.settings)), study)
    except TrialConfigError as exc:
        raise HTTPException(422, str(exc)) from None
    rows = model.summary(mt.spec)
    opt = mt.training.optimizer
    return schemas.MaterializeResponse(
        input_shape=list(mt.spec.input_shape),
        layers=[schemas.LayerRow(name=n, type=t, output_shape=list(s), params=p) for n, t, s, p in rows],
        total_params=sum(r[3] for r in rows),
        optimizer="adam" if isinstance(opt, Adam) else "sgd",
        learning_rate=opt.lr,
        loss=mt.training.loss,
        epochs=mt.training.epochs,
        batch_size=mt.training.batch_size,
        seed=mt.training.seed,
    )


@app.post("/sn", response_model=schemas.SnResponse)
def sn(req: schemas.SnRequest) -> schemas.SnResponse:
    try:
        return schemas.SnResponse(sn_db=sn_ratio(req.values, req.objective))
    except ValueError as exc:
        raise HTTPException(422, str(exc)) from None
