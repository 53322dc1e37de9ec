"""Study orchestration: configuration, trial execution, confirmation and fixture replay."""

from .config import (
    DESK_IMAGE_SIZES,
    FULL_IMAGE_SIZES,
    ConfigError,
    StudyConfig,
    dump_config,
    from_dict,
    load_config,
    full_scale,
    with_overrides,
)
from .replay import AnalysisBundle, analyze, emit_bundle, replay
from .trials import (
    ConfirmResult,
    MaterializedTrial,
    StudyError,
    StudyResult,
    TrialConfigError,
    TrialResult,
    confirm,
    execute_trial,
    materialize_trial,
    run_study,
    study_plan,
    trial_seed,
)

__all__ = [
    "DESK_IMAGE_SIZES", "FULL_IMAGE_SIZES", "ConfigError", "StudyConfig", "dump_config", "from_dict",
    "load_config", "full_scale", "with_overrides", "AnalysisBundle", "analyze", "emit_bundle", "replay",
    "ConfirmResult", "MaterializedTrial", "StudyError", "StudyResult", "TrialConfigError", "TrialResult",
    "confirm", "execute_trial", "materialize_trial", "run_study", "study_plan", "trial_seed",
]
