"""Study configuration and its YAML file format."""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from ..doe import TABLE1_FACTORS, Factor, UnsupportedDesignError, build_standard_array
from ..synthdata import DatasetSpec


class ConfigError(ValueError):
    pass


FACTOR_NAMES = tuple(f.name for f in TABLE1_FACTORS)
PRECISIONS = ("float32", "float64")

# image_size level -> trial input pixels. Desk scale keeps the 1:2 ratio of the published levels.
DESK_IMAGE_SIZES = {"[100x100]": 16, "[200x200]": 32}
FULL_IMAGE_SIZES = {"[100x100]": 100, "[200x200]": 200}


@dataclass(frozen=True)
class StudyConfig:
    factors: tuple[Factor, ...] = TABLE1_FACTORS
    dataset: DatasetSpec = field(default_factory=DatasetSpec)
    epochs: int = 30
    batch_size: int = 32
    learning_rate: float = 1e-3
    out: Path = Path("runs/study")
    seed: int = 0
    parallel: int = 1
    array: str = "L16_mixed"
    image_sizes: dict[str, int] = field(default_factory=lambda: dict(DESK_IMAGE_SIZES))
    precision: str = "float32"
    checkpoints: bool = True

    def __post_init__(self):
        object.__setattr__(self, "out", Path(self.out))
        object.__setattr__(self, "factors", tuple(self.factors))
        known = {f.name: f for f in TABLE1_FACTORS}
        for f in self.factors:
            if f.name not in known:
                raise ConfigError(f"unknown factor {f.name!r}; expected one of {', '.join(FACTOR_NAMES)}")
            extra = [lv for lv in f.levels if lv not in known[f.name].levels]
            if extra:
                raise ConfigError(f"factor {f.name}: levels {extra} are not among {list(known[f.name].levels)}")
        if len({f.name for f in self.factors}) != len(self.factors):
            raise ConfigError("factor listed twice")
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError("epochs and batch_size must be >= 1")
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be positive")
        if self.parallel < 1:
            raise ConfigError("parallel must be >= 1")
        try:
            build_standard_array(self.array)
        except UnsupportedDesignError as exc:
            raise ConfigError(str(exc)) from None
        if self.precision not in PRECISIONS:
            raise ConfigError(f"precision must be one of {PRECISIONS}")
        for label in self.factor("image_size").levels if self.has_factor("image_size") else ():
            if label not in self.image_sizes:
                raise ConfigError(f"image_sizes has no entry for level {label}")
        if any(int(v) < 1 for v in self.image_sizes.values()):
            raise ConfigError("image sizes must be positive")

    def has_factor(self, name: str) -> bool:
        return any(f.name == name for f in self.factors)

    def factor(self, name: str) -> Factor:
        for f in self.factors:
            if f.name == name:
                return f
        raise KeyError(name)

    def fingerprint(self) -> str:
        """Hash of everything that influences trial outcomes (not out/parallel)."""
        payload = to_dict(self)
        for key in ("out", "parallel"):
            payload.pop(key)
        blob = json.dumps(payload, sort_keys=True).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()[:16]


def full_scale(**overrides: Any) -> StudyConfig:
    """Published budget: 264 images, 100/200 pixel inputs, 500 epochs, double precision."""
    base = dict(
        dataset=DatasetSpec(image_size=200, per_class=132),
        epochs=500,
        image_sizes=dict(FULL_IMAGE_SIZES),
        precision="float64",
        out=Path("runs/full"),
    )
    base.update(overrides)
    return StudyConfig(**base)


def to_dict(study: StudyConfig) -> dict[str, Any]:
    ds = study.dataset
    return {
        "seed": study.seed,
        "out": str(study.out),
        "parallel": study.parallel,
        "array": study.array,
        "factors": {f.name: list(f.levels) for f in study.factors},
        "image_sizes": dict(study.image_sizes),
        "training": {
            "epochs": study.epochs,
            "batch_size": study.batch_size,
            "learning_rate": study.learning_rate,
            "precision": study.precision,
            "checkpoints": study.checkpoints,
        },
        "dataset": {
            "image_size": ds.image_size,
            "per_class": ds.per_class,
            "seed": ds.seed,
            "defect_mix": dict(ds.defect_mix),
            "brightness_range": list(ds.brightness_range),
            "scale_range": list(ds.scale_range),
            "split_ratio": ds.split_ratio,
        },
    }


_HEADER = """\
# Taguchi CNN study configuration.
#
# seed         study seed; trial r trains with a seed derived from (seed, r)
# out          output directory (plan.csv, trials/, checkpoints/, responses.csv, report/)
# parallel     number of trials run at once (1 = serial, byte-deterministic)
# array        orthogonal array: L4, L8, L16, L16_mixed
# factors      factor -> level labels; names and labels come from the published Table 1
# image_sizes  image_size level -> input pixels used when training that trial
# training     per-trial budget: epochs, batch_size, learning_rate (SGD and Adam),
#              precision (float32 | float64), checkpoints (save best-epoch weights)
# dataset      synthetic data: image_size (render size, >= 32), per_class, seed,
#              defect_mix (scratch/dent/crack/wrinkle shares summing to 1),
#              brightness_range and scale_range (augmentation), split_ratio (train share)
"""


def dump_config(study: StudyConfig) -> str:
    return _HEADER + yaml.safe_dump(to_dict(study), sort_keys=False, default_flow_style=None)


def from_dict(data: dict[str, Any] | None) -> StudyConfig:
    data = dict(data or {})
    known = {"seed", "out", "parallel", "array", "factors", "image_sizes", "training", "dataset"}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
    kwargs: dict[str, Any] = {}
    for key in ("seed", "parallel"):
        if key in data:
            kwargs[key] = int(data[key])
    if "out" in data:
        kwargs["out"] = Path(data["out"])
    if "array" in data:
        kwargs["array"] = str(data["array"])
    try:
        if "factors" in data:
            kwargs["factors"] = tuple(Factor(str(n), tuple(str(lv) for lv in lvs))
                                      for n, lvs in data["factors"].items())
        if "image_sizes" in data:
            kwargs["image_sizes"] = {str(k): int(v) for k, v in data["image_sizes"].items()}
    except (AttributeError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad factors/image_sizes section: {exc}") from None

    training = dict(data.get("training") or {})
    allowed = {"epochs", "batch_size", "learning_rate", "precision", "checkpoints"}
    if set(training) - allowed:
        raise ConfigError(f"unknown training keys: {', '.join(sorted(set(training) - allowed))}")
    for key, cast in (("epochs", int), ("batch_size", int), ("learning_rate", float), ("precision", str),
                      ("checkpoints", bool)):
        if key in training:
            kwargs[key] = cast(training[key])

    ds = dict(data.get("dataset") or {})
    fields = {f.name for f in dataclasses.fields(DatasetSpec)}
    if set(ds) - fields:
        raise ConfigError(f"unknown dataset keys: {', '.join(sorted(set(ds) - fields))}")
    for key in ("brightness_range", "scale_range"):
        if key in ds:
            ds[key] = tuple(float(v) for v in ds[key])
    ds.setdefault("seed", kwargs.get("seed", 0))
    try:
        kwargs["dataset"] = DatasetSpec(**ds)
        return StudyConfig(**kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def load_config(path: str | Path) -> StudyConfig:
    try:
        data = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: {exc}") from None
    if data is not None and not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a mapping at the top level")
    return from_dict(data)


def with_overrides(study: StudyConfig, **changes: Any) -> StudyConfig:
    """Apply CLI-style overrides; ``seed`` also reseeds the dataset."""
    changes = {k: v for k, v in changes.items() if v is not None}
    if "seed" in changes:
        changes["dataset"] = dataclasses.replace(study.dataset, seed=int(changes["seed"]))
    try:
        return dataclasses.replace(study, **changes)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None
