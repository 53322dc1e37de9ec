"""Orthogonal arrays, factor assignment and the experiment-plan fixture."""

from __future__ import annotations

import csv
import io
import itertools
import math
from collections import Counter
from dataclasses import dataclass, field
from importlib import resources
from typing import Iterable, Sequence, TextIO

import numpy as np


class UnsupportedDesignError(ValueError):
    """Raised for an array name outside the supported catalog."""


class AssignmentError(ValueError):
    """Raised when a factor cannot be placed on any free column."""


class FixtureError(ValueError):
    """Raised when a plan or response fixture cannot be parsed."""

    def __init__(self, message: str, row: int | None = None):
        self.row = row
        super().__init__(f"row {row}: {message}" if row is not None else message)


@dataclass(frozen=True)
class Factor:
    name: str
    levels: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "levels", tuple(str(level) for level in self.levels))
        if len(self.levels) < 2:
            raise ValueError(f"factor {self.name!r} needs at least two levels")
        if len(set(self.levels)) != len(self.levels):
            raise ValueError(f"factor {self.name!r} has duplicate level labels")

    def index(self, label: str) -> int:
        try:
            return self.levels.index(label)
        except ValueError:
            raise KeyError(f"unknown level {label!r} for factor {self.name!r}") from None


# Table 1 of the study, with level labels exactly as they appear in the run table.
TABLE1_FACTORS: tuple[Factor, ...] = (
    Factor("layers", ("6", "8", "10", "12")),
    Factor("image_size", ("[100x100]", "[200x200]")),
    Factor("optimizer", ("adam", "sgd")),
    Factor("loss", ("Hinge", "Sqd. Hinge")),
    Factor("activation", ("ReLU", "ReLU6")),
    Factor("filter_size", ("[2x2]", "[3x3]")),
)

# Column letters used by the run-table fixture.
FIXTURE_CODES: dict[str, str] = {
    "A": "layers",
    "B": "image_size",
    "C": "optimizer",
    "D": "loss",
    "E": "activation",
    "F": "filter_size",
}


@dataclass(frozen=True)
class OrthogonalArray:
    """An R x C matrix of zero-based level indices."""

    cells: np.ndarray
    levels_per_column: tuple[int, ...]
    name: str = ""

    def __post_init__(self):
        cells = np.array(self.cells, dtype=np.int64)
        if cells.ndim != 2:
            raise ValueError("cells must be a 2-D matrix")
        if cells.shape[1] != len(self.levels_per_column):
            raise ValueError("levels_per_column length must equal the column count")
        cells.setflags(write=False)
        object.__setattr__(self, "cells", cells)
        object.__setattr__(self, "levels_per_column", tuple(int(q) for q in self.levels_per_column))

    @property
    def rows(self) -> int:
        return self.cells.shape[0]

    @property
    def columns(self) -> int:
        return self.cells.shape[1]

    def with_cell(self, row: int, column: int, level: int) -> "OrthogonalArray":
        """Copy of the array with one cell replaced (used for mutation tests)."""
        cells = self.cells.copy()
        cells[row, column] = level
        return OrthogonalArray(cells, self.levels_per_column, self.name)


@dataclass(frozen=True)
class Violation:
    kind: str  # "balance" or "pair"
    columns: tuple[int, ...]
    levels: tuple[int, ...]
    count: int
    expected: float


@dataclass(frozen=True)
class ValidationReport:
    passed: bool
    violations: tuple[Violation, ...] = ()


@dataclass(frozen=True)
class TrialConfig:
    run_index: int
    settings: dict[str, str]


@dataclass(frozen=True)
class ExperimentPlan:
    array: OrthogonalArray
    factors: tuple[Factor, ...]
    assignment: dict[str, int]
    trials: tuple[TrialConfig, ...] = field(default=())

    def factor(self, name: str) -> Factor:
        for f in self.factors:
            if f.name == name:
                return f
        raise KeyError(f"unknown factor {name!r}")

    def level_column(self, name: str) -> np.ndarray:
        """Level indices of factor ``name`` across all runs."""
        return self.array.cells[:, self.assignment[name]]


def _two_level_array(k: int) -> np.ndarray:
    """Standard Taguchi 2-level array with 2**k runs and 2**k - 1 columns.

    Column j (1-based) takes the parity of the row bits selected by j, with the
    first basic column on the most significant row bit, which yields the usual
    published column order (1, 2, 1x2, 3, 1x3, ...).
    """
    n = 2**k
    rows = np.arange(n)
    cells = np.empty((n, n - 1), dtype=np.int64)
    for j in range(1, n):
        mask = int(format(j, f"0{k}b")[::-1], 2)
        cells[:, j - 1] = [bin(r & mask).count("1") % 2 for r in rows]
    return cells


def _l16_mixed() -> np.ndarray:
    base = _two_level_array(4)
    # columns 1 and 2 plus their interaction column 3 become one 4-level column
    merged = 2 * base[:, 0] + base[:, 1]
    return np.column_stack([merged, base[:, 3:]])


STANDARD_ARRAYS = ("L4(2^3)", "L8(2^7)", "L16(2^15)", "L16_mixed(4^1·2^12)")

_ALIASES = {
    "L4": "L4(2^3)",
    "L8": "L8(2^7)",
    "L16": "L16(2^15)",
    "L16_mixed": "L16_mixed(4^1·2^12)",
    "L16_MIXED": "L16_mixed(4^1·2^12)",
    "L16_mixed(4^1*2^12)": "L16_mixed(4^1·2^12)",
    "L16(4^1 2^12)": "L16_mixed(4^1·2^12)",
}


def build_standard_array(name: str) -> OrthogonalArray:
    """Build one of the supported Taguchi arrays.

    Accepts the full names in ``STANDARD_ARRAYS`` or the short forms
    ``L4``, ``L8``, ``L16`` and ``L16_mixed``.
    """
    canonical = _ALIASES.get(name, name)
    if canonical == "L4(2^3)":
        cells = _two_level_array(2)
    elif canonical == "L8(2^7)":
        cells = _two_level_array(3)
    elif canonical == "L16(2^15)":
        cells = _two_level_array(4)
    elif canonical == "L16_mixed(4^1·2^12)":
        cells = _l16_mixed()
        return OrthogonalArray(cells, (4,) + (2,) * 12, canonical)
    else:
        raise UnsupportedDesignError(
            f"unsupported design {name!r}; choose one of {', '.join(STANDARD_ARRAYS)}"
        )
    return OrthogonalArray(cells, (2,) * cells.shape[1], canonical)


def verify_orthogonality(array: OrthogonalArray) -> ValidationReport:
    """Exact balance and pairwise-orthogonality check by counting."""
    cells = array.cells
    rows = array.rows
    q = array.levels_per_column
    violations: list[Violation] = []

    for c in range(array.columns):
        counts = Counter(cells[:, c].tolist())
        expected = rows / q[c]
        for level in range(q[c]):
            n = counts.get(level, 0)
            if n != expected:
                violations.append(Violation("balance", (c,), (level,), n, expected))
        for level in sorted(set(counts) - set(range(q[c]))):
            violations.append(Violation("balance", (c,), (level,), counts[level], 0))

    for a, b in itertools.combinations(range(array.columns), 2):
        counts = Counter(zip(cells[:, a].tolist(), cells[:, b].tolist()))
        expected = rows / (q[a] * q[b])
        for pair in itertools.product(range(q[a]), range(q[b])):
            n = counts.get(pair, 0)
            if n != expected:
                violations.append(Violation("pair", (a, b), pair, n, expected))

    return ValidationReport(not violations, tuple(violations))


def _materialize(array: OrthogonalArray, factors: Sequence[Factor], assignment: dict[str, int]):
    trials = []
    for r in range(array.rows):
        settings = {f.name: f.levels[array.cells[r, assignment[f.name]]] for f in factors}
        trials.append(TrialConfig(r + 1, settings))
    return tuple(trials)


def assign_factors(array: OrthogonalArray, factors: Sequence[Factor]) -> ExperimentPlan:
    """Place factors, in declaration order, on the lowest-index free column with
    a matching level count."""
    names = [f.name for f in factors]
    if len(set(names)) != len(names):
        raise AssignmentError("factor names must be unique")
    used: set[int] = set()
    assignment: dict[str, int] = {}
    for f in factors:
        for c, q in enumerate(array.levels_per_column):
            if c not in used and q == len(f.levels):
                assignment[f.name] = c
                used.add(c)
                break
        else:
            raise AssignmentError(
                f"no free {len(f.levels)}-level column for factor {f.name!r} in {array.name or 'array'}"
            )
    factors = tuple(factors)
    return ExperimentPlan(array, factors, assignment, _materialize(array, factors, assignment))


def full_factorial_size(factors: Iterable[Factor]) -> int:
    factors = list(factors)
    if not factors:
        raise ValueError("need at least one factor")
    return math.prod(len(f.levels) for f in factors)


def load_plan_fixture(
    source: TextIO | str,
    factors: Sequence[Factor] = TABLE1_FACTORS,
    expected_rows: int = 16,
) -> ExperimentPlan:
    """Parse a ``run,A,B,C,D,E,F`` plan table into an ExperimentPlan.

    ``source`` is an open text stream or the table text itself.
    """
    text = source if isinstance(source, str) else source.read()
    reader = csv.reader(io.StringIO(text))
    try:
        header = [h.strip() for h in next(reader)]
    except StopIteration:
        raise FixtureError("empty plan fixture") from None
    codes = list(FIXTURE_CODES)[: len(factors)]
    if header != ["run", *codes]:
        raise FixtureError(f"expected header {','.join(['run', *codes])}, got {','.join(header)}", 1)

    rows = []
    for line_no, row in enumerate(reader, start=2):
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) != len(header):
            raise FixtureError(f"expected {len(header)} fields, got {len(row)}", line_no)
        try:
            run = int(row[0])
        except ValueError:
            raise FixtureError(f"bad run index {row[0]!r}", line_no) from None
        levels = []
        for f, label in zip(factors, row[1:]):
            try:
                levels.append(f.index(label.strip()))
            except KeyError as exc:
                raise FixtureError(exc.args[0], line_no) from None
        rows.append((run, levels, line_no))

    if len(rows) != expected_rows:
        raise FixtureError(f"expected {expected_rows} runs, found {len(rows)}")
    for i, (run, _, line_no) in enumerate(rows, start=1):
        if run != i:
            raise FixtureError(f"run index {run} out of sequence (expected {i})", line_no)

    array = OrthogonalArray(
        np.array([levels for _, levels, _ in rows]),
        tuple(len(f.levels) for f in factors),
        "fixture",
    )
    factors = tuple(factors)
    assignment = {f.name: c for c, f in enumerate(factors)}
    return ExperimentPlan(array, factors, assignment, _materialize(array, factors, assignment))


def dump_plan(plan: ExperimentPlan) -> str:
    """Render a plan in the fixture format (inverse of ``load_plan_fixture``)."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    codes = list(FIXTURE_CODES)[: len(plan.factors)]
    writer.writerow(["run", *codes])
    for t in plan.trials:
        writer.writerow([t.run_index, *(t.settings[f.name] for f in plan.factors)])
    return buf.getvalue()


def fixture_text(name: str) -> str:
    return resources.files("taguchi_cnn.data").joinpath(name).read_text(encoding="utf-8")


def load_table2_plan() -> ExperimentPlan:
    """The 16-run plan published with the study (shipped fixture)."""
    return load_plan_fixture(fixture_text("table2_plan.csv"))


def table1_plan() -> ExperimentPlan:
    """Table 1 factors assigned to the generated mixed L16 array."""
    return assign_factors(build_standard_array("L16_mixed"), TABLE1_FACTORS)
