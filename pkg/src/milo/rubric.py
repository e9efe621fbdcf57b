"""Declarative quality rubrics and their two scoring functions, plus the
PASSED/REDO gate.

Two rubric shapes are supported:

* point-deduction: error categories with penalties subtracted from a max
  score, normalized into [0, 1];
* grading-scale: weighted criteria graded on an ordered level scale, each
  level carrying an explicit credit in [0, 1].

A k-level scale with credit(level j) = j/k is the conventional default and
``uniform_credits`` builds it; credits are kept explicit per level because
deployed rubrics do not always use that mapping (binary Good-or-nothing
scales exist in the fixture set).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from milo.errors import MiloError


class RubricMode(str, Enum):
    POINT_DEDUCTION = "point_deduction"
    GRADING_SCALE = "grading_scale"


class QAStatus(str, Enum):
    PASSED = "PASSED"
    REDO = "REDO"


class RubricError(MiloError):
    pass


class UnknownCategory(RubricError):
    def __init__(self, name: str):
        super().__init__(f"unknown error category: {name!r}")
        self.name = name


class MissingGrade(RubricError):
    def __init__(self, criterion: str):
        super().__init__(f"missing grade for criterion: {criterion!r}")
        self.criterion = criterion


class UnknownLevel(RubricError):
    def __init__(self, criterion: str, level: str):
        super().__init__(f"unknown level {level!r} for criterion {criterion!r}")
        self.criterion = criterion
        self.level = level


class AllNA(RubricError):
    def __init__(self):
        super().__init__("every criterion graded N/A; score is undefined")


@dataclass(frozen=True)
class ErrorCategory:
    name: str
    definition: str
    penalty: float

    def __post_init__(self):
        if self.penalty < 0:
            raise RubricError(f"penalty for {self.name!r} must be >= 0")


@dataclass(frozen=True)
class GradeLevel:
    name: str
    definition: str
    credit: float

    def __post_init__(self):
        if not 0.0 <= self.credit <= 1.0:
            raise RubricError(f"credit for level {self.name!r} must be in [0, 1]")


@dataclass(frozen=True)
class Criterion:
    name: str
    definition: str
    weight: float
    levels: tuple  # ordered worst-to-best; credits nondecreasing
    na_level: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "levels", tuple(self.levels))
        if self.weight < 0:
            raise RubricError(f"weight for {self.name!r} must be >= 0")
        names = [lv.name for lv in self.levels]
        if len(set(names)) != len(names):
            raise RubricError(f"duplicate level names in criterion {self.name!r}")
        credits = [lv.credit for lv in self.levels]
        if any(a > b for a, b in zip(credits, credits[1:])):
            raise RubricError(f"level credits must be nondecreasing in {self.name!r}")
        if self.na_level is not None and self.na_level in names:
            raise RubricError(f"N/A level name collides with a graded level in {self.name!r}")

    def level_names(self, include_na: bool = True) -> list[str]:
        names = [lv.name for lv in self.levels]
        if include_na and self.na_level is not None:
            names = [self.na_level] + names
        return names

    def credit_for(self, level_name: str) -> float | None:
        """Credit of a graded level, or None for the N/A level."""
        if level_name == self.na_level:
            return None
        for lv in self.levels:
            if lv.name == level_name:
                return lv.credit
        raise UnknownLevel(self.name, level_name)


@dataclass(frozen=True)
class PointDeductionRubric:
    max_score: float
    categories: tuple
    mode: RubricMode = field(default=RubricMode.POINT_DEDUCTION, init=False)

    def __post_init__(self):
        object.__setattr__(self, "categories", tuple(self.categories))
        if self.max_score <= 0:
            raise RubricError("max_score must be > 0")
        names = [c.name for c in self.categories]
        if len(set(names)) != len(names):
            raise RubricError("duplicate error category names")

    def category(self, name: str) -> ErrorCategory:
        for c in self.categories:
            if c.name == name:
                return c
        raise UnknownCategory(name)

    def to_dict(self) -> dict:
        return {
            "mode": self.mode.value,
            "max_score": self.max_score,
            "errors": [
                {"name": c.name, "definition": c.definition, "penalty": c.penalty}
                for c in self.categories
            ],
        }

    @classmethod
    def from_dict(cls, raw: dict) -> PointDeductionRubric:
        return cls(
            max_score=raw["max_score"],
            categories=tuple(
                ErrorCategory(e["name"], e.get("definition", ""), e["penalty"])
                for e in raw["errors"]
            ),
        )


@dataclass(frozen=True)
class GradingScaleRubric:
    criteria: tuple
    mode: RubricMode = field(default=RubricMode.GRADING_SCALE, init=False)

    def __post_init__(self):
        object.__setattr__(self, "criteria", tuple(self.criteria))
        names = [c.name for c in self.criteria]
        if len(set(names)) != len(names):
            raise RubricError("duplicate criterion names")
        if sum(c.weight for c in self.criteria) <= 0:
            raise RubricError("criterion weights must sum to > 0")

    def criterion(self, name: str) -> Criterion:
        for c in self.criteria:
            if c.name == name:
                return c
        raise MissingGrade(name)

    def to_dict(self) -> dict:
        out_criteria = []
        for c in self.criteria:
            entry = {
                "name": c.name,
                "definition": c.definition,
                "weight": c.weight,
                "levels": [
                    {"name": lv.name, "definition": lv.definition, "credit": lv.credit}
                    for lv in c.levels
                ],
            }
            if c.na_level is not None:
                entry["na_level"] = c.na_level
            out_criteria.append(entry)
        return {"mode": self.mode.value, "criteria": out_criteria}

    @classmethod
    def from_dict(cls, raw: dict) -> GradingScaleRubric:
        return cls(
            criteria=tuple(
                Criterion(
                    name=c["name"],
                    definition=c.get("definition", ""),
                    weight=c["weight"],
                    levels=tuple(
                        GradeLevel(lv["name"], lv.get("definition", ""), lv["credit"])
                        for lv in c["levels"]
                    ),
                    na_level=c.get("na_level"),
                )
                for c in raw["criteria"]
            ),
        )


def uniform_credits(level_names: list[str], definitions: list[str] | None = None) -> tuple:
    """Levels for a k-level scale with credit(level j) = j/k, worst to best."""
    k = len(level_names)
    defs = definitions if definitions is not None else [""] * k
    return tuple(
        GradeLevel(name, definition, (j + 1) / k)
        for j, (name, definition) in enumerate(zip(level_names, defs))
    )


def score_point_deduction(rubric: PointDeductionRubric, occurrences) -> dict:
    """Apply penalty deductions: raw = M - sum(penalty_i * count_i).

    ``occurrences`` is an iterable of (category-name, count) pairs; counts may
    be 0. The raw value can go negative and is reported as-is; the normalized
    score clamps it into [0, M] first.
    """
    raw = rubric.max_score
    for name, count in occurrences:
        if count < 0:
            raise RubricError("occurrence counts must be >= 0")
        raw -= rubric.category(name).penalty * count
    clamped = min(max(raw, 0.0), rubric.max_score)
    return {"raw": raw, "score": clamped / rubric.max_score}


def score_grading_scale(rubric: GradingScaleRubric, grades: dict) -> dict:
    """Weighted-credit score over non-N/A criteria.

    ``grades`` maps criterion name -> level name and must grade every
    criterion exactly once. Criteria graded at their N/A level are dropped and
    the remaining weights renormalized; the weights actually used are returned
    as ``effective_weights`` (N/A criteria map to 0.0).
    """
    for name in grades:
        rubric.criterion(name)  # unknown criterion -> MissingGrade
    credits: dict[str, float | None] = {}
    for criterion in rubric.criteria:
        if criterion.name not in grades:
            raise MissingGrade(criterion.name)
        credits[criterion.name] = criterion.credit_for(grades[criterion.name])

    active = [c for c in rubric.criteria if credits[c.name] is not None]
    if not active:
        raise AllNA()
    total_weight = sum(c.weight for c in active)
    effective = {c.name: 0.0 for c in rubric.criteria}
    score = 0.0
    for c in active:
        w = c.weight / total_weight
        effective[c.name] = w
        score += w * credits[c.name]
    return {"score": score, "effective_weights": effective}


def gate(score: float, threshold: float) -> QAStatus:
    """PASSED iff score >= threshold; equality passes."""
    if not 0.0 <= score <= 1.0 or not 0.0 <= threshold <= 1.0:
        raise RubricError("score and threshold must be in [0, 1]")
    return QAStatus.PASSED if score >= threshold else QAStatus.REDO


def load_rubric_dict(raw: dict):
    """Parse a rubric.json object; returns (rubric, redo_threshold or None)."""
    mode = RubricMode(raw["mode"])
    threshold = raw.get("redo_threshold")
    if mode is RubricMode.POINT_DEDUCTION:
        return PointDeductionRubric.from_dict(raw), threshold
    return GradingScaleRubric.from_dict(raw), threshold


def load_rubric_file(path) -> tuple:
    with open(path, encoding="utf-8") as fh:
        return load_rubric_dict(json.load(fh))


def dump_rubric(rubric, redo_threshold: float | None = None) -> dict:
    out = rubric.to_dict()
    if redo_threshold is not None:
        out["redo_threshold"] = redo_threshold
    return out


_FIXTURE_DIR = Path(__file__).parent / "fixtures"


def builtin_fixture(name: str) -> tuple:
    """Load one of the packaged rubric fixtures by file stem."""
    return load_rubric_file(_FIXTURE_DIR / f"{name}.json")
