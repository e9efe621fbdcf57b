"""Shared domain types: review subjects, projects, annotations, QA feedback."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Union

from milo.errors import MiloError
from milo.rubric import GradingScaleRubric, PointDeductionRubric, QAStatus, RubricMode, gate

Rubric = Union[PointDeductionRubric, GradingScaleRubric]

# A question answer: selected option (single-select), selected options
# (multi-select) or free text.
Answer = Union[str, list]


class ModelValidationError(MiloError):
    """A domain value violates one of its invariants."""


class FieldKind(str, Enum):
    TEXT = "text"
    IMAGE_REF = "image-ref"
    VIDEO_REF = "video-ref"


class QuestionKind(str, Enum):
    SINGLE_SELECT = "single-select"
    MULTI_SELECT = "multi-select"
    FREE_TEXT = "free-text"


class AnnotationSource(str, Enum):
    HUMAN = "human"
    HUMAN_WITH_ASSIST = "human-with-assist"


class AnnotationStatus(str, Enum):
    DRAFT = "draft"
    SUBMITTED = "submitted"
    PASSED = "passed"
    REDO = "redo"


class FeedbackSource(str, Enum):
    LLM_JUDGE = "LLM_JUDGE"
    AUDITOR = "AUDITOR"
    RESEARCHER = "RESEARCHER"


@dataclass(frozen=True)
class FieldValue:
    kind: FieldKind
    value: str

    def __post_init__(self):
        if self.kind in (FieldKind.IMAGE_REF, FieldKind.VIDEO_REF) and not self.value:
            raise ModelValidationError("media refs must be non-empty strings")

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "value": self.value}

    @classmethod
    def from_dict(cls, raw: dict) -> FieldValue:
        return cls(kind=FieldKind(raw["kind"]), value=raw["value"])


@dataclass(frozen=True)
class ReviewSubject:
    """A named-field bundle (text/media refs) rendered to annotators and prompts."""

    id: str
    fields: tuple  # ordered (name, FieldValue) pairs; dict input is accepted
    gold: dict = field(default_factory=dict)  # question-id -> gold answer, optional

    def __post_init__(self):
        pairs = tuple(self.fields.items()) if isinstance(self.fields, dict) else tuple(self.fields)
        object.__setattr__(self, "fields", pairs)
        if not pairs:
            raise ModelValidationError(f"subject {self.id!r} has no fields")
        names = [name for name, _ in pairs]
        if len(set(names)) != len(names):
            raise ModelValidationError(f"subject {self.id!r} has duplicate field names")

    def field_names(self) -> list[str]:
        return [name for name, _ in self.fields]

    def field_map(self) -> dict[str, FieldValue]:
        return dict(self.fields)

    def to_dict(self) -> dict:
        out = {"id": self.id, "fields": {name: fv.to_dict() for name, fv in self.fields}}
        if self.gold:
            out["gold"] = self.gold
        return out

    @classmethod
    def from_dict(cls, raw: dict) -> ReviewSubject:
        fields = tuple((name, FieldValue.from_dict(fv)) for name, fv in raw["fields"].items())
        return cls(id=raw["id"], fields=fields, gold=raw.get("gold", {}))


@dataclass(frozen=True)
class QuestionSpec:
    id: str
    prompt_text: str
    kind: QuestionKind
    options: tuple = ()
    allow_none: bool = False  # multi-select "None" choice

    def __post_init__(self):
        object.__setattr__(self, "options", tuple(self.options))
        if self.kind is QuestionKind.FREE_TEXT:
            if self.options:
                raise ModelValidationError(f"free-text question {self.id!r} must not have options")
        else:
            if len(self.options) < 2:
                raise ModelValidationError(f"question {self.id!r} needs at least 2 options")
            if len(set(self.options)) != len(self.options):
                raise ModelValidationError(f"question {self.id!r} has duplicate option labels")

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "prompt_text": self.prompt_text,
            "kind": self.kind.value,
            "options": list(self.options),
            "allow_none": self.allow_none,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> QuestionSpec:
        return cls(
            id=raw["id"],
            prompt_text=raw["prompt_text"],
            kind=QuestionKind(raw["kind"]),
            options=tuple(raw.get("options", ())),
            allow_none=raw.get("allow_none", False),
        )


@dataclass(frozen=True)
class ProjectSpec:
    id: str
    description: str
    labeling_instructions: str
    questions: tuple
    rubric: Rubric
    redo_threshold: float
    # Field names the judge evaluates; each must resolve to a subject field
    # or to a question id (the answer field) at ingest time.
    qa_fields_of_interest: tuple = ()
    feedback_visibility: str = "immediate"  # or "after_audit"

    def __post_init__(self):
        object.__setattr__(self, "questions", tuple(self.questions))
        object.__setattr__(self, "qa_fields_of_interest", tuple(self.qa_fields_of_interest))
        if not 0.0 <= self.redo_threshold <= 1.0:
            raise ModelValidationError("redo_threshold must be in [0, 1]")
        qids = [q.id for q in self.questions]
        if len(set(qids)) != len(qids):
            raise ModelValidationError("duplicate question ids")

    def question(self, question_id: str) -> QuestionSpec:
        for q in self.questions:
            if q.id == question_id:
                return q
        raise KeyError(question_id)

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "description": self.description,
            "labeling_instructions": self.labeling_instructions,
            "questions": [q.to_dict() for q in self.questions],
            "rubric": self.rubric.to_dict(),
            "redo_threshold": self.redo_threshold,
            "qa_fields_of_interest": list(self.qa_fields_of_interest),
            "feedback_visibility": self.feedback_visibility,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> ProjectSpec:
        mode = RubricMode(raw["rubric"]["mode"])
        rubric: Rubric
        if mode is RubricMode.POINT_DEDUCTION:
            rubric = PointDeductionRubric.from_dict(raw["rubric"])
        else:
            rubric = GradingScaleRubric.from_dict(raw["rubric"])
        return cls(
            id=raw["id"],
            description=raw["description"],
            labeling_instructions=raw.get("labeling_instructions", ""),
            questions=tuple(QuestionSpec.from_dict(q) for q in raw["questions"]),
            rubric=rubric,
            redo_threshold=raw["redo_threshold"],
            qa_fields_of_interest=tuple(raw.get("qa_fields_of_interest", ())),
            feedback_visibility=raw.get("feedback_visibility", "immediate"),
        )


@dataclass
class Annotation:
    id: str
    job_id: str
    annotator_id: str
    answers: dict  # question-id -> Answer
    started_at: int  # UTC milliseconds
    submitted_at: int | None = None
    source: AnnotationSource = AnnotationSource.HUMAN
    assist_draft: str | None = None
    status: AnnotationStatus = AnnotationStatus.DRAFT

    def __post_init__(self):
        if self.assist_draft is not None and self.source is not AnnotationSource.HUMAN_WITH_ASSIST:
            raise ModelValidationError("assist_draft present requires source=human-with-assist")
        if self.submitted_at is not None and self.submitted_at < self.started_at:
            raise ModelValidationError("handling time would be negative")

    @property
    def handling_time(self) -> float | None:
        """Seconds from start (lease) to submission; derived, never stored."""
        if self.submitted_at is None:
            return None
        return (self.submitted_at - self.started_at) / 1000.0

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "job_id": self.job_id,
            "annotator_id": self.annotator_id,
            "answers": self.answers,
            "started_at": self.started_at,
            "submitted_at": self.submitted_at,
            "source": self.source.value,
            "assist_draft": self.assist_draft,
            "status": self.status.value,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> Annotation:
        return cls(
            id=raw["id"],
            job_id=raw["job_id"],
            annotator_id=raw["annotator_id"],
            answers=raw["answers"],
            started_at=raw["started_at"],
            submitted_at=raw.get("submitted_at"),
            source=AnnotationSource(raw.get("source", "human")),
            assist_draft=raw.get("assist_draft"),
            status=AnnotationStatus(raw.get("status", "draft")),
        )


@dataclass(frozen=True)
class ErrorOccurrence:
    category: str
    count: int
    comment: str = ""

    def __post_init__(self):
        if self.count < 1:
            raise ModelValidationError("error occurrence count must be >= 1")


@dataclass(frozen=True)
class CriterionGrade:
    criterion: str
    level: str
    explanation: str = ""


@dataclass(frozen=True)
class QAFeedback:
    id: str
    annotation_id: str
    source: FeedbackSource
    mode: RubricMode
    score: float
    status: QAStatus
    created_at: int  # UTC milliseconds
    error_occurrences: tuple = ()  # point-deduction mode
    criterion_grades: tuple = ()  # grading-scale mode

    def __post_init__(self):
        object.__setattr__(self, "error_occurrences", tuple(self.error_occurrences))
        object.__setattr__(self, "criterion_grades", tuple(self.criterion_grades))
        if not 0.0 <= self.score <= 1.0:
            raise ModelValidationError("score must be in [0, 1]")

    @classmethod
    def create(
        cls,
        id: str,
        annotation_id: str,
        source: FeedbackSource,
        mode: RubricMode,
        score: float,
        threshold: float,
        created_at: int,
        error_occurrences=(),
        criterion_grades=(),
    ) -> QAFeedback:
        """Build feedback with status derived from (score, threshold) via the gate."""
        return cls(
            id=id,
            annotation_id=annotation_id,
            source=source,
            mode=mode,
            score=score,
            status=gate(score, threshold),
            created_at=created_at,
            error_occurrences=tuple(error_occurrences),
            criterion_grades=tuple(criterion_grades),
        )

    def validate_against(self, rubric: Rubric) -> None:
        """Check the rubric-dependent invariants; raises ModelValidationError."""
        if self.mode is RubricMode.GRADING_SCALE:
            if not isinstance(rubric, GradingScaleRubric):
                raise ModelValidationError("grading-scale feedback requires a grading-scale rubric")
            graded = [g.criterion for g in self.criterion_grades]
            expected = [c.name for c in rubric.criteria]
            if sorted(graded) != sorted(expected):
                raise ModelValidationError("feedback must grade each rubric criterion exactly once")
            for g in self.criterion_grades:
                criterion = rubric.criterion(g.criterion)
                if g.level not in criterion.level_names():
                    raise ModelValidationError(
                        f"grade {g.level!r} is not a level of criterion {g.criterion!r}"
                    )
        else:
            if not isinstance(rubric, PointDeductionRubric):
                raise ModelValidationError("point-deduction feedback requires a point-deduction rubric")
            known = {c.name for c in rubric.categories}
            for occ in self.error_occurrences:
                if occ.category not in known:
                    raise ModelValidationError(f"unknown error category {occ.category!r}")

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "annotation_id": self.annotation_id,
            "source": self.source.value,
            "mode": self.mode.value,
            "score": self.score,
            "status": self.status.value,
            "created_at": self.created_at,
            "error_occurrences": [
                {"category": o.category, "count": o.count, "comment": o.comment}
                for o in self.error_occurrences
            ],
            "criterion_grades": [
                {"criterion": g.criterion, "level": g.level, "explanation": g.explanation}
                for g in self.criterion_grades
            ],
        }

    @classmethod
    def from_dict(cls, raw: dict) -> QAFeedback:
        return cls(
            id=raw["id"],
            annotation_id=raw["annotation_id"],
            source=FeedbackSource(raw["source"]),
            mode=RubricMode(raw["mode"]),
            score=raw["score"],
            status=QAStatus(raw["status"]),
            created_at=raw["created_at"],
            error_occurrences=tuple(
                ErrorOccurrence(o["category"], o["count"], o.get("comment", ""))
                for o in raw.get("error_occurrences", ())
            ),
            criterion_grades=tuple(
                CriterionGrade(g["criterion"], g["level"], g.get("explanation", ""))
                for g in raw.get("criterion_grades", ())
            ),
        )


def validate_project(spec: ProjectSpec, sample_subjects: list) -> list[str]:
    """Report rubric-referenced field names that resolve nowhere.

    A name resolves if it appears as a field on at least one sample subject or
    as a question id (the answer field of that question). The returned list is
    empty when the project is valid; this never raises.
    """
    known: set[str] = {q.id for q in spec.questions}
    for subject in sample_subjects:
        known.update(subject.field_names())
    return [name for name in spec.qa_fields_of_interest if name not in known]
