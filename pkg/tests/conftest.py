from __future__ import annotations

import pytest

from milo.gateway import FixtureBackend, Gateway, RetryPolicy
from milo.model import ProjectSpec, QuestionKind, QuestionSpec, ReviewSubject
from milo.rubric import builtin_fixture
from milo.store import Database
from milo.workflow import Workflow


class FakeClock:
    """Millisecond clock under test control."""

    def __init__(self, start_ms: int = 1_700_000_000_000):
        self.now = start_ms

    def __call__(self) -> int:
        return self.now

    def advance(self, ms: int) -> None:
        self.now += ms


@pytest.fixture
def clock():
    return FakeClock()


@pytest.fixture
def db():
    database = Database(":memory:")
    yield database
    database.close()


@pytest.fixture
def flow(db, clock):
    return Workflow(db, clock=clock)


@pytest.fixture
def binary_rubric():
    rubric, threshold = builtin_fixture("vqa_judge_rubric_binary")
    return rubric, threshold


@pytest.fixture
def a3_rubric():
    rubric, threshold = builtin_fixture("vqa_rubric_table_a3")
    return rubric, threshold


def make_gateway(backend: FixtureBackend, max_parallel: int = 8) -> Gateway:
    gw = Gateway(max_parallel=max_parallel, retry=RetryPolicy(backoff_base=0.001))
    gw.register("default", backend)
    return gw


@pytest.fixture
def vqa_project(binary_rubric):
    rubric, threshold = binary_rubric
    return ProjectSpec(
        id="vqa",
        description="Evaluate visual question answering annotations for model fine-tuning.",
        labeling_instructions="Write an appropriate, relevant, and factual response to the query.",
        questions=(
            QuestionSpec("query", "Write a query about the image.", QuestionKind.FREE_TEXT),
            QuestionSpec(
                "annotator_response", "Write a response to the query.", QuestionKind.FREE_TEXT
            ),
        ),
        rubric=rubric,
        redo_threshold=threshold,
        qa_fields_of_interest=("annotator_response",),
    )


@pytest.fixture
def comment_project(binary_rubric):
    rubric, threshold = binary_rubric
    return ProjectSpec(
        id="comments",
        description="Classify the relevance and characteristics of social comments.",
        labeling_instructions="Evaluate each comment against the post.",
        questions=(
            QuestionSpec(
                "relevancy",
                "Is this comment fully relevant, somewhat relevant, or not at all relevant "
                "to the post topic?",
                QuestionKind.SINGLE_SELECT,
                options=("Fully relevant", "Somewhat relevant", "Not at all relevant"),
            ),
            QuestionSpec(
                "characteristics",
                "Which of the following characteristics, if any, does the comment have?",
                QuestionKind.MULTI_SELECT,
                options=(
                    "Informative or insightful",
                    "Sharing a personal experience",
                    "Emotional support",
                    "Meaningful question",
                    "Funny or humorous",
                    "Professional admiration",
                ),
                allow_none=True,
            ),
            QuestionSpec(
                "civility",
                "Is this comment civil and respectful?",
                QuestionKind.SINGLE_SELECT,
                options=("Yes", "No"),
            ),
        ),
        rubric=rubric,
        redo_threshold=threshold,
    )


def make_subject(subject_id: str, **text_fields) -> ReviewSubject:
    return ReviewSubject(
        id=subject_id,
        fields=tuple((name, _text(value)) for name, value in text_fields.items()),
    )


def _text(value: str):
    from milo.model import FieldKind, FieldValue

    return FieldValue(FieldKind.TEXT, value)
