"""Deterministic prompt rendering and judge-reply parsing.

Templates are data files, not code: each ``.tmpl`` under ``templates/`` is a
sequence of sections separated by ``--- section ---`` lines, with
``{placeholder}`` interpolation inside section bodies. A section whose
placeholders all resolve to empty strings is omitted entirely, so optional
inputs (e.g. labeling instructions) never leave an orphaned header behind.
Rendering is a pure function of its inputs: equal inputs give byte-identical
prompts.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from milo.errors import MiloError
from milo.rubric import RubricMode

TEMPLATE_DIR = Path(__file__).parent / "templates"

_SECTION_MARK = "--- section ---"
_PLACEHOLDER = re.compile(r"\{([a-z_]+)\}")

# Leading labels scrubbed from a judge explanation after the verdict token.
_EXPLANATION_LABELS = ("comment", "explanation", "reason", "rationale")

NA_DEFINITION = "Not applicable"


class PromptError(MiloError):
    pass


class EmptyField(PromptError):
    def __init__(self, name: str):
        super().__init__(f"prompt input {name!r} must be non-empty")
        self.name = name


class TooFewGradeOptions(PromptError):
    def __init__(self, count: int):
        super().__init__(f"grading prompts need at least 2 grade options, got {count}")


class Unparsable(PromptError):
    def __init__(self, reply: str, options):
        super().__init__(f"no valid option {list(options)!r} found in reply")
        self.reply = reply
        self.options = list(options)


class Harshness(str, Enum):
    LENIENT = "lenient"
    STANDARD = "standard"
    STRICT = "strict"


# One fixed clause per harshness setting, appended to the criterion or
# category definition; standard leaves the definition untouched.
HARSHNESS_CLAUSES = {
    Harshness.LENIENT: (
        "When a response falls between two grades, favor the higher grade; "
        "reserve the lowest grade for clear, unambiguous failures."
    ),
    Harshness.STANDARD: "",
    Harshness.STRICT: (
        "When a response falls between two grades, favor the lower grade; "
        "award the highest grade only when every aspect of the definition is fully satisfied."
    ),
}


@dataclass(frozen=True)
class JudgePromptInputs:
    """Everything a judge prompt interpolates, already resolved by the caller."""

    qa_field_of_interest: str
    project_description: str
    labeling_instructions: str
    review_subjects: tuple  # ordered (field-name, text) pairs
    criterion_name: str  # error category name in point-deduction mode
    criterion_definition: str
    grade_levels: tuple = ()  # ordered (level-name, definition) pairs, grading mode
    harshness: Harshness = Harshness.STANDARD

    def __post_init__(self):
        object.__setattr__(self, "review_subjects", tuple(tuple(p) for p in self.review_subjects))
        object.__setattr__(self, "grade_levels", tuple(tuple(p) for p in self.grade_levels))

    def grade_option_names(self) -> list[str]:
        return [name for name, _ in self.grade_levels]


@dataclass(frozen=True)
class ParsedReply:
    verdict: str
    explanation: str


def _load_sections(template_name: str) -> list[str]:
    text = (TEMPLATE_DIR / template_name).read_text(encoding="utf-8")
    sections = []
    current: list[str] = []
    for line in text.splitlines():
        if line.strip() == _SECTION_MARK:
            if current:
                sections.append("\n".join(current).strip("\n"))
            current = []
        else:
            current.append(line)
    if current:
        sections.append("\n".join(current).strip("\n"))
    return [s for s in sections if s]


def _render_sections(sections: list[str], values: dict) -> str:
    rendered = []
    for section in sections:
        names = _PLACEHOLDER.findall(section)
        for name in names:
            if name not in values:
                raise PromptError(f"template references unknown placeholder {name!r}")
        if names and all(values[name] == "" for name in names):
            continue  # section carries no content; drop it, header and all
        out = _PLACEHOLDER.sub(lambda m: values[m.group(1)], section)
        rendered.append(out)
    return "\n\n".join(rendered)


def render_review_subjects(pairs) -> str:
    """JSON-ish field rendering: "name": "value", "name2": "value2"."""
    return ", ".join(f'"{name}": {json.dumps(text, ensure_ascii=False)}' for name, text in pairs)


def render_preannotation_prompt(post: str, comment: str, question: str) -> str:
    """Three-block classification prompt: Post, Comment, Question."""
    for name, value in (("post", post), ("comment", comment), ("question", question)):
        if not value:
            raise EmptyField(name)
    sections = _load_sections("preannotation.tmpl")
    return _render_sections(sections, {"post": post, "comment": comment, "question": question})


def _definition_with_harshness(definition: str, harshness: Harshness) -> str:
    clause = HARSHNESS_CLAUSES[harshness]
    if not clause:
        return definition
    return f"{definition} {clause}" if definition else clause


def render_judge_prompt(inputs: JudgePromptInputs, mode: RubricMode) -> str:
    if not inputs.qa_field_of_interest:
        raise EmptyField("qa_field_of_interest")
    if not inputs.criterion_name:
        raise EmptyField("criterion_name")
    definition = _definition_with_harshness(inputs.criterion_definition, inputs.harshness)
    subjects = render_review_subjects(inputs.review_subjects)

    if mode is RubricMode.GRADING_SCALE:
        if len(inputs.grade_levels) < 2:
            raise TooFewGradeOptions(len(inputs.grade_levels))
        scale = "\n".join(f"- {name}: {definition}" for name, definition in inputs.grade_levels)
        values = {
            "qa_field_of_interest": inputs.qa_field_of_interest,
            "criterion_name": inputs.criterion_name,
            "criterion_definition": definition,
            "project_description": inputs.project_description,
            "labeling_instructions": inputs.labeling_instructions,
            "review_subjects": subjects,
            "grade_scale": scale,
            "grade_options": ", ".join(inputs.grade_option_names()),
        }
        return _render_sections(_load_sections("grading_scale.tmpl"), values)

    values = {
        "qa_field_of_interest": inputs.qa_field_of_interest,
        "category_name": inputs.criterion_name,
        "category_definition": definition,
        "project_description": inputs.project_description,
        "labeling_instructions": inputs.labeling_instructions,
        "review_subjects": subjects,
    }
    return _render_sections(_load_sections("point_deduction.tmpl"), values)


YES_NO_OPTIONS = ("Yes", "No")


def parse_judge_reply(reply: str, mode: RubricMode, valid_options=None) -> ParsedReply:
    """Extract the verdict as the first valid option token in the reply.

    Options are matched case-insensitively on word boundaries; the earliest
    match wins (longest option on a position tie). The explanation is the text
    after the verdict with surrounding punctuation and a leading
    "Comment:"-style label stripped.
    """
    if mode is RubricMode.POINT_DEDUCTION and valid_options is None:
        valid_options = YES_NO_OPTIONS
    if not valid_options:
        raise PromptError("valid_options must be non-empty")

    # (start, -len(option), canonical option, match end); earliest match wins,
    # longest option on a position tie.
    best: tuple[int, int, str, int] | None = None
    for option in valid_options:
        pattern = re.compile(r"(?<!\w)" + re.escape(option) + r"(?!\w)", re.IGNORECASE)
        m = pattern.search(reply)
        if m is None:
            continue
        cand = (m.start(), -len(option), option, m.end())
        if best is None or cand[:2] < best[:2]:
            best = cand
    if best is None:
        raise Unparsable(reply, valid_options)

    explanation = reply[best[3]:].strip()
    explanation = explanation.lstrip(".,:;!?-–—'\"")
    explanation = explanation.strip()
    lowered = explanation.lower()
    for label in _EXPLANATION_LABELS:
        prefix = label + ":"
        if lowered.startswith(prefix):
            explanation = explanation[len(prefix):].strip()
            break
    return ParsedReply(verdict=best[2], explanation=explanation)


def retry_instruction(valid_options) -> str:
    """Appended to a judge prompt when the first reply had no valid option."""
    return (
        "\n\nYour previous reply did not contain a valid option. "
        f"Respond with exactly one of: {', '.join(valid_options)}."
    )
