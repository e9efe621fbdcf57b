"""The three model-in-the-loop roles: pre-annotation of classification
questions, real-time draft assistance, and the per-criterion iterative judge.
"""

from __future__ import annotations

import re
import uuid
from dataclasses import dataclass, field

from milo.errors import MiloError
from milo.gateway import CompletionRequest, Gateway, GatewayError
from milo.model import (
    Annotation,
    AnnotationStatus,
    CriterionGrade,
    ErrorOccurrence,
    FeedbackSource,
    ProjectSpec,
    QAFeedback,
    QuestionKind,
    QuestionSpec,
    ReviewSubject,
)
from milo.prompts import (
    EmptyField,
    Harshness,
    JudgePromptInputs,
    NA_DEFINITION,
    Unparsable,
    parse_judge_reply,
    render_judge_prompt,
    render_preannotation_prompt,
    retry_instruction,
)
from milo.rubric import (
    GradingScaleRubric,
    PointDeductionRubric,
    RubricMode,
    score_grading_scale,
    score_point_deduction,
)
from milo.workflow import Workflow, now_ms

PRESELECT_THRESHOLD = 0.5

_CONFIDENCE = re.compile(r"\b(0(?:\.\d+)?|1(?:\.0+)?)\b")


class PipelineError(MiloError):
    pass


class JudgeIncomplete(PipelineError):
    def __init__(self, criteria: list[str], detail: str = ""):
        message = f"judge could not grade criteria: {criteria}"
        if detail:
            message += f" ({detail})"
        super().__init__(message)
        self.criteria = criteria


@dataclass(frozen=True)
class PreAnnotation:
    """Per-question option confidences and the pre-selected label set."""

    job_id: str
    per_question: dict  # question-id -> {"option_confidences", "preselected"}
    errors: dict = field(default_factory=dict)  # question-id -> message

    def to_dict(self) -> dict:
        return {
            "job_id": self.job_id,
            "per_question": {
                qid: {
                    "option_confidences": dict(entry["option_confidences"]),
                    "preselected": sorted(entry["preselected"]),
                }
                for qid, entry in self.per_question.items()
            },
            "errors": dict(self.errors),
        }

    @classmethod
    def from_dict(cls, raw: dict) -> PreAnnotation:
        return cls(
            job_id=raw["job_id"],
            per_question={
                qid: {
                    "option_confidences": dict(entry["option_confidences"]),
                    "preselected": set(entry["preselected"]),
                }
                for qid, entry in raw["per_question"].items()
            },
            errors=dict(raw.get("errors", {})),
        )


def preselect(question: QuestionSpec, confidences: dict) -> set:
    """The pre-selection rule: multi-select keeps every option at or above the
    threshold; single-select keeps the argmax option only if it clears it."""
    if not confidences:
        return set()
    if question.kind is QuestionKind.MULTI_SELECT:
        return {opt for opt, c in confidences.items() if c >= PRESELECT_THRESHOLD}
    # single-select: first-declared option among the argmax ties
    best = max(confidences.values())
    if best < PRESELECT_THRESHOLD:
        return set()
    for opt in question.options:
        if confidences.get(opt) == best:
            return {opt}
    return set()


def binary_question(question: QuestionSpec, option: str) -> str:
    """Decompose a classification question into a per-option Yes/No question."""
    return f'{question.prompt_text} Should the option "{option}" be selected? Answer Yes or No.'


def parse_confidence_reply(reply: str) -> float:
    """Confidence for the asked-about option.

    A decimal in [0, 1] anywhere in the reply wins (e.g. "Yes (0.87)");
    otherwise a bare Yes maps to 1.0 and a bare No to 0.0.
    """
    m = _CONFIDENCE.search(reply)
    if m:
        return float(m.group(1))
    verdict = parse_judge_reply(reply, RubricMode.POINT_DEDUCTION).verdict
    return 1.0 if verdict == "Yes" else 0.0


def _preannotation_texts(subject: ReviewSubject) -> tuple[str, str]:
    """Map a subject onto the (post, comment) prompt slots.

    The comment is the field named "comment" when present (else the last
    field); the post is every remaining field rendered as "name: value" lines.
    """
    pairs = list(subject.fields)
    names = [name for name, _ in pairs]
    comment_name = "comment" if "comment" in names else names[-1]
    comment = dict(pairs)[comment_name].value
    rest = [f"{name}: {fv.value}" for name, fv in pairs if name != comment_name]
    post = "\n".join(rest) if rest else "(no additional context)"
    return post, comment


def preannotate(
    job_id: str,
    project: ProjectSpec,
    subject: ReviewSubject,
    gateway: Gateway,
    workflow: Workflow | None = None,
    backend_id: str = "default",
    max_parallel: int = 8,
    timeout: float | None = None,
) -> PreAnnotation:
    """Generate option confidences and pre-selections for every classification
    question of a job, then persist the whole-job result in one write."""
    questions = [q for q in project.questions if q.kind is not QuestionKind.FREE_TEXT]
    post, comment = _preannotation_texts(subject)

    requests = []
    slots = []  # aligned (question-id, option)
    for question in questions:
        for option in question.options:
            prompt = render_preannotation_prompt(post, comment, binary_question(question, option))
            requests.append(
                CompletionRequest(
                    prompt=prompt, max_output_tokens=16, backend_id=backend_id, timeout=timeout
                )
            )
            slots.append((question.id, option))

    results = gateway.complete_batch(requests, max_parallel=max_parallel)

    confidences: dict[str, dict] = {q.id: {} for q in questions}
    errors: dict[str, str] = {}
    for (qid, option), result in zip(slots, results):
        if qid in errors:
            continue
        if isinstance(result, GatewayError):
            errors[qid] = str(result)
            continue
        try:
            confidences[qid][option] = parse_confidence_reply(result.text)
        except Unparsable as exc:
            errors[qid] = str(exc)

    per_question = {}
    for question in questions:
        conf = {} if question.id in errors else confidences[question.id]
        per_question[question.id] = {
            "option_confidences": conf,
            "preselected": preselect(question, conf),
        }
    pre = PreAnnotation(job_id=job_id, per_question=per_question, errors=errors)
    if workflow is not None:
        workflow.save_preannotation(job_id, pre.to_dict())
    return pre


def preannotate_queue(
    workflow: Workflow, queue_id: str, gateway: Gateway, backend_id: str = "default"
) -> int:
    """Pre-annotate every open job in a queue before annotators start."""
    queue = workflow.queue(queue_id)
    project = workflow.project(queue.project_id)
    count = 0
    for job_id in queue.job_ids:
        job = workflow.job(job_id)
        if job.state.value != "open" or workflow.preannotation(job_id) is not None:
            continue
        subject = workflow.subject(job.subject_id)
        preannotate(job_id, project, subject, gateway, workflow=workflow, backend_id=backend_id)
        count += 1
    return count


def generate_assist_draft(
    annotation_id: str,
    query: str,
    gateway: Gateway,
    workflow: Workflow,
    context_fields=(),
    backend_id: str = "default",
    max_output_tokens: int = 512,
    timeout: float | None = None,
) -> str:
    """Draft a response to the annotator's query and persist it on the
    annotation (latest draft wins; every draft lands in the audit trail)."""
    if not query or not query.strip():
        raise EmptyField("query")
    parts = [f"{name}: {text}" for name, text in context_fields]
    prompt = "\n".join(parts + [query]) if parts else query
    result = gateway.complete(
        CompletionRequest(
            prompt=prompt, max_output_tokens=max_output_tokens, backend_id=backend_id, timeout=timeout
        )
    )
    workflow.record_assist_draft(annotation_id, query, result.text)
    return result.text


def _normalize_text(text: str) -> str:
    return " ".join(text.lower().split())


def _lcs_length(a: str, b: str) -> int:
    if not a or not b:
        return 0
    prev = [0] * (len(b) + 1)
    for ch_a in a:
        curr = [0] * (len(b) + 1)
        for j, ch_b in enumerate(b, start=1):
            if ch_a == ch_b:
                curr[j] = prev[j - 1] + 1
            else:
                curr[j] = max(prev[j], curr[j - 1])
        prev = curr
    return prev[len(b)]


def check_verbatim_copy(final_response: str, assist_draft: str) -> dict:
    """Flag responses that are the assist draft verbatim (after whitespace and
    case normalization) and measure LCS similarity between the two."""
    a = _normalize_text(final_response)
    b = _normalize_text(assist_draft)
    if not a or not b:
        raise PipelineError("verbatim check needs two non-empty texts")
    similarity = _lcs_length(a, b) / max(len(a), len(b))
    return {"flag": a == b, "similarity": similarity}


def judge_review_pairs(project: ProjectSpec, subject: ReviewSubject, annotation: Annotation):
    """Review-subject rendering for judge prompts: subject fields in declared
    order, then each answer under its question id."""
    pairs = [(name, fv.value) for name, fv in subject.fields]
    for question in project.questions:
        answer = annotation.answers.get(question.id)
        if answer is None:
            continue
        text = ", ".join(answer) if isinstance(answer, list) else str(answer)
        pairs.append((question.id, text))
    return pairs


def _qa_field(project: ProjectSpec) -> str:
    if project.qa_fields_of_interest:
        return project.qa_fields_of_interest[0]
    free_text = [q.id for q in project.questions if q.kind is QuestionKind.FREE_TEXT]
    if free_text:
        return free_text[-1]
    return project.questions[0].id


def judge(
    annotation: Annotation,
    project: ProjectSpec,
    subject: ReviewSubject,
    gateway: Gateway,
    harshness: Harshness = Harshness.STANDARD,
    max_explanation_tokens: int = 256,
    workflow: Workflow | None = None,
    backend_id: str = "default",
    feedback_id: str | None = None,
    clock=now_ms,
    timeout: float | None = None,
) -> QAFeedback:
    """Grade one submitted annotation against the project rubric.

    Grading-scale rubrics get one prompt per criterion (plus at most one retry
    each on an unparsable reply); point-deduction rubrics get one Yes/No prompt
    per error category. Feedback assembly is all-or-nothing: nothing persists
    unless every criterion produced a usable verdict.
    """
    if annotation.status is AnnotationStatus.DRAFT:
        raise PipelineError("only submitted annotations can be judged")
    rubric = project.rubric
    review_pairs = judge_review_pairs(project, subject, annotation)
    qa_field = _qa_field(project)

    if isinstance(rubric, GradingScaleRubric):
        units = list(rubric.criteria)
        mode = RubricMode.GRADING_SCALE
    elif isinstance(rubric, PointDeductionRubric):
        units = list(rubric.categories)
        mode = RubricMode.POINT_DEDUCTION
    else:
        raise PipelineError(f"unsupported rubric type {type(rubric).__name__}")

    def prompt_for(unit) -> str:
        if mode is RubricMode.GRADING_SCALE:
            levels = []
            if unit.na_level is not None:
                levels.append((unit.na_level, NA_DEFINITION))
            levels.extend((lv.name, lv.definition) for lv in unit.levels)
        else:
            levels = []
        inputs = JudgePromptInputs(
            qa_field_of_interest=qa_field,
            project_description=project.description,
            labeling_instructions=project.labeling_instructions,
            review_subjects=review_pairs,
            criterion_name=unit.name,
            criterion_definition=unit.definition,
            grade_levels=levels,
            harshness=harshness,
        )
        return render_judge_prompt(inputs, mode)

    def options_for(unit):
        if mode is RubricMode.GRADING_SCALE:
            return unit.level_names(include_na=True)
        return ["Yes", "No"]

    prompts = {unit.name: prompt_for(unit) for unit in units}

    def run_round(pending: dict) -> tuple[dict, dict]:
        names = list(pending)
        requests = [
            CompletionRequest(
                prompt=pending[name],
                max_output_tokens=max_explanation_tokens,
                backend_id=backend_id,
                timeout=timeout,
            )
            for name in names
        ]
        results = gateway.complete_batch(requests, max_parallel=min(gateway.max_parallel, len(names)))
        parsed, failed = {}, {}
        by_name = dict(zip(names, results))
        for unit in units:
            if unit.name not in by_name:
                continue
            result = by_name[unit.name]
            if isinstance(result, GatewayError):
                failed[unit.name] = f"gateway: {result}"
                continue
            try:
                parsed[unit.name] = parse_judge_reply(result.text, mode, options_for(unit))
            except Unparsable:
                failed[unit.name] = "unparsable"
        return parsed, failed

    parsed, failed = run_round(prompts)
    if failed:
        retries = {
            name: prompts[name] + retry_instruction(options_for(next(u for u in units if u.name == name)))
            for name in failed
        }
        retried, still_failed = run_round(retries)
        parsed.update(retried)
        failed = still_failed
    if failed:
        raise JudgeIncomplete(sorted(failed), detail="; ".join(f"{k}: {v}" for k, v in sorted(failed.items())))

    if mode is RubricMode.GRADING_SCALE:
        grades = {name: reply.verdict for name, reply in parsed.items()}
        score = score_grading_scale(rubric, grades)["score"]
        criterion_grades = tuple(
            CriterionGrade(unit.name, parsed[unit.name].verdict, parsed[unit.name].explanation)
            for unit in units
        )
        occurrences = ()
    else:
        occurrences = tuple(
            ErrorOccurrence(unit.name, 1, parsed[unit.name].explanation)
            for unit in units
            if parsed[unit.name].verdict == "Yes"
        )
        score = score_point_deduction(rubric, [(o.category, o.count) for o in occurrences])["score"]
        criterion_grades = ()

    feedback = QAFeedback.create(
        id=feedback_id or f"fb-{uuid.uuid4().hex[:12]}",
        annotation_id=annotation.id,
        source=FeedbackSource.LLM_JUDGE,
        mode=mode,
        score=score,
        threshold=project.redo_threshold,
        created_at=clock(),
        error_occurrences=occurrences,
        criterion_grades=criterion_grades,
    )
    if workflow is not None:
        workflow.record_feedback(feedback)
    return feedback


def judge_annotation(
    workflow: Workflow, annotation_id: str, gateway: Gateway, **kwargs
) -> QAFeedback:
    """Judge a stored annotation, persisting the feedback and routing REDO."""
    ctx = workflow.annotation_context(annotation_id)
    project = workflow.project(ctx["project_id"])
    subject = workflow.subject(ctx["subject_id"])
    return judge(ctx["annotation"], project, subject, gateway, workflow=workflow, **kwargs)
