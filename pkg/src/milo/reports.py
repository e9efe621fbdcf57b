"""Report assembly and plain-text rendering.

Four layouts ship: classification quality vs. audit labels (per-question
accuracy/precision/recall for the assisted and non-assisted conditions),
head-to-head win ratios with weighted averages, judge-human agreement rates,
and average-handling-time / word-count style category tables with a weighted
average row. Each report is emitted as JSON plus a fixed-width text table.
"""

from __future__ import annotations

from milo.errors import MiloError
from milo.metrics import (
    Dimension,
    HeadToHeadRecord,
    Winner,
    confusion_metrics,
    judge_human_agreement,
    weighted_average,
    win_ratio_report,
)
from milo.model import AnnotationStatus, FeedbackSource, QuestionKind
from milo.rubric import RubricMode

CONDITION_WITH = "with"
CONDITION_WITHOUT = "without"


class ReportError(MiloError):
    pass


def _fmt(value, decimals: int) -> str:
    if value is None:
        return "-"
    return f"{value:.{decimals}f}"


def _render_table(title: str, headers: list[str], rows: list[list[str]]) -> str:
    widths = [len(h) for h in headers]
    for row in rows:
        for i, cell in enumerate(row):
            widths[i] = max(widths[i], len(cell))
    def line(cells):
        return " | ".join(cell.ljust(widths[i]) for i, cell in enumerate(cells)).rstrip()
    sep = "-+-".join("-" * w for w in widths)
    return "\n".join([title, line(headers), sep] + [line(r) for r in rows]) + "\n"


# -- Table 2 layout: classification quality ------------------------------------


def classification_quality_report(per_question: dict) -> dict:
    """``per_question`` maps question label -> condition -> (predictions, golds).

    Emits per-question accuracy/precision/recall for both conditions plus two
    labeled Overall rows: micro (pooled counts) and macro (mean of rows); the
    aggregation the original tables used is ambiguous, so both are reported.
    """
    rows = {}
    pooled = {CONDITION_WITH: ([], []), CONDITION_WITHOUT: ([], [])}
    for label, conditions in per_question.items():
        row = {}
        for condition in (CONDITION_WITHOUT, CONDITION_WITH):
            pair = conditions.get(condition)
            if pair is None or not pair[0]:
                row[condition] = None
                continue
            preds, golds = pair
            m = confusion_metrics(preds, golds)
            row[condition] = {k: m[k] for k in ("accuracy", "precision", "recall")}
            pooled[condition][0].extend(preds)
            pooled[condition][1].extend(golds)
        rows[label] = row

    overall_micro = {}
    overall_macro = {}
    for condition in (CONDITION_WITHOUT, CONDITION_WITH):
        preds, golds = pooled[condition]
        overall_micro[condition] = (
            {k: confusion_metrics(preds, golds)[k] for k in ("accuracy", "precision", "recall")}
            if preds
            else None
        )
        present = [r[condition] for r in rows.values() if r[condition] is not None]
        overall_macro[condition] = (
            {
                k: sum(r[k] for r in present) / len(present)
                for k in ("accuracy", "precision", "recall")
            }
            if present
            else None
        )
    return {"rows": rows, "overall_micro": overall_micro, "overall_macro": overall_macro}


def render_classification_quality(report: dict) -> str:
    headers = ["Question"]
    for metric in ("Accuracy", "Precision", "Recall"):
        headers += [f"{metric} (without)", f"{metric} (with)"]

    def row_cells(label, row):
        cells = [label]
        for metric in ("accuracy", "precision", "recall"):
            for condition in (CONDITION_WITHOUT, CONDITION_WITH):
                entry = row.get(condition)
                cells.append(_fmt(entry[metric] if entry else None, 3))
        return cells

    rows = [row_cells(label, row) for label, row in report["rows"].items()]
    rows.append(row_cells("Overall (micro)", report["overall_micro"]))
    rows.append(row_cells("Overall (macro)", report["overall_macro"]))
    return _render_table("Classification quality vs. audit labels", headers, rows)


# -- Table 5 layout: head-to-head win ratios -----------------------------------


def head_to_head_report(comparisons: list[dict]) -> dict:
    """``comparisons`` are stored head-to-head rows: {"category", "responses":
    {response-id: condition}, "winners": {dimension: response-id or tie}}.
    Winners recorded by response id are resolved to conditions here."""
    records = []
    counts: dict[str, int] = {}
    for comp in comparisons:
        category = comp["category"]
        counts[category] = counts.get(category, 0) + 1
        responses = comp.get("responses", {})
        for dimension, winner in comp["winners"].items():
            if winner in responses:
                resolved = Winner(responses[winner])
            else:
                resolved = Winner(winner)  # tie-good / tie-bad
            records.append(HeadToHeadRecord(category, resolved, Dimension(dimension)))
    if not records:
        return {"per_category": {}, "weighted_average": {}, "category_counts": {}}
    report = win_ratio_report(records, counts)
    report["category_counts"] = counts
    return report


def render_head_to_head(report: dict) -> str:
    headers = [
        "Question Category",
        "Count",
        "Helpfulness Win Ratio (with)",
        "Helpfulness Win Ratio (without)",
        "Honesty Win Ratio (with)",
        "Honesty Win Ratio (without)",
        "Helpfulness Increase (with)",
        "Honesty Increase (with)",
    ]

    def cells(label, count, entry):
        help_e = entry.get("helpfulness")
        hon_e = entry.get("honesty")
        return [
            label,
            str(count) if count is not None else "",
            _fmt(help_e and help_e["with"], 2),
            _fmt(help_e and help_e["without"], 2),
            _fmt(hon_e and hon_e["with"], 2),
            _fmt(hon_e and hon_e["without"], 2),
            _fmt(help_e and help_e["increase"], 2),
            _fmt(hon_e and hon_e["increase"], 2),
        ]

    rows = [
        cells(category, report["category_counts"].get(category), entry)
        for category, entry in report["per_category"].items()
    ]
    rows.append(cells("Weighted Average", None, report["weighted_average"]))
    return _render_table("Head-to-head quality evaluation", headers, rows)


# -- Table 7 layout: judge-human agreement ---------------------------------------


def agreement_report(judge_feedback, human_feedback, criteria) -> dict:
    return judge_human_agreement(judge_feedback, human_feedback, criteria)


def render_agreement(report: dict) -> str:
    def pct(rate):
        return _fmt(rate * 100.0 if rate is not None else None, 2)

    headers = ["Quality Criteria", "Agreement rate %"]
    rows = [[criterion, pct(rate)] for criterion, rate in report["per_criterion"].items()]
    rows.append(["Overall", pct(report["overall_exact_rate"])])
    table = _render_table("Agreement rates between LLM judge and human reviewers", headers, rows)
    dist = report.get("disagreement_distribution") or {}
    if dist:
        lines = [
            f"  {k} agreeing grades: {_fmt(v * 100.0, 2)}% of disagreeing pairs"
            for k, v in dist.items()
        ]
        table += "Disagreement distribution:\n" + "\n".join(lines) + "\n"
    return table


# -- Table 4/6 layout: per-category averages with a weighted-average row ----------


def category_average_report(values_with: dict, values_without: dict, counts: dict) -> dict:
    """Per-category means for both conditions plus count-weighted averages over
    the categories present in each condition."""
    present = set(values_with) | set(values_without)
    missing = present - set(counts)
    if missing:
        raise ReportError(f"no counts for categories {sorted(missing)}")
    categories = [c for c in counts if c in present]
    weighted = {}
    for condition, values in ((CONDITION_WITH, values_with), (CONDITION_WITHOUT, values_without)):
        if values:
            weighted[condition] = weighted_average(values, {c: counts[c] for c in values})
        else:
            weighted[condition] = None
    return {
        "rows": {
            c: {
                "count": counts.get(c),
                CONDITION_WITH: values_with.get(c),
                CONDITION_WITHOUT: values_without.get(c),
            }
            for c in categories
        },
        "weighted_average": weighted,
    }


def render_category_average(report: dict, title: str, value_label: str) -> str:
    headers = ["Question Category", "Count", f"{value_label} (with)", f"{value_label} (without)"]
    rows = [
        [
            category,
            str(row["count"]) if row["count"] is not None else "-",
            _fmt(row[CONDITION_WITH], 2),
            _fmt(row[CONDITION_WITHOUT], 2),
        ]
        for category, row in report["rows"].items()
    ]
    rows.append(
        [
            "Weighted Average",
            "",
            _fmt(report["weighted_average"][CONDITION_WITH], 2),
            _fmt(report["weighted_average"][CONDITION_WITHOUT], 2),
        ]
    )
    return _render_table(title, headers, rows)


# -- collectors over a workflow ----------------------------------------------------


def _condition_of_queue(queue) -> str:
    return CONDITION_WITH if queue.llm_assist_enabled else CONDITION_WITHOUT


def _submitted_annotations(workflow, project_id: str):
    out = []
    for row in workflow.db.query(
        "SELECT id FROM annotations WHERE project_id=? ORDER BY id", (project_id,)
    ):
        ctx = workflow.annotation_context(row["id"])
        if ctx["annotation"].status is not AnnotationStatus.DRAFT:
            out.append(ctx)
    return out


def collect_classification_quality(workflow, project_id: str) -> dict:
    """Binary per-option predictions vs. subject gold labels, pooled per question."""
    project = workflow.project(project_id)
    queues = {}
    per_question: dict[str, dict] = {}
    for ctx in _submitted_annotations(workflow, project_id):
        queue_id = ctx["queue_id"]
        if queue_id not in queues:
            queues[queue_id] = workflow.queue(queue_id)
        condition = _condition_of_queue(queues[queue_id])
        subject = workflow.subject(ctx["subject_id"])
        for question in project.questions:
            if question.kind is QuestionKind.FREE_TEXT or question.id not in subject.gold:
                continue
            gold = subject.gold[question.id]
            answer = ctx["annotation"].answers.get(question.id)
            if answer is None:
                continue
            slot = per_question.setdefault(question.id, {}).setdefault(condition, ([], []))
            for option in question.options:
                if question.kind is QuestionKind.SINGLE_SELECT:
                    pred, is_gold = answer == option, gold == option
                else:
                    pred = option in answer
                    is_gold = option in (gold if isinstance(gold, list) else [gold])
                slot[0].append(pred)
                slot[1].append(is_gold)
    return classification_quality_report(per_question)


def collect_head_to_head(workflow, project_id: str) -> dict:
    return head_to_head_report(workflow.comparisons(project_id))


def collect_agreement(workflow, project_id: str) -> dict:
    """Pairs the latest judge feedback with the latest human feedback per
    annotation; annotations lacking either side are skipped."""
    project = workflow.project(project_id)
    if project.rubric.mode is not RubricMode.GRADING_SCALE:
        raise ReportError("agreement reports need a grading-scale rubric")
    criteria = [c.name for c in project.rubric.criteria]
    judge_side, human_side = [], []
    for ctx in _submitted_annotations(workflow, project_id):
        history = workflow.feedback_history(ctx["annotation"].id)
        latest_judge = next(
            (f for f in reversed(history) if f.source is FeedbackSource.LLM_JUDGE), None
        )
        latest_human = next(
            (f for f in reversed(history) if f.source is not FeedbackSource.LLM_JUDGE), None
        )
        if latest_judge is not None and latest_human is not None:
            judge_side.append(latest_judge)
            human_side.append(latest_human)
    if not judge_side:
        return {
            "overall_exact_rate": None,
            "per_criterion": {c: None for c in criteria},
            "disagreement_distribution": {},
            "pairs": 0,
        }
    return agreement_report(judge_side, human_side, criteria)


def collect_handling_time(workflow, project_id: str, category_field: str = "category") -> dict:
    """Mean handling time per subject category for both conditions; the
    category comes from the named subject field, defaulting to "all"."""
    queues: dict[str, object] = {}
    sums: dict[str, dict] = {}
    subjects_seen: dict[str, set] = {}
    for ctx in _submitted_annotations(workflow, project_id):
        queue_id = ctx["queue_id"]
        if queue_id not in queues:
            queues[queue_id] = workflow.queue(queue_id)
        condition = _condition_of_queue(queues[queue_id])
        subject = workflow.subject(ctx["subject_id"])
        fields = subject.field_map()
        category = fields[category_field].value if category_field in fields else "all"
        entry = sums.setdefault(category, {CONDITION_WITH: [0.0, 0], CONDITION_WITHOUT: [0.0, 0]})
        handling = ctx["annotation"].handling_time
        if handling is None:
            continue
        entry[condition][0] += handling
        entry[condition][1] += 1
        subjects_seen.setdefault(category, set()).add(subject.id)

    values_with, values_without, counts = {}, {}, {}
    for category, entry in sums.items():
        counts[category] = len(subjects_seen[category])
        if entry[CONDITION_WITH][1]:
            values_with[category] = entry[CONDITION_WITH][0] / entry[CONDITION_WITH][1]
        if entry[CONDITION_WITHOUT][1]:
            values_without[category] = entry[CONDITION_WITHOUT][0] / entry[CONDITION_WITHOUT][1]
    return category_average_report(values_with, values_without, counts)


REPORT_KINDS = ("table2", "table5", "table7", "aht")


def collect_report(workflow, project_id: str, kind: str) -> dict:
    if kind == "table2":
        report = collect_classification_quality(workflow, project_id)
        text = render_classification_quality(report)
    elif kind == "table5":
        report = collect_head_to_head(workflow, project_id)
        text = render_head_to_head(report)
    elif kind == "table7":
        report = collect_agreement(workflow, project_id)
        text = render_agreement(report)
    elif kind == "aht":
        report = collect_handling_time(workflow, project_id)
        text = render_category_average(report, "Average handling time (s)", "AHT")
    else:
        raise ReportError(f"unknown report kind {kind!r}; expected one of {REPORT_KINDS}")
    return {"kind": kind, "report": report, "text": text}
