"""Acceptance gate: one test per release criterion, each at its stated
tolerance and time budget, printing a PASS line when it holds.

Run with ``pytest -s tests/test_acceptance.py`` to see the per-criterion
lines.
"""

from __future__ import annotations

import itertools
import json
import random
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import pytest

from milo.gateway import FixtureBackend
from milo.metrics import (
    confusion_metrics,
    judge_human_agreement,
    paired_t_test_one_sided,
    spearman_rho,
    weighted_average,
)
from milo.model import CriterionGrade, FeedbackSource, ProjectSpec, QAFeedback, QuestionKind, QuestionSpec
from milo.pipeline import judge_annotation
from milo.prompts import render_judge_prompt, render_preannotation_prompt
from milo.reports import collect_report
from milo.rubric import (
    Criterion,
    GradingScaleRubric,
    QAStatus,
    RubricMode,
    builtin_fixture,
    gate,
    score_grading_scale,
    uniform_credits,
)
from milo.store import Database
from milo.workflow import NoOpenJobs, Workflow

from conftest import FakeClock, make_gateway
from prompt_examples import GRADING_EXAMPLE, POINT_DEDUCTION_EXAMPLE, PREANNOTATION_EXAMPLE
from test_metrics import CATEGORY_COUNTS, by_category, oracle_spearman
from test_workflow import answers_for

GOLDEN = Path(__file__).parent / "golden"


def report_pass(name: str) -> None:
    print(f"ACCEPTANCE PASS: {name}")


def best_time(fn, repeats: int = 3) -> float:
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def test_eq2_worked_example():
    levels = uniform_credits(["1", "2", "3", "4", "5"])
    rubric = GradingScaleRubric(
        criteria=(
            Criterion("helpfulness", "", 0.30, levels),
            Criterion("truthfulness", "", 0.30, levels),
            Criterion("harmlessness", "", 0.40, levels),
        )
    )
    grades = {"helpfulness": "3", "truthfulness": "2", "harmlessness": "5"}
    score = score_grading_scale(rubric, grades)["score"]
    assert abs(score - 0.70) < 1e-12
    elapsed = best_time(lambda: score_grading_scale(rubric, grades))
    assert elapsed < 1e-3
    report_pass(f"eq2 worked example: score {score:.12f} in {elapsed * 1e6:.0f}us")


def test_gating_badges():
    assert gate(1.00, 0.8) is QAStatus.PASSED
    assert gate(0.75, 0.8) is QAStatus.REDO
    elapsed = best_time(lambda: (gate(1.00, 0.8), gate(0.75, 0.8)))
    assert elapsed < 1e-3
    report_pass("gating: 1.00 -> PASSED, 0.75 -> REDO at threshold 0.8")


def test_weighted_average_reproduction():
    start = time.perf_counter()
    cases = [
        ("word count with assist", [48.5, 42.6, 43.3, 58.8, 90.1, 78.5], 52.70),
        ("word count without assist", [38.3, 42.7, 26.7, 32.7, 48.9, 35.4], 37.91),
        ("helpfulness win with", [24.7, 47.5, 31.1, 36.9, 11.1, 15.9], 25.96),
        ("helpfulness win without", [24.7, 20, 11.1, 17.4, 17.8, 27.3], 22.88),
        ("honesty win with", [17.4, 5, 31.1, 6.5, 13.3, 6.8], 15.90),
        ("honesty win without", [13.6, 0, 13.3, 30.4, 46.7, 13.6], 15.61),
        ("AHT with assist", [444, 335, 289, 443, 551, 490], 436.26),
        ("AHT without assist", [389, 484, 156, 213, 244, 268], 353.54),
    ]
    for label, cells, expected in cases:
        got = weighted_average(by_category(cells), CATEGORY_COUNTS)
        assert abs(got - expected) <= 0.01, (label, got, expected)
    elapsed = time.perf_counter() - start
    assert elapsed < 1.0
    report_pass(f"weighted averages: 8/8 table cells reproduced within 0.01 in {elapsed:.3f}s")


def test_degenerate_precision_convention():
    metrics = confusion_metrics([False, False, False, False], [False, False, False, True])
    assert metrics["precision"] == 0.0
    assert metrics["recall"] == 0.0
    report_pass("degenerate precision: TP=0 gives precision 0.000 and recall 0.000")


def test_oracle_equivalence():
    # spearman vs exhaustive mid-rank Pearson, lengths <= 8 with ties
    checked = 0
    for n in (3, 4):
        for x in itertools.product((0, 1, 2), repeat=n):
            if len(set(x)) == 1:
                continue
            for y in itertools.product((0, 1, 2), repeat=n):
                if len(set(y)) == 1:
                    continue
                assert abs(spearman_rho(list(x), list(y))["rho"] - oracle_spearman(x, y)) < 1e-12
                checked += 1
    rng = random.Random(7)
    for _ in range(500):
        n = rng.randint(5, 8)
        x = [rng.randint(0, 4) for _ in range(n)]
        y = [rng.randint(0, 4) for _ in range(n)]
        if len(set(x)) == 1 or len(set(y)) == 1:
            continue
        assert abs(spearman_rho(x, y)["rho"] - oracle_spearman(x, y)) < 1e-12
        checked += 1

    # confusion vs brute-force counting on every length-4 pattern
    for bits in itertools.product([False, True], repeat=8):
        preds, golds = list(bits[:4]), list(bits[4:])
        m = confusion_metrics(preds, golds)
        tp = sum(p and g for p, g in zip(preds, golds))
        fp = sum(p and not g for p, g in zip(preds, golds))
        tn = sum(not p and not g for p, g in zip(preds, golds))
        fn = sum(not p and g for p, g in zip(preds, golds))
        assert m["accuracy"] == (tp + tn) / 4
        assert m["precision"] == (tp / (tp + fp) if tp + fp else 0.0)
        assert m["recall"] == (tp / (tp + fn) if tp + fn else 0.0)

    # paired t-test vs the pre-computed hand oracle
    result = paired_t_test_one_sided([1, 2, 3, 4, 5])
    assert abs(result["t"] - 4.242640687119285) < 1e-9
    assert abs(result["p_one_sided"] - 0.006617799781841345) < 1e-9
    assert abs(result["ci95"][0] - 1.0367568385224423) < 1e-9
    assert abs(result["ci95"][1] - 4.963243161477558) < 1e-9
    report_pass(f"oracle equivalence: spearman x{checked}, confusion x256, t-test hand oracle")


def _vqa_project(rubric, threshold) -> ProjectSpec:
    return ProjectSpec(
        id="vqa-accept",
        description="Evaluate VQA annotations.",
        labeling_instructions="Respond factually.",
        questions=(
            QuestionSpec("query", "Write a query.", QuestionKind.FREE_TEXT),
            QuestionSpec("annotator_response", "Write a response.", QuestionKind.FREE_TEXT),
        ),
        rubric=rubric,
        redo_threshold=threshold,
        qa_fields_of_interest=("annotator_response",),
    )


def test_judge_pipeline_hermetic_run():
    start = time.perf_counter()
    rubric, threshold = builtin_fixture("vqa_judge_rubric_binary")
    criteria = [c.name for c in rubric.criteria]
    project = _vqa_project(rubric, threshold)

    clock = FakeClock()
    flow = Workflow(Database(":memory:"), clock=clock)
    flow.create_project(project)
    n = 200
    lines = [
        json.dumps(
            {
                "id": f"subj-{i:04d}",
                "fields": {"image": {"kind": "image-ref", "value": f"img://{i}"}},
            }
        )
        for i in range(n)
    ]
    assert flow.ingest_subjects(project.id, lines)["accepted"] == n
    flow.create_queue("q", project.id, [])

    annotation_ids = []
    for i in range(n):
        worker = f"w{i % 8}"
        job, _ = flow.lease_job("q", worker)
        clock.advance(1_000)
        answers = {"query": f"what is in image {i}?", "annotator_response": f"response item {i}"}
        annotation_ids.append(flow.submit_annotation(job.id, worker, answers).id)

    # scripted replies: mostly Good, some Minimum; 10 annotations answer
    # unparsably on the first Tone / Style prompt and recover on the retry
    unparsable_items = {f"response item {i}" for i in range(0, n, 20)}

    def script(prompt: str):
        if "## Quality Criteria Name\nTone / Style" in prompt:
            if any(f'"{item}"' in prompt for item in unparsable_items):
                if "Respond with exactly one of" not in prompt:
                    return "cannot quite decide"
                return "Rating: Good"
        if "## Quality Criteria Name\nComprehensiveness" in prompt and '"response item 00' in prompt:
            return "Rating: Minimum\nComment: thin."
        return None

    backend = FixtureBackend(rules=[script], fallback="Rating: Good\nComment: fine.")
    gateway = make_gateway(backend, max_parallel=8)

    feedbacks = []
    for annotation_id in annotation_ids:
        feedbacks.append(judge_annotation(flow, annotation_id, gateway))

    assert backend.call_count == 4 * n + len(unparsable_items)
    for feedback in feedbacks:
        feedback.validate_against(rubric)
        assert feedback.status is gate(feedback.score, threshold)
        assert feedback.source is FeedbackSource.LLM_JUDGE
        assert len(feedback.criterion_grades) == len(criteria)

    # planted-disagreement corpus for the judge-human agreement statistic
    rng = random.Random(11)
    human = []
    for feedback in feedbacks:
        grades = {g.criterion: g.level for g in feedback.criterion_grades}
        if rng.random() < 0.3:
            victim = rng.choice(criteria)
            grades[victim] = "Insufficient" if grades[victim] != "Insufficient" else "Minimum"
        human.append(
            QAFeedback.create(
                id=f"h-{feedback.id}",
                annotation_id=feedback.annotation_id,
                source=FeedbackSource.RESEARCHER,
                mode=RubricMode.GRADING_SCALE,
                score=feedback.score,
                threshold=threshold,
                created_at=clock(),
                criterion_grades=tuple(
                    CriterionGrade(c, level) for c, level in grades.items()
                ),
            )
        )
    agreement = judge_human_agreement(feedbacks, human, criteria)
    assert agreement["overall_exact_rate"] <= min(agreement["per_criterion"].values()) + 1e-12
    assert agreement["disagreement_distribution"], "planted disagreements must appear"

    elapsed = time.perf_counter() - start
    assert elapsed < 30.0
    report_pass(
        f"judge hermetic run: {n} annotations, {backend.call_count} gateway calls "
        f"({len(unparsable_items)} retries), agreement overall "
        f"{agreement['overall_exact_rate']:.3f} <= min per-criterion, in {elapsed:.1f}s"
    )


def test_prompt_golden_files():
    pre = render_preannotation_prompt(**PREANNOTATION_EXAMPLE)
    assert pre == (GOLDEN / "preannotation_comment_example.txt").read_text(encoding="utf-8")
    assert "Answer Yes or No." in pre

    pd = render_judge_prompt(POINT_DEDUCTION_EXAMPLE, RubricMode.POINT_DEDUCTION)
    assert pd == (GOLDEN / "judge_point_deduction_example.txt").read_text(encoding="utf-8")
    pd_headers = [line for line in pd.splitlines() if line.startswith("## ")]
    assert pd_headers == [
        "## Introduction",
        "## Project Descriptions",
        "## Labeling Instructions",
        "## Review Subjects",
        "## Error Category Name",
        "## Error Category Definition",
        "## Conclusion",
    ]

    gs = render_judge_prompt(GRADING_EXAMPLE, RubricMode.GRADING_SCALE)
    assert gs == (GOLDEN / "judge_grading_example.txt").read_text(encoding="utf-8")
    gs_headers = [line for line in gs.splitlines() if line.startswith("## ")]
    assert gs_headers == [
        "## Introduction",
        "## Project Description",
        "## Labeling Instructions",
        "## Review Subjects",
        "## Quality Criteria Name",
        "## Quality Criteria Definition",
        "## Grade Options",
    ]
    assert "N/A, Minimum, Good, Insufficient" in gs
    report_pass("prompt goldens: three byte-identical renders, sections in table order")


def test_leasing_safety_under_contention(comment_project):
    start = time.perf_counter()
    flow = Workflow(Database(":memory:"))
    flow.create_project(comment_project)
    lines = [
        json.dumps({"id": f"s{i}", "fields": {"comment": {"kind": "text", "value": f"c{i}"}}})
        for i in range(10)
    ]
    flow.ingest_subjects(comment_project.id, lines)
    flow.create_queue("contended", comment_project.id, [])

    def attempt(i: int):
        try:
            job, _ = flow.lease_job("contended", f"w{i}")
            return job.id
        except NoOpenJobs:
            return None

    with ThreadPoolExecutor(max_workers=64) as pool:
        outcomes = list(pool.map(attempt, range(1000)))
    leased = [j for j in outcomes if j is not None]
    assert len(leased) == 10, f"{len(leased)} successes"
    assert len(set(leased)) == 10, "double-lease detected"
    rows = flow.db.query("SELECT id, lease_annotator FROM jobs WHERE queue_id='contended'")
    assert all(row["lease_annotator"] is not None for row in rows)
    elapsed = time.perf_counter() - start
    assert elapsed < 10.0
    report_pass(
        f"leasing safety: 1000 concurrent attempts, exactly 10 leases, 0 double-leases, "
        f"in {elapsed:.1f}s"
    )


def test_export_gating_randomized(comment_project):
    start = time.perf_counter()
    clock = FakeClock()
    flow = Workflow(Database(":memory:"), clock=clock)
    flow.create_project(comment_project)
    n = 500
    lines = [
        json.dumps({"id": f"s{i}", "fields": {"comment": {"kind": "text", "value": f"c{i}"}}})
        for i in range(n)
    ]
    flow.ingest_subjects(comment_project.id, lines)
    flow.create_queue("big", comment_project.id, [])
    answers = answers_for(comment_project)
    annotation_ids = []
    for i in range(n):
        worker = f"w{i % 25}"
        job, _ = flow.lease_job("big", worker)
        clock.advance(100)
        annotation_ids.append(flow.submit_annotation(job.id, worker, answers).id)

    rng = random.Random(99)
    latest_status = {}
    fb_count = 0
    for annotation_id in annotation_ids:
        for _ in range(rng.randint(0, 3)):
            score = rng.choice([0.0, 0.25, 0.5, 0.75, 0.8, 1.0])
            fb_count += 1
            feedback = QAFeedback.create(
                id=f"fb{fb_count}",
                annotation_id=annotation_id,
                source=rng.choice(list(FeedbackSource)),
                mode=RubricMode.GRADING_SCALE,
                score=score,
                threshold=0.8,
                created_at=clock(),
                criterion_grades=(CriterionGrade("Comprehensiveness", "Good"),),
            )
            flow.record_feedback(feedback)
            latest_status[annotation_id] = feedback.status

    records, manifest = flow.export_lines(project_id=comment_project.id)
    exported = {r["annotation_id"] for r in records}
    redo_ids = {a for a, s in latest_status.items() if s is QAStatus.REDO}
    passed_again = {a for a, s in latest_status.items() if s is QAStatus.PASSED}
    assert exported & redo_ids == set(), "a latest-REDO annotation leaked into the export"
    assert passed_again <= exported, "a re-PASSED annotation went missing"
    assert manifest["exported"] == len(exported) == n - len(redo_ids)
    for record in records:
        assert record["handling_time"] >= 0
    elapsed = time.perf_counter() - start
    assert elapsed < 5.0
    report_pass(
        f"export gating: {n} annotations, {fb_count} feedback events, "
        f"{len(redo_ids)} latest-REDO all excluded, in {elapsed:.1f}s"
    )


def test_report_layouts_from_synthetic_data(comment_project):
    # The paper-scale human outcomes (12% AHT reduction, rho -0.37, +3.09% /
    # +0.28%, 79.55% agreement) are not reproducible at desk scale; the
    # property suites above substitute for them. The layouts, however, must
    # render from synthetic data.
    clock = FakeClock()
    flow = Workflow(Database(":memory:"), clock=clock)
    flow.create_project(comment_project)
    lines = [
        json.dumps(
            {
                "id": f"s{i}",
                "fields": {
                    "category": {"kind": "text", "value": "CatA" if i % 2 else "CatB"},
                    "comment": {"kind": "text", "value": f"c{i}"},
                },
                "gold": {"civility": "Yes"},
            }
        )
        for i in range(6)
    ]
    flow.ingest_subjects(comment_project.id, lines)
    queue_a = flow.create_queue("A", comment_project.id, ["wa"])
    queue_b = flow.create_queue("B", comment_project.id, ["wb"], llm_assist_enabled=True)
    for queue, worker in ((queue_a, "wa"), (queue_b, "wb")):
        for _ in range(6):
            job, _ = flow.lease_job(queue.id, worker)
            clock.advance(7_000)
            flow.submit_annotation(job.id, worker, answers_for(comment_project))
    flow.record_comparison(
        comment_project.id,
        {
            "category": "CatA",
            "responses": {"r1": "with-assist", "r2": "without-assist"},
            "winners": {"helpfulness": "r1", "honesty": "tie-good"},
        },
    )

    table2 = collect_report(flow, comment_project.id, "table2")
    assert "Overall (micro)" in table2["text"] and "Overall (macro)" in table2["text"]
    assert "Accuracy (without)" in table2["text"]

    table5 = collect_report(flow, comment_project.id, "table5")
    assert "Weighted Average" in table5["text"]
    assert "Helpfulness Win Ratio (with)" in table5["text"]

    table7 = collect_report(flow, comment_project.id, "table7")
    assert "Agreement rate %" in table7["text"] and "Overall" in table7["text"]

    aht = collect_report(flow, comment_project.id, "aht")
    assert "Weighted Average" in aht["text"]
    assert "AHT (with)" in aht["text"] and "AHT (without)" in aht["text"]

    for result in (table2, table5, table7, aht):
        json.dumps(result["report"])  # report.json payloads are serializable
    report_pass("report layouts: table2/table5/table7/aht render from synthetic data")
