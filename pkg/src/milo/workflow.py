"""Queues, atomic job leasing, submission with server-side timing, rejection,
QA routing, experiment splits, and export."""

from __future__ import annotations

import json
import math
import random
import time
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

from milo.errors import MiloError
from milo.model import (
    Annotation,
    AnnotationSource,
    AnnotationStatus,
    ProjectSpec,
    QAFeedback,
    QuestionKind,
    ReviewSubject,
    validate_project,
)
from milo.rubric import QAStatus
from milo.store import Database, dumps, loads


class WorkflowError(MiloError):
    pass


class TooFewAnnotators(WorkflowError):
    pass


class NoOpenJobs(WorkflowError):
    pass


class NotEligible(WorkflowError):
    pass


class NotLeaseHolder(WorkflowError):
    pass


class IncompleteAnswers(WorkflowError):
    def __init__(self, problems: list[str]):
        super().__init__(f"incomplete answers: {problems}")
        self.problems = problems


class InvalidReason(WorkflowError):
    pass


class NotRedo(WorkflowError):
    pass


class DestinationUnwritable(WorkflowError):
    pass


class UnknownEntity(WorkflowError):
    pass


class DuplicateEntity(WorkflowError):
    pass


class JobState(str, Enum):
    OPEN = "open"
    LEASED = "leased"
    SUBMITTED = "submitted"
    REJECTED = "rejected"


class RejectionReason(str, Enum):
    LANGUAGE = "Language"
    RENDERING = "Rendering"
    NOT_ENOUGH_CONTEXT = "NotEnoughContext"


@dataclass(frozen=True)
class Job:
    id: str
    subject_id: str
    queue_id: str
    state: JobState
    lease: tuple | None = None  # (annotator_id, leased_at ms)
    rejection_reason: RejectionReason | None = None

    def __post_init__(self):
        if (self.lease is not None) != (self.state is JobState.LEASED):
            raise WorkflowError("lease present iff state=leased")
        if (self.rejection_reason is not None) != (self.state is JobState.REJECTED):
            raise WorkflowError("rejection_reason present iff state=rejected")

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "subject_id": self.subject_id,
            "queue_id": self.queue_id,
            "state": self.state.value,
            "lease": list(self.lease) if self.lease else None,
            "rejection_reason": self.rejection_reason.value if self.rejection_reason else None,
        }


@dataclass(frozen=True)
class Queue:
    id: str
    project_id: str
    job_ids: tuple
    assignment: tuple  # eligible annotator ids; empty means open to all
    llm_assist_enabled: bool

    def __post_init__(self):
        object.__setattr__(self, "job_ids", tuple(self.job_ids))
        object.__setattr__(self, "assignment", tuple(self.assignment))
        if len(set(self.job_ids)) != len(self.job_ids):
            raise WorkflowError("job ids must be unique within a queue")

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "project_id": self.project_id,
            "job_ids": list(self.job_ids),
            "assignment": list(self.assignment),
            "llm_assist_enabled": self.llm_assist_enabled,
        }


def now_ms() -> int:
    return int(time.time() * 1000)


def _row_to_job(row) -> Job:
    lease = None
    if row["state"] == JobState.LEASED.value:
        lease = (row["lease_annotator"], row["leased_at"])
    reason = RejectionReason(row["rejection_reason"]) if row["rejection_reason"] else None
    return Job(
        id=row["id"],
        subject_id=row["subject_id"],
        queue_id=row["queue_id"],
        state=JobState(row["state"]),
        lease=lease,
        rejection_reason=reason,
    )


class Workflow:
    """All annotation-lifecycle state transitions over one Database.

    ``clock`` returns UTC milliseconds and exists so tests can control time.
    ``lease_timeout_s`` (optional) reopens abandoned leases older than the
    timeout whenever new leases are requested.
    """

    def __init__(self, db: Database, clock=now_ms, lease_timeout_s: float | None = None):
        self.db = db
        self.clock = clock
        self.lease_timeout_s = lease_timeout_s

    # -- projects and subjects ------------------------------------------------

    def create_project(self, spec: ProjectSpec) -> None:
        with self.db.transaction() as conn:
            existing = conn.execute("SELECT id FROM projects WHERE id=?", (spec.id,)).fetchone()
            if existing:
                raise DuplicateEntity(f"project {spec.id!r} already exists")
            conn.execute(
                "INSERT INTO projects (id, data) VALUES (?, ?)", (spec.id, dumps(spec.to_dict()))
            )

    def project(self, project_id: str) -> ProjectSpec:
        row = self.db.one("SELECT data FROM projects WHERE id=?", (project_id,))
        if row is None:
            raise UnknownEntity(f"no project {project_id!r}")
        return ProjectSpec.from_dict(loads(row["data"]))

    def ingest_subjects(self, project_id: str, lines) -> dict:
        """Ingest a subjects.jsonl stream; invalid lines are reported, not fatal.

        Returns accepted/rejected details plus the rubric field-of-interest
        validation report over everything ingested so far (report-only).
        """
        spec = self.project(project_id)
        accepted = 0
        rejected: list[dict] = []
        with self.db.transaction() as conn:
            pos_row = conn.execute(
                "SELECT COALESCE(MAX(position), -1) AS p FROM subjects WHERE project_id=?",
                (project_id,),
            ).fetchone()
            position = pos_row["p"] + 1
            for line_no, line in enumerate(lines, start=1):
                line = line.strip()
                if not line:
                    continue
                try:
                    raw = json.loads(line, object_pairs_hook=_reject_duplicate_keys)
                    subject = ReviewSubject.from_dict(raw)
                except (ValueError, KeyError, TypeError, MiloError) as exc:
                    rejected.append({"line": line_no, "reason": str(exc)})
                    continue
                dup = conn.execute("SELECT id FROM subjects WHERE id=?", (subject.id,)).fetchone()
                if dup:
                    rejected.append({"line": line_no, "reason": f"duplicate subject id {subject.id!r}"})
                    continue
                conn.execute(
                    "INSERT INTO subjects (id, project_id, position, data) VALUES (?, ?, ?, ?)",
                    (subject.id, project_id, position, dumps(subject.to_dict())),
                )
                position += 1
                accepted += 1
        report = validate_project(spec, self.subjects(project_id))
        return {"accepted": accepted, "rejected": rejected, "rubric_field_report": report}

    def subjects(self, project_id: str) -> list[ReviewSubject]:
        rows = self.db.query(
            "SELECT data FROM subjects WHERE project_id=? ORDER BY position", (project_id,)
        )
        return [ReviewSubject.from_dict(loads(r["data"])) for r in rows]

    def subject(self, subject_id: str) -> ReviewSubject:
        row = self.db.one("SELECT data FROM subjects WHERE id=?", (subject_id,))
        if row is None:
            raise UnknownEntity(f"no subject {subject_id!r}")
        return ReviewSubject.from_dict(loads(row["data"]))

    # -- queues ----------------------------------------------------------------

    def create_queue(
        self,
        queue_id: str,
        project_id: str,
        annotators=(),
        llm_assist_enabled: bool = False,
        subject_ids=None,
        pair_id: str | None = None,
    ) -> Queue:
        self.project(project_id)
        if subject_ids is None:
            subject_ids = [s.id for s in self.subjects(project_id)]
        # ids double as URL path segments, so no slashes
        job_ids = [f"{queue_id}:{sid}" for sid in subject_ids]
        with self.db.transaction() as conn:
            if conn.execute("SELECT id FROM queues WHERE id=?", (queue_id,)).fetchone():
                raise DuplicateEntity(f"queue {queue_id!r} already exists")
            conn.execute(
                "INSERT INTO queues (id, project_id, llm_assist, assignment, pair_id)"
                " VALUES (?, ?, ?, ?, ?)",
                (queue_id, project_id, int(llm_assist_enabled), dumps(list(annotators)), pair_id),
            )
            for position, (job_id, subject_id) in enumerate(zip(job_ids, subject_ids)):
                conn.execute(
                    "INSERT INTO jobs (id, queue_id, subject_id, position, state)"
                    " VALUES (?, ?, ?, ?, ?)",
                    (job_id, queue_id, subject_id, position, JobState.OPEN.value),
                )
        return self.queue(queue_id)

    def queue(self, queue_id: str) -> Queue:
        row = self.db.one("SELECT * FROM queues WHERE id=?", (queue_id,))
        if row is None:
            raise UnknownEntity(f"no queue {queue_id!r}")
        job_rows = self.db.query(
            "SELECT id FROM jobs WHERE queue_id=? ORDER BY position", (queue_id,)
        )
        return Queue(
            id=row["id"],
            project_id=row["project_id"],
            job_ids=tuple(r["id"] for r in job_rows),
            assignment=tuple(loads(row["assignment"])),
            llm_assist_enabled=bool(row["llm_assist"]),
        )

    def create_experiment_split(
        self,
        project_id: str,
        annotators,
        seed: int,
        subject_ids=None,
        id_prefix: str = "queue",
    ) -> tuple[Queue, Queue]:
        """Two paired queues over the identical subject list: A without LLM
        assistance, B with it. Annotators are partitioned by seeded shuffle
        into groups whose sizes differ by at most one."""
        annotators = list(annotators)
        if len(annotators) < 2:
            raise TooFewAnnotators(f"need at least 2 annotators, got {len(annotators)}")
        shuffled = annotators[:]
        random.Random(seed).shuffle(shuffled)
        half = math.ceil(len(shuffled) / 2)
        group_a, group_b = shuffled[:half], shuffled[half:]
        pair_id = f"{id_prefix}-pair"
        queue_a = self.create_queue(
            f"{id_prefix}-A", project_id, group_a, llm_assist_enabled=False,
            subject_ids=subject_ids, pair_id=pair_id,
        )
        queue_b = self.create_queue(
            f"{id_prefix}-B", project_id, group_b, llm_assist_enabled=True,
            subject_ids=subject_ids, pair_id=pair_id,
        )
        return queue_a, queue_b

    # -- jobs ------------------------------------------------------------------

    def job(self, job_id: str) -> Job:
        row = self.db.one("SELECT * FROM jobs WHERE id=?", (job_id,))
        if row is None:
            raise UnknownEntity(f"no job {job_id!r}")
        return _row_to_job(row)

    def reopen_expired_leases(self, max_age_s: float) -> int:
        cutoff = self.clock() - int(max_age_s * 1000)
        with self.db.transaction() as conn:
            cur = conn.execute(
                "UPDATE jobs SET state=?, lease_annotator=NULL, leased_at=NULL"
                " WHERE state=? AND leased_at < ?",
                (JobState.OPEN.value, JobState.LEASED.value, cutoff),
            )
            return cur.rowcount

    def lease_job(self, queue_id: str, annotator_id: str) -> tuple[Job, Annotation]:
        """Atomically lease the first open job whose subject the annotator has
        never worked; creates (or resumes) the draft annotation for it."""
        queue_row = self.db.one("SELECT * FROM queues WHERE id=?", (queue_id,))
        if queue_row is None:
            raise UnknownEntity(f"no queue {queue_id!r}")
        assignment = loads(queue_row["assignment"])
        if assignment and annotator_id not in assignment:
            raise NotEligible(f"{annotator_id!r} is not assigned to queue {queue_id!r}")
        if self.lease_timeout_s is not None:
            self.reopen_expired_leases(self.lease_timeout_s)
        now = self.clock()
        with self.db.transaction() as conn:
            rows = conn.execute(
                "SELECT * FROM jobs WHERE queue_id=? AND state=? ORDER BY position",
                (queue_id, JobState.OPEN.value),
            ).fetchall()
            chosen = None
            for row in rows:
                worked = conn.execute(
                    "SELECT 1 FROM annotations WHERE annotator_id=? AND subject_id=? LIMIT 1",
                    (annotator_id, row["subject_id"]),
                ).fetchone()
                if worked is None:
                    chosen = row
                    break
            if chosen is None:
                raise NoOpenJobs(f"no open jobs for {annotator_id!r} on queue {queue_id!r}")
            updated = conn.execute(
                "UPDATE jobs SET state=?, lease_annotator=?, leased_at=? WHERE id=? AND state=?",
                (JobState.LEASED.value, annotator_id, now, chosen["id"], JobState.OPEN.value),
            )
            if updated.rowcount != 1:
                raise NoOpenJobs("job was taken concurrently")
            annotation = Annotation(
                id=f"{chosen['id']}::{annotator_id}",
                job_id=chosen["id"],
                annotator_id=annotator_id,
                answers={},
                started_at=now,
            )
            conn.execute(
                "INSERT OR REPLACE INTO annotations"
                " (id, job_id, queue_id, project_id, subject_id, annotator_id, data)"
                " VALUES (?, ?, ?, ?, ?, ?, ?)",
                (
                    annotation.id,
                    chosen["id"],
                    queue_id,
                    queue_row["project_id"],
                    chosen["subject_id"],
                    annotator_id,
                    dumps(annotation.to_dict()),
                ),
            )
        return self.job(chosen["id"]), annotation

    def _check_answers(self, spec: ProjectSpec, answers: dict) -> None:
        problems = []
        for question in spec.questions:
            answer = answers.get(question.id)
            if answer is None:
                problems.append(f"missing answer for {question.id!r}")
                continue
            if question.kind is QuestionKind.FREE_TEXT:
                if not isinstance(answer, str) or not answer.strip():
                    problems.append(f"empty free-text answer for {question.id!r}")
            elif question.kind is QuestionKind.SINGLE_SELECT:
                if not isinstance(answer, str) or answer not in question.options:
                    problems.append(f"answer for {question.id!r} must be one of its options")
            else:  # multi-select
                if not isinstance(answer, list):
                    problems.append(f"answer for {question.id!r} must be a list of options")
                    continue
                bad = [a for a in answer if a not in question.options]
                if bad:
                    problems.append(f"unknown options {bad} for {question.id!r}")
                elif not answer and not question.allow_none:
                    problems.append(f"{question.id!r} requires at least one option")
        extra = set(answers) - {q.id for q in spec.questions}
        if extra:
            problems.append(f"answers for unknown questions {sorted(extra)}")
        if problems:
            raise IncompleteAnswers(problems)

    def submit_annotation(self, job_id: str, annotator_id: str, answers: dict) -> Annotation:
        with self.db.transaction() as conn:
            row = conn.execute("SELECT * FROM jobs WHERE id=?", (job_id,)).fetchone()
            if row is None:
                raise UnknownEntity(f"no job {job_id!r}")
            if row["state"] != JobState.LEASED.value or row["lease_annotator"] != annotator_id:
                raise NotLeaseHolder(f"job {job_id!r} is not leased by {annotator_id!r}")
            queue_row = conn.execute(
                "SELECT project_id FROM queues WHERE id=?", (row["queue_id"],)
            ).fetchone()
            spec = ProjectSpec.from_dict(
                loads(
                    conn.execute(
                        "SELECT data FROM projects WHERE id=?", (queue_row["project_id"],)
                    ).fetchone()["data"]
                )
            )
            self._check_answers(spec, answers)
            normalized = {
                qid: sorted(a) if isinstance(a, list) else a for qid, a in answers.items()
            }
            ann_row = conn.execute(
                "SELECT * FROM annotations WHERE job_id=? AND annotator_id=?",
                (job_id, annotator_id),
            ).fetchone()
            annotation = Annotation.from_dict(loads(ann_row["data"]))
            annotation.answers = normalized
            annotation.submitted_at = max(self.clock(), annotation.started_at)
            annotation.status = AnnotationStatus.SUBMITTED
            conn.execute(
                "UPDATE annotations SET data=? WHERE id=?",
                (dumps(annotation.to_dict()), annotation.id),
            )
            conn.execute(
                "UPDATE jobs SET state=?, lease_annotator=NULL, leased_at=NULL WHERE id=?",
                (JobState.SUBMITTED.value, job_id),
            )
        return annotation

    def reject_job(self, job_id: str, annotator_id: str, reason) -> Job:
        try:
            reason = RejectionReason(reason)
        except ValueError:
            raise InvalidReason(f"invalid rejection reason {reason!r}") from None
        with self.db.transaction() as conn:
            row = conn.execute("SELECT * FROM jobs WHERE id=?", (job_id,)).fetchone()
            if row is None:
                raise UnknownEntity(f"no job {job_id!r}")
            if row["state"] != JobState.LEASED.value or row["lease_annotator"] != annotator_id:
                raise NotLeaseHolder(f"job {job_id!r} is not leased by {annotator_id!r}")
            conn.execute(
                "UPDATE jobs SET state=?, lease_annotator=NULL, leased_at=NULL,"
                " rejection_reason=? WHERE id=?",
                (JobState.REJECTED.value, reason.value, job_id),
            )
            # the draft annotation is abandoned with the job
            conn.execute(
                "DELETE FROM annotations WHERE job_id=? AND annotator_id=? AND json_extract(data, '$.status')=?",
                (job_id, annotator_id, AnnotationStatus.DRAFT.value),
            )
        return self.job(job_id)

    # -- annotations, assistance, feedback --------------------------------------

    def annotation(self, annotation_id: str) -> Annotation:
        row = self.db.one("SELECT data FROM annotations WHERE id=?", (annotation_id,))
        if row is None:
            raise UnknownEntity(f"no annotation {annotation_id!r}")
        return Annotation.from_dict(loads(row["data"]))

    def annotation_context(self, annotation_id: str) -> dict:
        row = self.db.one("SELECT * FROM annotations WHERE id=?", (annotation_id,))
        if row is None:
            raise UnknownEntity(f"no annotation {annotation_id!r}")
        return {
            "annotation": Annotation.from_dict(loads(row["data"])),
            "queue_id": row["queue_id"],
            "project_id": row["project_id"],
            "subject_id": row["subject_id"],
            "copy_flag": row["copy_flag"],
            "copy_similarity": row["copy_similarity"],
        }

    def record_assist_draft(self, annotation_id: str, query: str, draft: str) -> Annotation:
        """Append the draft to the audit trail and keep the latest on the
        annotation; the source flips to human-with-assist immediately."""
        with self.db.transaction() as conn:
            row = conn.execute("SELECT data FROM annotations WHERE id=?", (annotation_id,)).fetchone()
            if row is None:
                raise UnknownEntity(f"no annotation {annotation_id!r}")
            annotation = Annotation.from_dict(loads(row["data"]))
            annotation.source = AnnotationSource.HUMAN_WITH_ASSIST
            annotation.assist_draft = draft
            conn.execute(
                "INSERT INTO assist_events (annotation_id, query, draft, created_at)"
                " VALUES (?, ?, ?, ?)",
                (annotation_id, query, draft, self.clock()),
            )
            conn.execute(
                "UPDATE annotations SET data=? WHERE id=?",
                (dumps(annotation.to_dict()), annotation_id),
            )
        return annotation

    def assist_events(self, annotation_id: str) -> list[dict]:
        rows = self.db.query(
            "SELECT * FROM assist_events WHERE annotation_id=? ORDER BY seq", (annotation_id,)
        )
        return [
            {"query": r["query"], "draft": r["draft"], "created_at": r["created_at"]}
            for r in rows
        ]

    def set_copy_check(self, annotation_id: str, flag: bool, similarity: float) -> None:
        with self.db.transaction() as conn:
            conn.execute(
                "UPDATE annotations SET copy_flag=?, copy_similarity=? WHERE id=?",
                (int(flag), similarity, annotation_id),
            )

    def record_feedback(self, feedback: QAFeedback) -> dict | None:
        """Persist feedback and apply its gate outcome to the annotation.

        Latest feedback wins: the annotation status follows this record. REDO
        routes a review task back to the original annotator; the routing
        record is returned for REDO, None otherwise.
        """
        with self.db.transaction() as conn:
            ann_row = conn.execute(
                "SELECT data FROM annotations WHERE id=?", (feedback.annotation_id,)
            ).fetchone()
            if ann_row is None:
                raise UnknownEntity(f"no annotation {feedback.annotation_id!r}")
            annotation = Annotation.from_dict(loads(ann_row["data"]))
            if annotation.status is AnnotationStatus.DRAFT:
                raise WorkflowError("cannot attach feedback to a draft annotation")
            seq_row = conn.execute(
                "SELECT COALESCE(MAX(seq), 0) AS s FROM feedback WHERE annotation_id=?",
                (feedback.annotation_id,),
            ).fetchone()
            conn.execute(
                "INSERT INTO feedback (id, annotation_id, seq, data) VALUES (?, ?, ?, ?)",
                (feedback.id, feedback.annotation_id, seq_row["s"] + 1, dumps(feedback.to_dict())),
            )
            annotation.status = (
                AnnotationStatus.PASSED
                if feedback.status is QAStatus.PASSED
                else AnnotationStatus.REDO
            )
            conn.execute(
                "UPDATE annotations SET data=? WHERE id=?",
                (dumps(annotation.to_dict()), annotation.id),
            )
        if feedback.status is QAStatus.REDO:
            return self.route_redo(feedback)
        return None

    def route_redo(self, feedback: QAFeedback) -> dict:
        """Enqueue one open review task for the original annotator (idempotent)."""
        if feedback.status is not QAStatus.REDO:
            raise NotRedo("feedback status is not REDO")
        with self.db.transaction() as conn:
            ann_row = conn.execute(
                "SELECT data FROM annotations WHERE id=?", (feedback.annotation_id,)
            ).fetchone()
            if ann_row is None:
                raise UnknownEntity(f"no annotation {feedback.annotation_id!r}")
            annotation = Annotation.from_dict(loads(ann_row["data"]))
            annotation.status = AnnotationStatus.REDO
            conn.execute(
                "UPDATE annotations SET data=? WHERE id=?",
                (dumps(annotation.to_dict()), annotation.id),
            )
            open_task = conn.execute(
                "SELECT id FROM review_tasks WHERE annotation_id=? AND state='open'",
                (feedback.annotation_id,),
            ).fetchone()
            if open_task:
                task_id = open_task["id"]
            else:
                task_id = f"review::{feedback.annotation_id}"
                conn.execute(
                    "INSERT INTO review_tasks (id, annotation_id, annotator_id, state)"
                    " VALUES (?, ?, ?, 'open')",
                    (task_id, feedback.annotation_id, annotation.annotator_id),
                )
        return {
            "review_task_id": task_id,
            "annotation_id": feedback.annotation_id,
            "annotator_id": annotation.annotator_id,
        }

    def review_tasks(self, annotator_id: str | None = None, state: str = "open") -> list[dict]:
        sql = "SELECT * FROM review_tasks WHERE state=?"
        params: list = [state]
        if annotator_id is not None:
            sql += " AND annotator_id=?"
            params.append(annotator_id)
        return [dict(r) for r in self.db.query(sql, params)]

    def feedback_history(self, annotation_id: str) -> list[QAFeedback]:
        rows = self.db.query(
            "SELECT data FROM feedback WHERE annotation_id=? ORDER BY seq", (annotation_id,)
        )
        return [QAFeedback.from_dict(loads(r["data"])) for r in rows]

    def latest_feedback(self, annotation_id: str) -> QAFeedback | None:
        history = self.feedback_history(annotation_id)
        return history[-1] if history else None

    def annotator_feedback(self, annotator_id: str) -> list[dict]:
        """All feedback on the annotator's work, newest first, honoring the
        project-level visibility toggle for judge feedback."""
        rows = self.db.query(
            "SELECT a.id AS annotation_id, a.project_id AS project_id, f.data AS data, f.seq AS seq"
            " FROM annotations a JOIN feedback f ON f.annotation_id = a.id"
            " WHERE a.annotator_id=? ORDER BY f.seq DESC",
            (annotator_id,),
        )
        visible = []
        specs: dict[str, ProjectSpec] = {}
        human_reviewed: dict[str, bool] = {}
        for row in rows:
            fb = QAFeedback.from_dict(loads(row["data"]))
            project_id = row["project_id"]
            if project_id not in specs:
                specs[project_id] = self.project(project_id)
            if specs[project_id].feedback_visibility == "after_audit" and fb.source.value == "LLM_JUDGE":
                if row["annotation_id"] not in human_reviewed:
                    human_reviewed[row["annotation_id"]] = any(
                        f.source.value in ("AUDITOR", "RESEARCHER")
                        for f in self.feedback_history(row["annotation_id"])
                    )
                if not human_reviewed[row["annotation_id"]]:
                    continue
            visible.append({"annotation_id": row["annotation_id"], "feedback": fb.to_dict()})
        return visible

    # -- pre-annotations ---------------------------------------------------------

    def save_preannotation(self, job_id: str, data: dict) -> None:
        with self.db.transaction() as conn:
            conn.execute(
                "INSERT OR REPLACE INTO preannotations (job_id, data) VALUES (?, ?)",
                (job_id, dumps(data)),
            )

    def preannotation(self, job_id: str) -> dict | None:
        row = self.db.one("SELECT data FROM preannotations WHERE job_id=?", (job_id,))
        return loads(row["data"]) if row else None

    # -- comparisons ---------------------------------------------------------------

    def record_comparison(self, project_id: str, record: dict) -> None:
        with self.db.transaction() as conn:
            conn.execute(
                "INSERT INTO comparisons (project_id, data) VALUES (?, ?)",
                (project_id, dumps(record)),
            )

    def comparisons(self, project_id: str) -> list[dict]:
        rows = self.db.query(
            "SELECT data FROM comparisons WHERE project_id=? ORDER BY seq", (project_id,)
        )
        return [loads(r["data"]) for r in rows]

    # -- export ---------------------------------------------------------------------

    def _export_scope(self, project_id: str | None, queue_id: str | None):
        if queue_id is not None:
            return "queue_id=?", (queue_id,)
        if project_id is not None:
            return "project_id=?", (project_id,)
        raise WorkflowError("export needs a project or queue")

    def export_lines(self, project_id: str | None = None, queue_id: str | None = None):
        """Yield (records, manifest): one record per submitted annotation whose
        latest feedback is not REDO; annotations without feedback are included."""
        where, params = self._export_scope(project_id, queue_id)
        rows = self.db.query(f"SELECT * FROM annotations WHERE {where} ORDER BY id", params)
        records = []
        exported = excluded_redo = 0
        conflicts = []
        for row in rows:
            annotation = Annotation.from_dict(loads(row["data"]))
            if annotation.status is AnnotationStatus.DRAFT:
                continue
            history = self.feedback_history(annotation.id)
            latest = history[-1] if history else None
            statuses_by_source = {(f.source.value, f.status.value) for f in history}
            if len({s for _, s in statuses_by_source}) > 1 and len({src for src, _ in statuses_by_source}) > 1:
                conflicts.append(annotation.id)
            if latest is not None and latest.status is QAStatus.REDO:
                excluded_redo += 1
                continue
            subject = self.subject(row["subject_id"])
            record = {
                "annotation_id": annotation.id,
                "job_id": annotation.job_id,
                "queue_id": row["queue_id"],
                "annotator_id": annotation.annotator_id,
                "subject": subject.to_dict(),
                "answers": annotation.answers,
                "handling_time": annotation.handling_time,
                "source": annotation.source.value,
                "feedback": latest.to_dict() if latest else None,
            }
            if annotation.assist_draft is not None:
                record["assist_draft"] = annotation.assist_draft
            records.append(record)
            exported += 1

        if queue_id is not None:
            rejected = self.db.one(
                "SELECT COUNT(*) AS c FROM jobs WHERE queue_id=? AND state=?",
                (queue_id, JobState.REJECTED.value),
            )["c"]
        else:
            rejected = self.db.one(
                "SELECT COUNT(*) AS c FROM jobs j JOIN queues q ON j.queue_id = q.id"
                " WHERE q.project_id=? AND j.state=?",
                (project_id, JobState.REJECTED.value),
            )["c"]
        manifest = {
            "exported": exported,
            "excluded_redo": excluded_redo,
            "rejected": rejected,
            "generated_at": self.clock(),
            "status_conflicts": conflicts,
        }
        return records, manifest

    def export(self, destination, project_id: str | None = None, queue_id: str | None = None) -> dict:
        """Write export.jsonl and manifest.json under ``destination``."""
        records, manifest = self.export_lines(project_id=project_id, queue_id=queue_id)
        dest = Path(destination)
        try:
            dest.mkdir(parents=True, exist_ok=True)
            with open(dest / "export.jsonl", "w", encoding="utf-8") as fh:
                for record in records:
                    fh.write(dumps(record) + "\n")
            with open(dest / "manifest.json", "w", encoding="utf-8") as fh:
                json.dump(manifest, fh, indent=2, sort_keys=True)
        except OSError as exc:
            raise DestinationUnwritable(str(exc)) from exc
        return manifest


def _reject_duplicate_keys(pairs):
    seen = set()
    out = {}
    for key, value in pairs:
        if key in seen:
            raise ValueError(f"duplicate field name {key!r}")
        seen.add(key)
        out[key] = value
    return out
