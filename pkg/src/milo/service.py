"""HTTP API over the workflow, pipeline, and reports, with embedded storage.

Roles follow the platform's actors (annotator, auditor, researcher) plus
admin. Auth is a pluggable bearer-token table; without one the service runs in
permissive dev mode where ``X-Principal`` / ``X-Role`` headers select the
session. Every mutating endpoint honors an ``Idempotency-Key`` header: a
replayed key returns the recorded response instead of re-executing.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from enum import Enum

from fastapi import Depends, FastAPI, Request, Response
from fastapi.responses import JSONResponse, PlainTextResponse

from milo import pipeline, reports
from milo.errors import MiloError
from milo.gateway import (
    ENV_ENDPOINT,
    Gateway,
    GatewayError,
    HttpBackend,
    load_fixture_backend,
)
from milo.model import (
    CriterionGrade,
    ErrorOccurrence,
    FeedbackSource,
    ModelValidationError,
    ProjectSpec,
    QAFeedback,
    ReviewSubject,
    validate_project,
)
from milo.prompts import Harshness, PromptError
from milo.rubric import RubricError, RubricMode, score_grading_scale, score_point_deduction
from milo.store import Database, StorageUnavailable, dumps, loads
from milo.workflow import (
    DuplicateEntity,
    IncompleteAnswers,
    InvalidReason,
    NoOpenJobs,
    NotEligible,
    NotLeaseHolder,
    NotRedo,
    TooFewAnnotators,
    UnknownEntity,
    Workflow,
    WorkflowError,
    now_ms,
)

ENV_DB_PATH = "MILO_DB_PATH"


class Role(str, Enum):
    ANNOTATOR = "annotator"
    AUDITOR = "auditor"
    RESEARCHER = "researcher"
    ADMIN = "admin"


@dataclass(frozen=True)
class SessionContext:
    principal_id: str
    role: Role


class Forbidden(MiloError):
    pass


class Unauthorized(MiloError):
    pass


class BadRequest(MiloError):
    pass


@dataclass
class ServiceConfig:
    db_path: str = ":memory:"
    fixtures_path: str | None = None
    gateway: Gateway | None = None
    auth_tokens: dict | None = None  # token -> (principal_id, role)
    lease_timeout_s: float | None = None
    max_parallel: int = 8
    clock: object = None  # ms-clock override for tests

    @classmethod
    def from_env(cls) -> ServiceConfig:
        return cls(db_path=os.environ.get(ENV_DB_PATH, "milo.db"))


_ERROR_STATUS = [
    (Unauthorized, 401),
    (Forbidden, 403),
    ((NoOpenJobs, UnknownEntity), 404),
    ((NotLeaseHolder, DuplicateEntity, NotRedo), 409),
    (
        (
            IncompleteAnswers,
            InvalidReason,
            ModelValidationError,
            RubricError,
            PromptError,
            TooFewAnnotators,
            BadRequest,
        ),
        422,
    ),
    ((GatewayError, pipeline.JudgeIncomplete), 502),
    (StorageUnavailable, 503),
]


def _status_for(exc: MiloError) -> int:
    for types, status in _ERROR_STATUS:
        if isinstance(exc, types):
            return status
    if isinstance(exc, WorkflowError):
        return 422
    return 500


def _need(payload: dict, key: str):
    if key not in payload or payload[key] in (None, ""):
        raise BadRequest(f"missing required field {key!r}")
    return payload[key]


def build_gateway(config: ServiceConfig) -> Gateway | None:
    if config.gateway is not None:
        return config.gateway
    gw = Gateway(max_parallel=config.max_parallel)
    if config.fixtures_path:
        gw.register("default", load_fixture_backend(config.fixtures_path))
        return gw
    if os.environ.get(ENV_ENDPOINT):
        gw.register("default", HttpBackend.from_env())
        return gw
    return None


def create_app(config: ServiceConfig | None = None) -> FastAPI:
    config = config or ServiceConfig.from_env()
    db = Database(config.db_path)
    flow_kwargs = {}
    if config.clock is not None:
        flow_kwargs["clock"] = config.clock
    flow = Workflow(db, lease_timeout_s=config.lease_timeout_s, **flow_kwargs)
    gateway = build_gateway(config)

    app = FastAPI(title="milo", version="0.1.0")
    app.state.workflow = flow
    app.state.gateway = gateway
    app.state.config = config

    def session(request: Request) -> SessionContext:
        if config.auth_tokens is not None:
            header = request.headers.get("Authorization", "")
            if not header.startswith("Bearer "):
                raise Unauthorized("missing bearer token")
            token = header[len("Bearer "):]
            if token not in config.auth_tokens:
                raise Unauthorized("unknown token")
            principal, role = config.auth_tokens[token]
            return SessionContext(principal, Role(role))
        return SessionContext(
            request.headers.get("X-Principal", "dev"),
            Role(request.headers.get("X-Role", "admin")),
        )

    def require(ctx: SessionContext, *roles: Role) -> None:
        if ctx.role not in roles:
            raise Forbidden(f"role {ctx.role.value!r} may not call this endpoint")

    def require_self_or(ctx: SessionContext, principal: str, *roles: Role) -> None:
        if ctx.principal_id == principal:
            return
        require(ctx, *roles)

    def need_gateway() -> Gateway:
        if gateway is None:
            raise GatewayError("no model backend configured (set MILO_LLM_ENDPOINT or fixtures)")
        return gateway

    @app.exception_handler(MiloError)
    async def milo_error_handler(request: Request, exc: MiloError):
        return JSONResponse(
            status_code=_status_for(exc),
            content={"error": type(exc).__name__, "detail": str(exc)},
        )

    def idempotent(request: Request, response: Response, compute):
        """Replay stored responses for repeated Idempotency-Key headers."""
        key = request.headers.get("Idempotency-Key")
        endpoint = f"{request.method} {request.url.path}"
        if key:
            row = db.one("SELECT * FROM idempotency WHERE key=?", (key,))
            if row is not None:
                if row["endpoint"] != endpoint:
                    raise BadRequest("idempotency key reused on a different endpoint")
                response.status_code = row["status"]
                response.headers["X-Idempotent-Replay"] = "true"
                return loads(row["body"])
        body = compute()
        if key:
            with db.transaction() as conn:
                conn.execute(
                    "INSERT OR IGNORE INTO idempotency (key, endpoint, status, body)"
                    " VALUES (?, ?, ?, ?)",
                    (key, endpoint, response.status_code or 200, dumps(body)),
                )
        return body

    # -- projects ---------------------------------------------------------------

    @app.post("/projects")
    def create_project(
        payload: dict, request: Request, response: Response, ctx: SessionContext = Depends(session)
    ):
        require(ctx, Role.RESEARCHER, Role.ADMIN)

        def compute():
            spec = ProjectSpec.from_dict(payload)
            samples = [ReviewSubject.from_dict(s) for s in payload.get("sample_subjects", [])]
            report = validate_project(spec, samples)
            flow.create_project(spec)
            return {"project": spec.to_dict(), "rubric_field_report": report}

        return idempotent(request, response, compute)

    @app.post("/projects/{project_id}/subjects")
    async def ingest_subjects(
        project_id: str, request: Request, response: Response, ctx: SessionContext = Depends(session)
    ):
        require(ctx, Role.RESEARCHER, Role.ADMIN)
        raw = (await request.body()).decode("utf-8")

        def compute():
            return flow.ingest_subjects(project_id, raw.splitlines())

        return idempotent(request, response, compute)

    @app.get("/projects/{project_id}")
    def get_project(project_id: str, ctx: SessionContext = Depends(session)):
        return {"project": flow.project(project_id).to_dict()}

    @app.get("/projects/{project_id}/subjects")
    def list_subjects(project_id: str, ctx: SessionContext = Depends(session)):
        require(ctx, Role.AUDITOR, Role.RESEARCHER, Role.ADMIN)
        return {"subjects": [s.to_dict() for s in flow.subjects(project_id)]}

    # -- queues -------------------------------------------------------------------

    @app.post("/queues")
    def create_queue(
        payload: dict, request: Request, response: Response, ctx: SessionContext = Depends(session)
    ):
        require(ctx, Role.RESEARCHER, Role.ADMIN)

        def compute():
            if "split" in payload:
                split = payload["split"]
                queue_a, queue_b = flow.create_experiment_split(
                    project_id=_need(split, "project_id"),
                    annotators=_need(split, "annotators"),
                    seed=split.get("seed", 0),
                    subject_ids=split.get("subject_ids"),
                    id_prefix=split.get("id_prefix", "queue"),
                )
                out = {"queue_a": queue_a.to_dict(), "queue_b": queue_b.to_dict()}
                if split.get("preannotate"):
                    out["preannotated"] = pipeline.preannotate_queue(
                        flow, queue_b.id, need_gateway()
                    )
                return out
            queue = flow.create_queue(
                queue_id=_need(payload, "id"),
                project_id=_need(payload, "project_id"),
                annotators=payload.get("annotators", []),
                llm_assist_enabled=payload.get("llm_assist_enabled", False),
                subject_ids=payload.get("subject_ids"),
            )
            out = {"queue": queue.to_dict()}
            if payload.get("preannotate"):
                out["preannotated"] = pipeline.preannotate_queue(flow, queue.id, need_gateway())
            return out

        return idempotent(request, response, compute)

    @app.get("/queues/{queue_id}")
    def get_queue(queue_id: str, ctx: SessionContext = Depends(session)):
        return {"queue": flow.queue(queue_id).to_dict()}

    # -- annotating ------------------------------------------------------------------

    @app.post("/queues/{queue_id}/lease")
    def lease(
        queue_id: str,
        payload: dict,
        request: Request,
        response: Response,
        ctx: SessionContext = Depends(session),
    ):
        require(ctx, Role.ANNOTATOR, Role.ADMIN)
        annotator_id = _need(payload, "annotator_id")
        if ctx.role is Role.ANNOTATOR and ctx.principal_id != annotator_id:
            raise Forbidden("annotators may only lease for themselves")

        def compute():
            job, annotation = flow.lease_job(queue_id, annotator_id)
            queue = flow.queue(queue_id)
            return {
                "job": job.to_dict(),
                "annotation_id": annotation.id,
                "subject": flow.subject(job.subject_id).to_dict(),
                "llm_assist_enabled": queue.llm_assist_enabled,
                "preannotation": flow.preannotation(job.id) if queue.llm_assist_enabled else None,
            }

        return idempotent(request, response, compute)

    @app.post("/jobs/{job_id}/submit")
    def submit(
        job_id: str,
        payload: dict,
        request: Request,
        response: Response,
        ctx: SessionContext = Depends(session),
    ):
        require(ctx, Role.ANNOTATOR, Role.ADMIN)
        annotator_id = _need(payload, "annotator_id")
        if ctx.role is Role.ANNOTATOR and ctx.principal_id != annotator_id:
            raise Forbidden("annotators may only submit for themselves")

        def compute():
            annotation = flow.submit_annotation(job_id, annotator_id, _need(payload, "answers"))
            out = {"annotation": annotation.to_dict()}
            if annotation.assist_draft:
                texts = [a for a in annotation.answers.values() if isinstance(a, str) and a.strip()]
                checks = [
                    pipeline.check_verbatim_copy(text, annotation.assist_draft) for text in texts
                ]
                check = max(checks, key=lambda c: c["similarity"], default=None)
                if check is not None:
                    flow.set_copy_check(annotation.id, check["flag"], check["similarity"])
                    out["copy_check"] = check
            return out

        return idempotent(request, response, compute)

    @app.post("/jobs/{job_id}/reject")
    def reject(
        job_id: str,
        payload: dict,
        request: Request,
        response: Response,
        ctx: SessionContext = Depends(session),
    ):
        require(ctx, Role.ANNOTATOR, Role.ADMIN)
        annotator_id = _need(payload, "annotator_id")
        if ctx.role is Role.ANNOTATOR and ctx.principal_id != annotator_id:
            raise Forbidden("annotators may only reject their own leases")

        def compute():
            job = flow.reject_job(job_id, annotator_id, _need(payload, "reason"))
            return {"job": job.to_dict()}

        return idempotent(request, response, compute)

    # -- assistance and judging ----------------------------------------------------

    @app.post("/annotations/{annotation_id}/assist")
    def assist(
        annotation_id: str,
        payload: dict,
        request: Request,
        response: Response,
        ctx: SessionContext = Depends(session),
    ):
        require(ctx, Role.ANNOTATOR, Role.ADMIN)
        annotation = flow.annotation(annotation_id)
        if ctx.role is Role.ANNOTATOR and ctx.principal_id != annotation.annotator_id:
            raise Forbidden("annotators may only request drafts on their own annotations")
        queue = flow.queue(flow.annotation_context(annotation_id)["queue_id"])
        if not queue.llm_assist_enabled:
            raise Forbidden("assist is disabled on this queue")

        def compute():
            draft = pipeline.generate_assist_draft(
                annotation_id,
                _need(payload, "query"),
                need_gateway(),
                flow,
                context_fields=[tuple(p) for p in payload.get("context_fields", [])],
            )
            return {"draft": draft}

        return idempotent(request, response, compute)

    @app.post("/annotations/{annotation_id}/judge")
    def judge_endpoint(
        annotation_id: str,
        request: Request,
        response: Response,
        payload: dict | None = None,
        ctx: SessionContext = Depends(session),
    ):
        require(ctx, Role.AUDITOR, Role.RESEARCHER, Role.ADMIN)
        payload = payload or {}

        def compute():
            feedback = pipeline.judge_annotation(
                flow,
                annotation_id,
                need_gateway(),
                harshness=Harshness(payload.get("harshness", "standard")),
                max_explanation_tokens=int(payload.get("max_explanation_tokens", 256)),
            )
            return {"feedback": feedback.to_dict()}

        return idempotent(request, response, compute)

    @app.post("/annotations/{annotation_id}/qa")
    def human_qa(
        annotation_id: str,
        payload: dict,
        request: Request,
        response: Response,
        ctx: SessionContext = Depends(session),
    ):
        require(ctx, Role.AUDITOR, Role.RESEARCHER, Role.ADMIN)

        def compute():
            ctx2 = flow.annotation_context(annotation_id)
            project = flow.project(ctx2["project_id"])
            rubric = project.rubric
            source = (
                FeedbackSource.RESEARCHER
                if ctx.role is Role.RESEARCHER
                else FeedbackSource.AUDITOR
            )
            if rubric.mode is RubricMode.GRADING_SCALE:
                grades_in = _need(payload, "criterion_grades")
                grades = {g["criterion"]: g["level"] for g in grades_in}
                score = score_grading_scale(rubric, grades)["score"]
                feedback = QAFeedback.create(
                    id=f"fb-{source.value.lower()}-{now_ms()}-{annotation_id[-8:]}",
                    annotation_id=annotation_id,
                    source=source,
                    mode=RubricMode.GRADING_SCALE,
                    score=score,
                    threshold=project.redo_threshold,
                    created_at=flow.clock(),
                    criterion_grades=tuple(
                        CriterionGrade(g["criterion"], g["level"], g.get("explanation", ""))
                        for g in grades_in
                    ),
                )
            else:
                occurrences_in = payload.get("error_occurrences", [])
                occurrences = tuple(
                    ErrorOccurrence(o["category"], o.get("count", 1), o.get("comment", ""))
                    for o in occurrences_in
                )
                score = score_point_deduction(
                    rubric, [(o.category, o.count) for o in occurrences]
                )["score"]
                feedback = QAFeedback.create(
                    id=f"fb-{source.value.lower()}-{now_ms()}-{annotation_id[-8:]}",
                    annotation_id=annotation_id,
                    source=source,
                    mode=RubricMode.POINT_DEDUCTION,
                    score=score,
                    threshold=project.redo_threshold,
                    created_at=flow.clock(),
                    error_occurrences=occurrences,
                )
            feedback.validate_against(rubric)
            routing = flow.record_feedback(feedback)
            return {"feedback": feedback.to_dict(), "routing": routing}

        return idempotent(request, response, compute)

    # -- reads -------------------------------------------------------------------------

    @app.get("/annotations/{annotation_id}")
    def get_annotation(annotation_id: str, ctx: SessionContext = Depends(session)):
        ctx2 = flow.annotation_context(annotation_id)
        annotation = ctx2["annotation"]
        require_self_or(
            ctx, annotation.annotator_id, Role.AUDITOR, Role.RESEARCHER, Role.ADMIN
        )
        return {
            "annotation": annotation.to_dict(),
            "subject": flow.subject(ctx2["subject_id"]).to_dict(),
            "queue_id": ctx2["queue_id"],
            "project_id": ctx2["project_id"],
            "feedback": [f.to_dict() for f in flow.feedback_history(annotation_id)],
            "assist_events": flow.assist_events(annotation_id),
        }

    @app.get("/annotators/{annotator_id}/feedback")
    def annotator_feedback(annotator_id: str, ctx: SessionContext = Depends(session)):
        require_self_or(ctx, annotator_id, Role.AUDITOR, Role.RESEARCHER, Role.ADMIN)
        return {"feedback": flow.annotator_feedback(annotator_id)}

    @app.get("/annotators/{annotator_id}/review-tasks")
    def annotator_review_tasks(annotator_id: str, ctx: SessionContext = Depends(session)):
        require_self_or(ctx, annotator_id, Role.AUDITOR, Role.RESEARCHER, Role.ADMIN)
        return {"review_tasks": flow.review_tasks(annotator_id)}

    # -- comparisons ----------------------------------------------------------------------

    @app.post("/comparisons")
    def record_comparison(
        payload: dict, request: Request, response: Response, ctx: SessionContext = Depends(session)
    ):
        require(ctx, Role.AUDITOR, Role.RESEARCHER, Role.ADMIN)

        def compute():
            record = {
                "category": _need(payload, "category"),
                "responses": payload.get("responses", {}),
                "winners": _need(payload, "winners"),
            }
            flow.record_comparison(_need(payload, "project_id"), record)
            return {"recorded": record}

        return idempotent(request, response, compute)

    # -- export and reports ----------------------------------------------------------------

    @app.get("/projects/{project_id}/export")
    def export(project_id: str, format: str = "json", ctx: SessionContext = Depends(session)):
        require(ctx, Role.RESEARCHER, Role.ADMIN)
        records, manifest = flow.export_lines(project_id=project_id)
        if format == "jsonl":
            body = "".join(dumps(r) + "\n" for r in records)
            return PlainTextResponse(body, media_type="application/jsonl")
        return {"manifest": manifest, "records": records}

    @app.get("/projects/{project_id}/reports/{kind}")
    def report(project_id: str, kind: str, ctx: SessionContext = Depends(session)):
        require(ctx, Role.AUDITOR, Role.RESEARCHER, Role.ADMIN)
        return reports.collect_report(flow, project_id, kind)

    return app


def serve(config: ServiceConfig, host: str = "127.0.0.1", port: int = 8000):
    """Run the service under uvicorn (blocking)."""
    import uvicorn

    uvicorn.run(create_app(config), host=host, port=port)
