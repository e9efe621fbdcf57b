from __future__ import annotations

import json
import threading

import pytest
from fastapi.testclient import TestClient

from milo.gateway import FixtureBackend
from milo.service import ServiceConfig, create_app

from conftest import FakeClock, make_gateway


def hdr(principal: str, role: str) -> dict:
    return {"X-Principal": principal, "X-Role": role}


RESEARCHER = hdr("res-1", "researcher")
AUDITOR = hdr("aud-1", "auditor")
ADMIN = hdr("root", "admin")


def subjects_jsonl(n: int, with_gold: bool = False) -> str:
    lines = []
    for i in range(n):
        subject = {
            "id": f"s{i}",
            "fields": {
                "post": {"kind": "text", "value": f"post {i}"},
                "comment": {"kind": "text", "value": f"comment {i}"},
            },
        }
        if with_gold:
            subject["gold"] = {"civility": "Yes"}
        lines.append(json.dumps(subject))
    return "\n".join(lines)


@pytest.fixture
def app_client(tmp_path, comment_project, clock):
    backend = FixtureBackend(fallback="Rating: Good\nComment: fine.")
    config = ServiceConfig(
        db_path=str(tmp_path / "milo.db"), gateway=make_gateway(backend), clock=clock
    )
    app = create_app(config)
    with TestClient(app) as client:
        client.backend = backend
        yield client


def create_project_via_api(client, project, headers=RESEARCHER):
    resp = client.post("/projects", json=project.to_dict(), headers=headers)
    assert resp.status_code == 200, resp.text
    return resp


class TestProjectsAndSubjects:
    def test_ingest_and_durability_across_restart(self, tmp_path, comment_project, clock):
        config = ServiceConfig(db_path=str(tmp_path / "milo.db"), clock=clock)
        with TestClient(create_app(config)) as client:
            create_project_via_api(client, comment_project)
            resp = client.post(
                f"/projects/{comment_project.id}/subjects",
                content=subjects_jsonl(2),
                headers=RESEARCHER,
            )
            assert resp.status_code == 200
            assert resp.json()["accepted"] == 2
        # restart: a fresh app over the same database file
        with TestClient(create_app(ServiceConfig(db_path=str(tmp_path / "milo.db")))) as client:
            resp = client.get(f"/projects/{comment_project.id}/subjects", headers=RESEARCHER)
            assert len(resp.json()["subjects"]) == 2

    def test_invalid_lines_reported(self, app_client, comment_project):
        create_project_via_api(app_client, comment_project)
        body = subjects_jsonl(1) + "\nnot json"
        resp = app_client.post(
            f"/projects/{comment_project.id}/subjects", content=body, headers=RESEARCHER
        )
        assert resp.json()["accepted"] == 1
        assert resp.json()["rejected"][0]["line"] == 2

    def test_annotator_cannot_create_projects(self, app_client, comment_project):
        resp = app_client.post(
            "/projects", json=comment_project.to_dict(), headers=hdr("w1", "annotator")
        )
        assert resp.status_code == 403

    def test_duplicate_project_conflict(self, app_client, comment_project):
        create_project_via_api(app_client, comment_project)
        resp = app_client.post("/projects", json=comment_project.to_dict(), headers=RESEARCHER)
        assert resp.status_code == 409


def seed_queue(client, project, n_subjects=2, queue_id="q", assist=False, annotators=()):
    create_project_via_api(client, project)
    resp = client.post(
        f"/projects/{project.id}/subjects", content=subjects_jsonl(n_subjects), headers=RESEARCHER
    )
    assert resp.status_code == 200
    resp = client.post(
        "/queues",
        json={
            "id": queue_id,
            "project_id": project.id,
            "annotators": list(annotators),
            "llm_assist_enabled": assist,
        },
        headers=RESEARCHER,
    )
    assert resp.status_code == 200, resp.text
    return resp.json()["queue"]


def answers_payload(project):
    answers = {}
    for q in project.questions:
        if q.kind.value == "free-text":
            answers[q.id] = f"text for {q.id}"
        elif q.kind.value == "single-select":
            answers[q.id] = q.options[0]
        else:
            answers[q.id] = [q.options[0]]
    return answers


class TestAnnotationLoop:
    def test_lease_submit_loop(self, app_client, comment_project, clock):
        seed_queue(app_client, comment_project)
        lease = app_client.post(
            "/queues/q/lease", json={"annotator_id": "w1"}, headers=hdr("w1", "annotator")
        )
        assert lease.status_code == 200
        job_id = lease.json()["job"]["id"]
        assert lease.json()["subject"]["id"] == "s0"
        clock.advance(12_000)
        submit = app_client.post(
            f"/jobs/{job_id}/submit",
            json={"annotator_id": "w1", "answers": answers_payload(comment_project)},
            headers=hdr("w1", "annotator"),
        )
        assert submit.status_code == 200
        annotation = submit.json()["annotation"]
        assert annotation["status"] == "submitted"
        assert annotation["submitted_at"] - annotation["started_at"] == 12_000

    def test_annotator_cannot_lease_for_another(self, app_client, comment_project):
        seed_queue(app_client, comment_project)
        resp = app_client.post(
            "/queues/q/lease", json={"annotator_id": "w2"}, headers=hdr("w1", "annotator")
        )
        assert resp.status_code == 403

    def test_reject_flow(self, app_client, comment_project):
        seed_queue(app_client, comment_project)
        lease = app_client.post(
            "/queues/q/lease", json={"annotator_id": "w1"}, headers=hdr("w1", "annotator")
        )
        job_id = lease.json()["job"]["id"]
        resp = app_client.post(
            f"/jobs/{job_id}/reject",
            json={"annotator_id": "w1", "reason": "Language"},
            headers=hdr("w1", "annotator"),
        )
        assert resp.status_code == 200
        assert resp.json()["job"]["state"] == "rejected"
        bad = app_client.post(
            f"/jobs/{job_id}/reject",
            json={"annotator_id": "w1", "reason": "Language"},
            headers=hdr("w1", "annotator"),
        )
        assert bad.status_code == 409

    def test_idempotency_key_replays_submit(self, app_client, comment_project):
        seed_queue(app_client, comment_project)
        lease = app_client.post(
            "/queues/q/lease", json={"annotator_id": "w1"}, headers=hdr("w1", "annotator")
        )
        job_id = lease.json()["job"]["id"]
        payload = {"annotator_id": "w1", "answers": answers_payload(comment_project)}
        headers = {**hdr("w1", "annotator"), "Idempotency-Key": "submit-1"}
        first = app_client.post(f"/jobs/{job_id}/submit", json=payload, headers=headers)
        assert first.status_code == 200
        second = app_client.post(f"/jobs/{job_id}/submit", json=payload, headers=headers)
        assert second.status_code == 200
        assert second.headers.get("X-Idempotent-Replay") == "true"
        assert second.json() == first.json()
        # without the key the retry hits the state machine and conflicts
        third = app_client.post(
            f"/jobs/{job_id}/submit", json=payload, headers=hdr("w1", "annotator")
        )
        assert third.status_code == 409

    def test_concurrent_submits_every_job_submitted_once(
        self, tmp_path, comment_project
    ):
        config = ServiceConfig(db_path=str(tmp_path / "load.db"))
        with TestClient(create_app(config)) as client:
            seed_queue(client, comment_project, n_subjects=100, queue_id="load")
            answers = answers_payload(comment_project)
            submitted = []
            errors = []

            def worker(worker_id: str):
                while True:
                    lease = client.post(
                        "/queues/load/lease",
                        json={"annotator_id": worker_id},
                        headers=hdr(worker_id, "annotator"),
                    )
                    if lease.status_code == 404:
                        return
                    if lease.status_code != 200:
                        errors.append(lease.text)
                        return
                    job_id = lease.json()["job"]["id"]
                    resp = client.post(
                        f"/jobs/{job_id}/submit",
                        json={"annotator_id": worker_id, "answers": answers},
                        headers=hdr(worker_id, "annotator"),
                    )
                    if resp.status_code == 200:
                        submitted.append(job_id)
                    else:
                        errors.append(resp.text)

            threads = [
                threading.Thread(target=worker, args=(f"w{i}",)) for i in range(20)
            ]
            for t in threads:
                t.start()
            for t in threads:
                t.join()
            assert errors == []
            assert len(submitted) == 100
            assert len(set(submitted)) == 100


class TestAssistAndJudge:
    def leased_annotation(self, client, project, assist=True):
        seed_queue(client, project, assist=assist)
        lease = client.post(
            "/queues/q/lease", json={"annotator_id": "w1"}, headers=hdr("w1", "annotator")
        )
        return lease.json()

    def test_assist_stores_draft(self, app_client, vqa_project):
        lease = self.leased_annotation(app_client, vqa_project)
        app_client.backend.add("what is this?", "a helpful draft")
        resp = app_client.post(
            f"/annotations/{lease['annotation_id']}/assist",
            json={"query": "what is this?"},
            headers=hdr("w1", "annotator"),
        )
        assert resp.status_code == 200
        assert resp.json()["draft"] == "a helpful draft"

    def test_assist_forbidden_on_non_assist_queue(self, app_client, vqa_project):
        lease = self.leased_annotation(app_client, vqa_project, assist=False)
        resp = app_client.post(
            f"/annotations/{lease['annotation_id']}/assist",
            json={"query": "anything"},
            headers=hdr("w1", "annotator"),
        )
        assert resp.status_code == 403

    def test_verbatim_copy_flagged_on_submit(self, app_client, vqa_project, clock):
        lease = self.leased_annotation(app_client, vqa_project)
        app_client.backend.add("q?", "exact draft text")
        app_client.post(
            f"/annotations/{lease['annotation_id']}/assist",
            json={"query": "q?"},
            headers=hdr("w1", "annotator"),
        )
        answers = answers_payload(vqa_project)
        answers["annotator_response"] = "exact draft text"
        resp = app_client.post(
            f"/jobs/{lease['job']['id']}/submit",
            json={"annotator_id": "w1", "answers": answers},
            headers=hdr("w1", "annotator"),
        )
        assert resp.json()["copy_check"]["flag"] is True
        assert resp.json()["annotation"]["source"] == "human-with-assist"

    def submitted_annotation(self, client, project, clock):
        lease = self.leased_annotation(client, project, assist=False)
        clock.advance(9_000)
        client.post(
            f"/jobs/{lease['job']['id']}/submit",
            json={"annotator_id": "w1", "answers": answers_payload(project)},
            headers=hdr("w1", "annotator"),
        )
        return lease["annotation_id"]

    def test_judge_endpoint_roles_and_result(self, app_client, vqa_project, clock):
        annotation_id = self.submitted_annotation(app_client, vqa_project, clock)
        forbidden = app_client.post(
            f"/annotations/{annotation_id}/judge", json={}, headers=hdr("w1", "annotator")
        )
        assert forbidden.status_code == 403
        resp = app_client.post(
            f"/annotations/{annotation_id}/judge", json={}, headers=AUDITOR
        )
        assert resp.status_code == 200
        feedback = resp.json()["feedback"]
        assert feedback["source"] == "LLM_JUDGE"
        assert feedback["score"] == 1.0
        assert feedback["status"] == "PASSED"

    def test_human_qa_and_feedback_view(self, app_client, vqa_project, clock):
        annotation_id = self.submitted_annotation(app_client, vqa_project, clock)
        grades = [
            {"criterion": c.name, "level": "Good", "explanation": "ok"}
            for c in vqa_project.rubric.criteria
        ]
        grades[1]["level"] = "Minimum"
        resp = app_client.post(
            f"/annotations/{annotation_id}/qa",
            json={"criterion_grades": grades},
            headers=AUDITOR,
        )
        assert resp.status_code == 200
        body = resp.json()
        assert body["feedback"]["score"] == 0.75
        assert body["feedback"]["status"] == "REDO"
        assert body["feedback"]["source"] == "AUDITOR"
        assert body["routing"]["annotator_id"] == "w1"

        view = app_client.get("/annotators/w1/feedback", headers=hdr("w1", "annotator"))
        assert view.status_code == 200
        assert len(view.json()["feedback"]) == 1
        other = app_client.get("/annotators/w1/feedback", headers=hdr("w2", "annotator"))
        assert other.status_code == 403

    def test_partial_grades_rejected(self, app_client, vqa_project, clock):
        annotation_id = self.submitted_annotation(app_client, vqa_project, clock)
        resp = app_client.post(
            f"/annotations/{annotation_id}/qa",
            json={"criterion_grades": [{"criterion": "Comprehensiveness", "level": "Good"}]},
            headers=AUDITOR,
        )
        assert resp.status_code == 422


class TestExportAndReports:
    def test_export_and_reports(self, app_client, comment_project, clock):
        seed_queue(app_client, comment_project, n_subjects=3)
        for worker in ("w1", "w2"):
            lease = app_client.post(
                "/queues/q/lease", json={"annotator_id": worker}, headers=hdr(worker, "annotator")
            )
            clock.advance(5_000)
            app_client.post(
                f"/jobs/{lease.json()['job']['id']}/submit",
                json={"annotator_id": worker, "answers": answers_payload(comment_project)},
                headers=hdr(worker, "annotator"),
            )
        resp = app_client.get(f"/projects/{comment_project.id}/export", headers=RESEARCHER)
        assert resp.status_code == 200
        assert resp.json()["manifest"]["exported"] == 2
        jsonl = app_client.get(
            f"/projects/{comment_project.id}/export", params={"format": "jsonl"}, headers=ADMIN
        )
        assert len(jsonl.text.strip().splitlines()) == 2

        forbidden = app_client.get(
            f"/projects/{comment_project.id}/export", headers=hdr("w1", "annotator")
        )
        assert forbidden.status_code == 403

        for kind in ("table2", "table5", "table7", "aht"):
            resp = app_client.get(
                f"/projects/{comment_project.id}/reports/{kind}", headers=RESEARCHER
            )
            assert resp.status_code == 200, (kind, resp.text)
            assert resp.json()["kind"] == kind
            assert "text" in resp.json()

    def test_comparison_recording(self, app_client, comment_project):
        create_project_via_api(app_client, comment_project)
        resp = app_client.post(
            "/comparisons",
            json={
                "project_id": comment_project.id,
                "category": "CatA",
                "responses": {"r1": "with-assist", "r2": "without-assist"},
                "winners": {"helpfulness": "r1", "honesty": "tie-good"},
            },
            headers=AUDITOR,
        )
        assert resp.status_code == 200
        report = app_client.get(
            f"/projects/{comment_project.id}/reports/table5", headers=RESEARCHER
        )
        assert report.json()["report"]["per_category"]["CatA"]["helpfulness"]["with"] == 100.0


class TestAuthTokens:
    def test_bearer_tokens_enforced(self, tmp_path, comment_project):
        config = ServiceConfig(
            db_path=str(tmp_path / "auth.db"),
            auth_tokens={"sekrit": ("res-9", "researcher")},
        )
        with TestClient(create_app(config)) as client:
            anon = client.post("/projects", json=comment_project.to_dict())
            assert anon.status_code == 401
            bad = client.post(
                "/projects",
                json=comment_project.to_dict(),
                headers={"Authorization": "Bearer wrong"},
            )
            assert bad.status_code == 401
            ok = client.post(
                "/projects",
                json=comment_project.to_dict(),
                headers={"Authorization": "Bearer sekrit"},
            )
            assert ok.status_code == 200
