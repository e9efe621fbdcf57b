"""Command-line entry points: serve, ingest, queue create/split, judge run,
export, report."""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from milo import pipeline, reports
from milo.gateway import Gateway, HttpBackend, load_fixture_backend
from milo.model import AnnotationStatus, ProjectSpec
from milo.prompts import Harshness
from milo.service import ENV_DB_PATH, ServiceConfig
from milo.service import serve as run_service
from milo.store import Database
from milo.workflow import Workflow


def _workflow(db_path: str, lease_timeout_s: float | None = None) -> Workflow:
    return Workflow(Database(db_path), lease_timeout_s=lease_timeout_s)


def _gateway(fixtures: str | None, max_parallel: int = 8) -> Gateway:
    gw = Gateway(max_parallel=max_parallel)
    if fixtures:
        gw.register("default", load_fixture_backend(fixtures))
    else:
        gw.register("default", HttpBackend.from_env())
    return gw


@click.group()
def main():
    """Model-in-the-loop annotation platform."""


@main.command()
@click.option("--db", default="milo.db", envvar=ENV_DB_PATH, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True)
@click.option("--fixtures", default=None, help="fixtures.jsonl for the scripted model backend")
@click.option("--lease-timeout-s", default=None, type=float, help="reopen leases older than this")
def serve(db, host, port, fixtures, lease_timeout_s):
    """Run the HTTP service."""
    config = ServiceConfig(db_path=db, fixtures_path=fixtures, lease_timeout_s=lease_timeout_s)
    run_service(config, host=host, port=port)


@main.command()
@click.option("--db", default="milo.db", envvar=ENV_DB_PATH, show_default=True)
@click.argument("project_file", type=click.Path(exists=True, path_type=Path))
@click.argument("subjects_file", type=click.Path(exists=True, path_type=Path), required=False)
def ingest(db, project_file, subjects_file):
    """Create/refresh a project from PROJECT_FILE and ingest SUBJECTS_FILE (jsonl)."""
    flow = _workflow(db)
    spec = ProjectSpec.from_dict(json.loads(project_file.read_text(encoding="utf-8")))
    try:
        flow.project(spec.id)
        click.echo(f"project {spec.id} already exists")
    except Exception:
        flow.create_project(spec)
        click.echo(f"created project {spec.id}")
    if subjects_file:
        with open(subjects_file, encoding="utf-8") as fh:
            result = flow.ingest_subjects(spec.id, fh)
        click.echo(f"accepted {result['accepted']}, rejected {len(result['rejected'])}")
        for item in result["rejected"]:
            click.echo(f"  line {item['line']}: {item['reason']}", err=True)
        if result["rubric_field_report"]:
            click.echo(f"unresolved rubric fields: {result['rubric_field_report']}", err=True)


@main.group()
def queue():
    """Queue management."""


@queue.command("create")
@click.option("--db", default="milo.db", envvar=ENV_DB_PATH, show_default=True)
@click.option("--project", "project_id", required=True)
@click.option("--id", "queue_id", required=True)
@click.option("--annotators", default="", help="comma-separated annotator ids (empty: open)")
@click.option("--assist/--no-assist", default=False)
@click.option("--preannotate", is_flag=True, default=False)
@click.option("--fixtures", default=None)
def queue_create(db, project_id, queue_id, annotators, assist, preannotate, fixtures):
    flow = _workflow(db)
    ids = [a for a in annotators.split(",") if a]
    q = flow.create_queue(queue_id, project_id, ids, llm_assist_enabled=assist)
    click.echo(f"created queue {q.id} with {len(q.job_ids)} jobs")
    if preannotate:
        count = pipeline.preannotate_queue(flow, q.id, _gateway(fixtures))
        click.echo(f"pre-annotated {count} jobs")


@queue.command("split")
@click.option("--db", default="milo.db", envvar=ENV_DB_PATH, show_default=True)
@click.option("--project", "project_id", required=True)
@click.option("--annotators", required=True, help="comma-separated annotator ids")
@click.option("--seed", default=0, show_default=True)
@click.option("--prefix", default="queue", show_default=True)
@click.option("--preannotate", is_flag=True, default=False)
@click.option("--fixtures", default=None)
def queue_split(db, project_id, annotators, seed, prefix, preannotate, fixtures):
    flow = _workflow(db)
    ids = [a for a in annotators.split(",") if a]
    queue_a, queue_b = flow.create_experiment_split(project_id, ids, seed, id_prefix=prefix)
    click.echo(
        f"created {queue_a.id} (no assist, {len(queue_a.assignment)} annotators) and "
        f"{queue_b.id} (assist, {len(queue_b.assignment)} annotators)"
    )
    if preannotate:
        count = pipeline.preannotate_queue(flow, queue_b.id, _gateway(fixtures))
        click.echo(f"pre-annotated {count} jobs on {queue_b.id}")


@main.group()
def judge():
    """LLM judge."""


@judge.command("run")
@click.option("--db", default="milo.db", envvar=ENV_DB_PATH, show_default=True)
@click.option("--project", "project_id", default=None, help="judge all submitted annotations")
@click.option("--annotation", "annotation_id", default=None, help="judge one annotation")
@click.option("--harshness", type=click.Choice([h.value for h in Harshness]), default="standard")
@click.option("--max-explanation-tokens", default=256, show_default=True)
@click.option("--fixtures", default=None)
def judge_run(db, project_id, annotation_id, harshness, max_explanation_tokens, fixtures):
    if not project_id and not annotation_id:
        raise click.UsageError("pass --project or --annotation")
    flow = _workflow(db)
    gw = _gateway(fixtures)
    targets = []
    if annotation_id:
        targets = [annotation_id]
    else:
        for row in flow.db.query(
            "SELECT id FROM annotations WHERE project_id=? ORDER BY id", (project_id,)
        ):
            if flow.annotation(row["id"]).status is not AnnotationStatus.DRAFT:
                targets.append(row["id"])
    for target in targets:
        feedback = pipeline.judge_annotation(
            flow,
            target,
            gw,
            harshness=Harshness(harshness),
            max_explanation_tokens=max_explanation_tokens,
        )
        click.echo(f"{target}: score {feedback.score:.2f} {feedback.status.value}")


@main.command()
@click.option("--db", default="milo.db", envvar=ENV_DB_PATH, show_default=True)
@click.option("--project", "project_id", default=None)
@click.option("--queue", "queue_id", default=None)
@click.option("--out", required=True, type=click.Path(path_type=Path))
def export(db, project_id, queue_id, out):
    """Write export.jsonl and manifest.json to OUT."""
    flow = _workflow(db)
    manifest = flow.export(out, project_id=project_id, queue_id=queue_id)
    click.echo(json.dumps(manifest, indent=2, sort_keys=True))


@main.command()
@click.option("--db", default="milo.db", envvar=ENV_DB_PATH, show_default=True)
@click.option("--project", "project_id", required=True)
@click.option("--table", "kind", type=click.Choice(reports.REPORT_KINDS), required=True)
@click.option("--out", default=None, type=click.Path(path_type=Path), help="write report.json here")
def report(db, project_id, kind, out):
    """Print a report table; optionally write the JSON payload."""
    flow = _workflow(db)
    result = reports.collect_report(flow, project_id, kind)
    click.echo(result["text"])
    if out:
        out.write_text(json.dumps(result, indent=2, sort_keys=True, default=str), encoding="utf-8")
        click.echo(f"wrote {out}")


if __name__ == "__main__":
    sys.exit(main())
