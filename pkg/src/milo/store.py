"""Embedded durable store: a single-file sqlite database in WAL mode.

One connection guarded by a process-wide lock; every state transition runs as
a short transaction under that lock, which gives the per-job compare-and-set
semantics the workflow layer relies on. No external database is needed.
"""

from __future__ import annotations

import json
import sqlite3
import threading
from contextlib import contextmanager
from pathlib import Path

from milo.errors import MiloError


class StorageUnavailable(MiloError):
    pass


_SCHEMA = """
CREATE TABLE IF NOT EXISTS projects (
    id TEXT PRIMARY KEY,
    data TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS subjects (
    id TEXT PRIMARY KEY,
    project_id TEXT NOT NULL,
    position INTEGER NOT NULL,
    data TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS queues (
    id TEXT PRIMARY KEY,
    project_id TEXT NOT NULL,
    llm_assist INTEGER NOT NULL,
    assignment TEXT NOT NULL,
    pair_id TEXT
);
CREATE TABLE IF NOT EXISTS jobs (
    id TEXT PRIMARY KEY,
    queue_id TEXT NOT NULL,
    subject_id TEXT NOT NULL,
    position INTEGER NOT NULL,
    state TEXT NOT NULL,
    lease_annotator TEXT,
    leased_at INTEGER,
    rejection_reason TEXT
);
CREATE INDEX IF NOT EXISTS jobs_by_queue ON jobs (queue_id, position);
CREATE TABLE IF NOT EXISTS annotations (
    id TEXT PRIMARY KEY,
    job_id TEXT NOT NULL,
    queue_id TEXT NOT NULL,
    project_id TEXT NOT NULL,
    subject_id TEXT NOT NULL,
    annotator_id TEXT NOT NULL,
    copy_flag INTEGER,
    copy_similarity REAL,
    data TEXT NOT NULL
);
CREATE INDEX IF NOT EXISTS annotations_by_worker ON annotations (annotator_id, subject_id);
CREATE TABLE IF NOT EXISTS assist_events (
    seq INTEGER PRIMARY KEY AUTOINCREMENT,
    annotation_id TEXT NOT NULL,
    query TEXT NOT NULL,
    draft TEXT NOT NULL,
    created_at INTEGER NOT NULL
);
CREATE TABLE IF NOT EXISTS feedback (
    id TEXT PRIMARY KEY,
    annotation_id TEXT NOT NULL,
    seq INTEGER NOT NULL,
    data TEXT NOT NULL
);
CREATE INDEX IF NOT EXISTS feedback_by_annotation ON feedback (annotation_id, seq);
CREATE TABLE IF NOT EXISTS review_tasks (
    id TEXT PRIMARY KEY,
    annotation_id TEXT NOT NULL,
    annotator_id TEXT NOT NULL,
    state TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS preannotations (
    job_id TEXT PRIMARY KEY,
    data TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS comparisons (
    seq INTEGER PRIMARY KEY AUTOINCREMENT,
    project_id TEXT NOT NULL,
    data TEXT NOT NULL
);
CREATE TABLE IF NOT EXISTS idempotency (
    key TEXT PRIMARY KEY,
    endpoint TEXT NOT NULL,
    status INTEGER NOT NULL,
    body TEXT NOT NULL
);
"""


class Database:
    """Thread-safe sqlite wrapper; all access happens under ``lock``."""

    def __init__(self, path: str | Path = ":memory:"):
        self.path = str(path)
        self.lock = threading.RLock()
        try:
            self.conn = sqlite3.connect(self.path, check_same_thread=False)
        except sqlite3.Error as exc:
            raise StorageUnavailable(f"cannot open database at {self.path}: {exc}") from exc
        self.conn.row_factory = sqlite3.Row
        with self.lock, self.conn:
            if self.path != ":memory:":
                self.conn.execute("PRAGMA journal_mode=WAL")
            self.conn.execute("PRAGMA synchronous=NORMAL")
            self.conn.executescript(_SCHEMA)

    def close(self) -> None:
        with self.lock:
            self.conn.close()

    @contextmanager
    def transaction(self):
        with self.lock:
            with self.conn:
                yield self.conn

    def query(self, sql: str, params=()) -> list[sqlite3.Row]:
        with self.lock:
            return self.conn.execute(sql, params).fetchall()

    def one(self, sql: str, params=()) -> sqlite3.Row | None:
        with self.lock:
            return self.conn.execute(sql, params).fetchone()


def dumps(obj) -> str:
    return json.dumps(obj, ensure_ascii=False, sort_keys=True)


def loads(raw: str):
    return json.loads(raw)
