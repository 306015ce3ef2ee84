"""Annotation service and embedded HTTP server.

Serves two live judgment tasks to human annotators: quality review of
synthesized triples (three yes/no questions) and Likert rating of summaries
(four 1-5 dimensions). Labels are persisted to an append-only log on every
submission; the in-memory state and every report are pure functions of that
log, so a restart reproduces them exactly.

Blind presentation: responses that describe items or tasks never carry the
generating-system identity, and each annotator sees the summaries of one
dialogue in a private shuffled order. The report aggregates per system but
never ties an item id to a system.
"""

from __future__ import annotations

import hashlib
import json
import mimetypes
import os
import random
import threading
import time
from dataclasses import dataclass, field
from enum import Enum
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from statistics import fmean, pstdev
from typing import Any
from urllib.parse import parse_qs, urlparse

from .errors import PortInUseError
from .records import load_records
from .synthesis import QdsTriple

QUALITY_QUESTIONS = (
    ("answerable", "Does the query question answerable?"),
    ("unique", "Is the query differs from previous ones for the same dialogue?"),
    ("correct", "Is the generated summary correct and acceptable for query and dialogue?"),
)
CONJUNCTION_LABEL = "Both unique and correct."

LIKERT_QUESTIONS = (
    ("faithfulness", "Faithfulness"),
    ("fluency", "Fluency"),
    ("informativeness", "Informativeness"),
    ("conciseness", "Conciseness"),
)


class TaskKind(str, Enum):
    QUALITY_REVIEW = "quality_review"
    LIKERT_EVAL = "likert_eval"


@dataclass(frozen=True)
class AnnotationTask:
    task_id: str
    kind: TaskKind
    payload: dict[str, str]
    questions: tuple[tuple[str, str], ...]
    group: str = ""

    def to_dict(self) -> dict:
        return {
            "task_id": self.task_id,
            "kind": self.kind.value,
            "payload": dict(self.payload),
            "questions": [
                {"id": qid, "text": text, "type": "yesno" if self.kind == TaskKind.QUALITY_REVIEW else "likert"}
                for qid, text in self.questions
            ],
        }


@dataclass(frozen=True)
class AnnotationLabel:
    task_id: str
    annotator_id: str
    answers: dict[str, Any]
    submitted_at: float
    replaced: bool = False

    def to_dict(self) -> dict:
        return {
            "task_id": self.task_id,
            "annotator_id": self.annotator_id,
            "answers": dict(self.answers),
            "submitted_at": self.submitted_at,
            "replaced": self.replaced,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AnnotationLabel":
        return cls(
            task_id=str(d["task_id"]),
            annotator_id=str(d["annotator_id"]),
            answers=dict(d["answers"]),
            submitted_at=float(d.get("submitted_at", 0.0)),
            replaced=bool(d.get("replaced", False)),
        )


class ValidationFailure(Exception):
    def __init__(self, field_name: str, message: str):
        self.field = field_name
        super().__init__(message)


class UnknownTask(Exception):
    pass


def quality_tasks_from_triples(
    triples: list[QdsTriple], dialogues: dict[str, str] | None = None
) -> list[AnnotationTask]:
    """One quality-review task per triple; triples of one pair share a group."""
    dialogues = dialogues or {}
    tasks = []
    for triple in triples:
        task_id = f"{triple.pair_id}#{triple.provenance.candidate_rank}"
        tasks.append(
            AnnotationTask(
                task_id=task_id,
                kind=TaskKind.QUALITY_REVIEW,
                payload={
                    "dialogue": dialogues.get(triple.pair_id, ""),
                    "query": triple.query,
                    "query_summary": triple.query_summary,
                },
                questions=QUALITY_QUESTIONS,
                group=triple.pair_id,
            )
        )
    return tasks


def likert_tasks_from_records(rows: list[dict]) -> tuple[list[AnnotationTask], dict[str, str]]:
    """Build Likert tasks plus the hidden item-to-system map.

    Input rows: {item_id, dialogue_id, dialogue, summary, system}. The system
    field never enters a task payload.
    """
    tasks = []
    system_by_task: dict[str, str] = {}
    for row in rows:
        task_id = str(row["item_id"])
        tasks.append(
            AnnotationTask(
                task_id=task_id,
                kind=TaskKind.LIKERT_EVAL,
                payload={
                    "dialogue": str(row.get("dialogue", "")),
                    "summary": str(row["summary"]),
                },
                questions=LIKERT_QUESTIONS,
                group=str(row.get("dialogue_id", task_id)),
            )
        )
        system_by_task[task_id] = str(row.get("system", "unknown"))
    return tasks, system_by_task


class LabelStore:
    """Append-only label log; every submission is flushed and fsynced."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self._lock = threading.Lock()
        self.latest: dict[tuple[str, str], AnnotationLabel] = {}
        self.appended: int = 0
        if self.path.exists():
            self._replay()

    def _replay(self) -> None:
        with open(self.path, "r", encoding="utf-8") as fh:
            for line in fh:
                if not line.strip():
                    continue
                label = AnnotationLabel.from_dict(json.loads(line))
                self.latest[(label.task_id, label.annotator_id)] = label
                self.appended += 1

    def submit(self, label: AnnotationLabel) -> bool:
        """Persist a label; returns True when it replaces a prior one."""
        with self._lock:
            key = (label.task_id, label.annotator_id)
            replaced = key in self.latest
            if replaced:
                label = AnnotationLabel(
                    task_id=label.task_id,
                    annotator_id=label.annotator_id,
                    answers=label.answers,
                    submitted_at=label.submitted_at,
                    replaced=True,
                )
            with open(self.path, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(label.to_dict(), ensure_ascii=False) + "\n")
                fh.flush()
                os.fsync(fh.fileno())
            self.latest[key] = label
            self.appended += 1
            return replaced


class AnnotationService:
    """Task queueing, validation, and report computation."""

    def __init__(self, tasks: list[AnnotationTask], store: LabelStore, system_by_task: dict[str, str] | None = None):
        self.tasks = {t.task_id: t for t in tasks}
        if len(self.tasks) != len(tasks):
            raise ValueError("duplicate task ids")
        self.ordered = list(tasks)
        self.store = store
        self.system_by_task = system_by_task or {}

    def item_stubs(self) -> list[dict]:
        return [{"task_id": t.task_id, "kind": t.kind.value} for t in self.ordered]

    def _queue_for(self, annotator_id: str) -> list[AnnotationTask]:
        """Quality tasks by id; Likert tasks grouped by dialogue with a
        per-annotator in-group shuffle (blind but reproducible)."""
        quality = sorted(
            (t for t in self.ordered if t.kind == TaskKind.QUALITY_REVIEW), key=lambda t: t.task_id
        )
        likert = [t for t in self.ordered if t.kind == TaskKind.LIKERT_EVAL]
        groups: dict[str, list[AnnotationTask]] = {}
        for task in likert:
            groups.setdefault(task.group, []).append(task)
        shuffled: list[AnnotationTask] = []
        for group in sorted(groups):
            members = sorted(groups[group], key=lambda t: t.task_id)
            digest = hashlib.sha256(f"{annotator_id}:{group}".encode("utf-8")).digest()
            random.Random(int.from_bytes(digest[:8], "big")).shuffle(members)
            shuffled.extend(members)
        return quality + shuffled

    def next_task(self, annotator_id: str) -> AnnotationTask | None:
        for task in self._queue_for(annotator_id):
            if (task.task_id, annotator_id) not in self.store.latest:
                return task
        return None

    def validate_answers(self, task: AnnotationTask, answers: dict[str, Any]) -> None:
        for qid, _ in task.questions:
            if qid not in answers:
                raise ValidationFailure(qid, f"{qid} not answered")
            value = answers[qid]
            if task.kind == TaskKind.QUALITY_REVIEW:
                if value not in ("yes", "no"):
                    raise ValidationFailure(qid, f"{qid} must be 'yes' or 'no'")
            else:
                if not isinstance(value, int) or isinstance(value, bool) or not 1 <= value <= 5:
                    raise ValidationFailure(qid, f"{qid} out of range")
        extra = set(answers) - {qid for qid, _ in task.questions}
        if extra:
            raise ValidationFailure(sorted(extra)[0], "unknown question")

    def submit(self, task_id: str, annotator_id: str, answers: dict[str, Any]) -> bool:
        task = self.tasks.get(task_id)
        if task is None:
            raise UnknownTask(task_id)
        if not annotator_id:
            raise ValidationFailure("annotator_id", "annotator_id is required")
        self.validate_answers(task, answers)
        return self.store.submit(
            AnnotationLabel(
                task_id=task_id,
                annotator_id=annotator_id,
                answers=answers,
                submitted_at=time.time(),
            )
        )

    def report(self) -> dict:
        """Aggregate tables; a pure function of the label store."""
        out: dict[str, Any] = {}
        quality_labels = []
        likert_labels = []
        for (task_id, _), label in self.store.latest.items():
            task = self.tasks.get(task_id)
            if task is None:
                continue
            if task.kind == TaskKind.QUALITY_REVIEW:
                quality_labels.append(label)
            else:
                likert_labels.append(label)

        if quality_labels:
            n = len(quality_labels)
            yes_percent = {
                qid: 100.0 * sum(1 for lab in quality_labels if lab.answers.get(qid) == "yes") / n
                for qid, _ in QUALITY_QUESTIONS
            }
            both = sum(
                1
                for lab in quality_labels
                if lab.answers.get("unique") == "yes" and lab.answers.get("correct") == "yes"
            )
            items = {lab.task_id for lab in quality_labels}
            out["quality_review"] = {
                "n_labels": n,
                "n_items": len(items),
                "annotators_per_item": n / len(items),
                "yes_percent": yes_percent,
                "both_unique_and_correct_percent": 100.0 * both / n,
            }

        if likert_labels:
            per_system: dict[str, dict[str, list[int]]] = {}
            for lab in likert_labels:
                system = self.system_by_task.get(lab.task_id, "unknown")
                bucket = per_system.setdefault(system, {qid: [] for qid, _ in LIKERT_QUESTIONS})
                for qid, _ in LIKERT_QUESTIONS:
                    if qid in lab.answers:
                        bucket[qid].append(int(lab.answers[qid]))
            items = {lab.task_id for lab in likert_labels}
            out["likert"] = {
                "n_labels": len(likert_labels),
                "n_items": len(items),
                "annotators_per_item": len(likert_labels) / len(items),
                "per_system": {
                    system: {
                        qid: {
                            "mean": fmean(vals) if vals else None,
                            "std": pstdev(vals) if vals else None,
                            "count": len(vals),
                        }
                        for qid, vals in dims.items()
                    }
                    for system, dims in sorted(per_system.items())
                },
            }
        return out


_FALLBACK_PAGE = b"""<!doctype html>
<html><head><meta charset="utf-8"><title>Annotation</title></head>
<body><h1>Annotation server is running.</h1>
<p>No static UI directory was configured; use the HTTP API under /api/.</p>
</body></html>"""


class AnnotationServer:
    """Embedded HTTP server exposing the annotation API and static UI."""

    def __init__(
        self,
        service: AnnotationService,
        port: int = 8400,
        host: str = "127.0.0.1",
        token: str | None = None,
        static_dir: str | Path | None = None,
    ):
        self.service = service
        self.token = token
        self.static_dir = Path(static_dir) if static_dir else None
        handler = _make_handler(self)
        try:
            self.httpd = ThreadingHTTPServer((host, port), handler)
        except OSError as exc:
            if exc.errno == 98:  # EADDRINUSE
                raise PortInUseError(f"port {port} is already in use") from exc
            raise
        self.port = self.httpd.server_address[1]
        self._thread: threading.Thread | None = None

    def serve_forever(self) -> None:
        self.httpd.serve_forever()

    def start_background(self) -> None:
        self._thread = threading.Thread(target=self.httpd.serve_forever, daemon=True)
        self._thread.start()

    def shutdown(self) -> None:
        self.httpd.shutdown()
        self.httpd.server_close()
        if self._thread:
            self._thread.join(timeout=5)


def _make_handler(server: AnnotationServer):
    class Handler(BaseHTTPRequestHandler):
        def log_message(self, fmt, *args):
            pass

        def _send_json(self, status: int, obj: dict) -> None:
            body = json.dumps(obj, ensure_ascii=False).encode("utf-8")
            self.send_response(status)
            self.send_header("Content-Type", "application/json; charset=utf-8")
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

        def _authorized(self) -> bool:
            if server.token is None:
                return True
            return self.headers.get("X-Annotation-Token") == server.token

        def do_GET(self):
            url = urlparse(self.path)
            if url.path.startswith("/api/"):
                if not self._authorized():
                    self._send_json(401, {"error": "UNAUTHORIZED"})
                    return
                if url.path == "/api/items":
                    self._send_json(200, {"items": server.service.item_stubs()})
                elif url.path == "/api/next":
                    params = parse_qs(url.query)
                    annotator = (params.get("annotator") or [""])[0]
                    if not annotator:
                        self._send_json(400, {"error": "VALIDATION_ERROR", "field": "annotator"})
                        return
                    task = server.service.next_task(annotator)
                    if task is None:
                        self._send_json(200, {"done": True})
                    else:
                        self._send_json(200, {"done": False, "task": task.to_dict()})
                elif url.path == "/api/report":
                    self._send_json(200, server.service.report())
                else:
                    self._send_json(404, {"error": "NOT_FOUND"})
                return
            self._serve_static(url.path)

        def do_POST(self):
            url = urlparse(self.path)
            if not url.path.startswith("/api/"):
                self._send_json(404, {"error": "NOT_FOUND"})
                return
            if not self._authorized():
                self._send_json(401, {"error": "UNAUTHORIZED"})
                return
            if url.path != "/api/label":
                self._send_json(404, {"error": "NOT_FOUND"})
                return
            try:
                length = int(self.headers.get("Content-Length", "0"))
                payload = json.loads(self.rfile.read(length).decode("utf-8"))
                replaced = server.service.submit(
                    str(payload.get("task_id", "")),
                    str(payload.get("annotator_id", "")),
                    payload.get("answers") or {},
                )
            except UnknownTask:
                self._send_json(404, {"error": "UNKNOWN_TASK"})
                return
            except ValidationFailure as exc:
                self._send_json(400, {"error": "VALIDATION_ERROR", "field": exc.field, "message": str(exc)})
                return
            except (json.JSONDecodeError, UnicodeDecodeError):
                self._send_json(400, {"error": "VALIDATION_ERROR", "field": "body", "message": "invalid JSON"})
                return
            self._send_json(200, {"ok": True, "replaced": replaced})

        def _serve_static(self, path: str) -> None:
            if server.static_dir is None:
                self.send_response(200)
                self.send_header("Content-Type", "text/html; charset=utf-8")
                self.send_header("Content-Length", str(len(_FALLBACK_PAGE)))
                self.end_headers()
                self.wfile.write(_FALLBACK_PAGE)
                return
            rel = path.lstrip("/") or "index.html"
            target = (server.static_dir / rel).resolve()
            root = server.static_dir.resolve()
            if root not in target.parents and target != root:
                self._send_json(404, {"error": "NOT_FOUND"})
                return
            if target.is_dir():
                target = target / "index.html"
            if not target.is_file():
                self._send_json(404, {"error": "NOT_FOUND"})
                return
            ctype = mimetypes.guess_type(str(target))[0] or "application/octet-stream"
            body = target.read_bytes()
            self.send_response(200)
            self.send_header("Content-Type", ctype)
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

    return Handler


def load_likert_rows(path: str | Path) -> list[dict]:
    rows = load_records(path, lambda d: d)
    for row in rows:
        for key in ("item_id", "summary"):
            if key not in row:
                raise ValueError(f"likert item missing {key!r}")
    return rows
