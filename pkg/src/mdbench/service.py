"""HTTP service for blind re-annotation voting.

Serves the sampled disagreements one at a time, accepts at most one vote
per (record, annotator), and reports live agreement statistics. All writes
go through the append-only revision log under a lock, so concurrent voters
cannot double-submit and a restart resumes exactly where the log left off.

Endpoints (JSON unless noted):
  GET  /api/next?annotator=ID   next unvoted record for this annotator,
                                without any labels (votes are blind)
  POST /api/vote                {"record_id", "annotator", "label"}
  GET  /api/stats               vote counts and agreement rate
  GET  /api/items/<id>          full record including both labels
  GET  /                        static annotation UI, if assets are present
"""

from __future__ import annotations

import json
import threading
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from urllib.parse import parse_qs, urlparse

from .annotation import (
    DiffReport,
    DuplicateVoteError,
    LabelChange,
    RevisionLog,
    agreement_rate,
    diff_annotations,
    sample_disagreements,
)
from .data import Dataset, Label, Record

_CONTENT_TYPES = {
    ".html": "text/html; charset=utf-8",
    ".js": "text/javascript; charset=utf-8",
    ".mjs": "text/javascript; charset=utf-8",
    ".css": "text/css; charset=utf-8",
    ".svg": "image/svg+xml",
    ".json": "application/json",
    ".map": "application/json",
    ".ico": "image/x-icon",
}

_FALLBACK_PAGE = """<!doctype html>
<html><head><meta charset="utf-8"><title>annotation service</title></head>
<body><h1>Annotation service is running</h1>
<p>No UI assets were found. The JSON API is available under <code>/api/</code>:
<code>/api/next?annotator=ID</code>, <code>POST /api/vote</code>,
<code>/api/stats</code>, <code>/api/items/&lt;id&gt;</code>.</p></body></html>
"""


@dataclass
class AnnotationSession:
    """Shared state behind the endpoints.

    ``sample`` fixes which records are up for voting and their serving
    order. The vote log is the only mutable state; everything else is
    derived on demand so the numbers always match the log file.
    """

    original: Dataset
    revised: Dataset
    sample: tuple[LabelChange, ...]
    log: RevisionLog
    lock: threading.Lock = field(default_factory=threading.Lock)

    def __post_init__(self):
        self._originals: dict[str, Record] = {r.id: r for r in self.original.records}
        self._revised: dict[str, Record] = {r.id: r for r in self.revised.records}
        missing = [c.record_id for c in self.sample if c.record_id not in self._originals]
        if missing:
            raise KeyError(f"sampled records missing from the original dataset: {missing[:5]}")

    @property
    def sample_ids(self) -> list[str]:
        return [c.record_id for c in self.sample]

    def record_payload(self, record_id: str, include_labels: bool) -> dict:
        r = self._originals[record_id]
        payload = {
            "record_id": r.id,
            "words": list(r.words),
            "sentence": " ".join(r.words),
            "aspect_index": r.aspect_index,
            "aspect": r.words[r.aspect_index],
            "dataset": self.original.name,
            "scheme": self.original.scheme.value,
            "class_names": list(self.original.scheme.class_names),
        }
        if include_labels:
            payload["original_label"] = r.label.value
            rev = self._revised.get(record_id)
            payload["revised_label"] = None if rev is None else rev.label.value
        return payload

    def next_for(self, annotator: str) -> dict:
        voted = {
            v.record_id for v in self.log.votes() if v.annotator_id == annotator
        }
        progress = {"voted": len(voted & set(self.sample_ids)), "total": len(self.sample)}
        for change in self.sample:
            if change.record_id not in voted:
                return {
                    "done": False,
                    "record": self.record_payload(change.record_id, include_labels=False),
                    "progress": progress,
                }
        return {"done": True, "record": None, "progress": progress}

    def vote(self, record_id: str, annotator: str, label: int) -> dict:
        if record_id not in set(self.sample_ids):
            raise KeyError(f"record {record_id!r} is not in the voting sample")
        Label(value=label, scheme=self.original.scheme)  # raises on a bad label
        with self.lock:
            event = self.log.record_vote(record_id, annotator, label)
        return {
            "ok": True,
            "vote": {"record_id": record_id, "annotator": annotator, "label": label},
            "ts": event.ts,
            "revealed": self.record_payload(record_id, include_labels=True),
        }

    def stats(self) -> dict:
        votes = [v for v in self.log.votes() if v.record_id in set(self.sample_ids)]
        revised_labels = {
            rid: self._revised[rid].label.value
            for rid in self.sample_ids
            if rid in self._revised
        }
        agreement = agreement_rate(
            [v for v in votes if v.record_id in revised_labels], revised_labels
        )
        per_annotator: dict[str, int] = {}
        for v in votes:
            per_annotator[v.annotator_id] = per_annotator.get(v.annotator_id, 0) + 1
        return {
            "sample_size": len(self.sample),
            "votes": len(votes),
            "per_annotator": dict(sorted(per_annotator.items())),
            "agreement": agreement.to_dict(),
            "merged_records": len(self.log.merges()),
        }


def make_session(
    original: Dataset,
    revised: Dataset,
    log_path: str | Path,
    sample_size: int = 100,
    seed: int = 0,
    diff: DiffReport | None = None,
) -> AnnotationSession:
    """Diff the two labelings, sample the flips, and wire up the log."""
    diff = diff or diff_annotations(original, revised)
    sample = sample_disagreements(diff, sample_size, seed=seed)
    return AnnotationSession(
        original=original, revised=revised, sample=sample, log=RevisionLog(log_path)
    )


class _Handler(BaseHTTPRequestHandler):
    server: "AnnotationServer"

    def log_message(self, fmt, *args):  # quiet by default
        if getattr(self.server, "verbose", False):
            super().log_message(fmt, *args)

    # -- plumbing -------------------------------------------------------

    def _send_json(self, payload: dict, status: int = 200) -> None:
        body = json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.send_header("Cache-Control", "no-store")
        self.end_headers()
        self.wfile.write(body)

    def _send_error(self, status: int, message: str) -> None:
        self._send_json({"error": message}, status=status)

    def _read_json(self) -> dict | None:
        length = int(self.headers.get("Content-Length") or 0)
        raw = self.rfile.read(length) if length else b""
        try:
            payload = json.loads(raw.decode("utf-8") or "{}")
        except (UnicodeDecodeError, json.JSONDecodeError):
            return None
        return payload if isinstance(payload, dict) else None

    # -- routes ---------------------------------------------------------

    def do_GET(self):  # noqa: N802 (stdlib naming)
        url = urlparse(self.path)
        if url.path == "/api/next":
            query = parse_qs(url.query)
            annotator = (query.get("annotator") or [""])[0].strip()
            if not annotator:
                return self._send_error(400, "annotator query parameter is required")
            return self._send_json(self.server.session.next_for(annotator))
        if url.path == "/api/stats":
            return self._send_json(self.server.session.stats())
        if url.path.startswith("/api/items/"):
            record_id = url.path[len("/api/items/") :]
            session = self.server.session
            if record_id not in session._originals:
                return self._send_error(404, f"unknown record {record_id!r}")
            return self._send_json(session.record_payload(record_id, include_labels=True))
        if url.path.startswith("/api/"):
            return self._send_error(404, f"no such endpoint {url.path}")
        return self._serve_static(url.path)

    def do_POST(self):  # noqa: N802 (stdlib naming)
        url = urlparse(self.path)
        if url.path != "/api/vote":
            return self._send_error(404, f"no such endpoint {url.path}")
        payload = self._read_json()
        if payload is None:
            return self._send_error(400, "body must be a JSON object")
        record_id = payload.get("record_id")
        annotator = str(payload.get("annotator") or "").strip()
        label = payload.get("label")
        if not isinstance(record_id, str) or not record_id:
            return self._send_error(400, "record_id is required")
        if not annotator:
            return self._send_error(400, "annotator is required")
        if not isinstance(label, int) or isinstance(label, bool):
            return self._send_error(400, "label must be an integer")
        try:
            result = self.server.session.vote(record_id, annotator, label)
        except DuplicateVoteError as exc:
            return self._send_error(409, str(exc))
        except KeyError as exc:
            return self._send_error(404, str(exc.args[0]))
        except ValueError as exc:
            return self._send_error(400, str(exc))
        return self._send_json(result)

    # -- static assets ----------------------------------------------------

    def _serve_static(self, path: str) -> None:
        static = self.server.static_dir
        if path in ("", "/"):
            path = "/index.html"
        if static is not None:
            root = Path(static).resolve()
            target = (root / path.lstrip("/")).resolve()
            if root in target.parents or target == root:
                if target.is_file():
                    ctype = _CONTENT_TYPES.get(target.suffix, "application/octet-stream")
                    body = target.read_bytes()
                    self.send_response(200)
                    self.send_header("Content-Type", ctype)
                    self.send_header("Content-Length", str(len(body)))
                    self.end_headers()
                    self.wfile.write(body)
                    return
        if path == "/index.html":
            body = _FALLBACK_PAGE.encode("utf-8")
            self.send_response(200)
            self.send_header("Content-Type", "text/html; charset=utf-8")
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)
            return
        self._send_error(404, f"no such path {path}")


class AnnotationServer(ThreadingHTTPServer):
    daemon_threads = True

    def __init__(self, address, session: AnnotationSession, static_dir=None, verbose=False):
        super().__init__(address, _Handler)
        self.session = session
        self.static_dir = static_dir
        self.verbose = verbose


def serve(
    session: AnnotationSession,
    port: int = 8114,
    host: str = "127.0.0.1",
    static_dir: str | Path | None = None,
    verbose: bool = False,
) -> AnnotationServer:
    """Bind and return the server; the caller decides whether to block
    (``serve_forever``) or run it from a thread in tests."""
    return AnnotationServer((host, port), session, static_dir=static_dir, verbose=verbose)
