"""HTTP review service for human raters.

Endpoints (JSON over HTTP, UTF-8):

- ``GET  /health``                                  -> ``{"status": "ok"}``
- ``GET  /sessions/{id}``                           -> session view (add ``?rater=`` for a pending count)
- ``GET  /sessions/{id}/rounds/{k}/pending?rater=`` -> review items the rater has not scored
- ``POST /sessions/{id}/items/{item}/score``        -> body ``{"rater_id", "value"}``; stores a ScoreEvent
- ``GET  /sessions/{id}/rounds/{k}/aggregate``      -> ``{"aggregate", "rater_count", "complete"}``
- ``GET  /images/{poem_id}.png``                    -> image bytes from the configured images dir

Sessions are subdirectories of the store root (session id = directory
name). Rating payloads stay origin-neutral: nothing in an item reveals
whether a summary candidate is machine-written. Rater identity is a
self-declared id; an optional shared token (``X-Review-Token``) can gate
all non-health endpoints.

Writes are serialized per session; aggregates are pure functions of the
append-only event log, so a restart never loses acknowledged scores.
"""

from __future__ import annotations

import json
import re
import threading
from dataclasses import asdict
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Optional
from urllib.parse import parse_qs, urlparse

from .errors import PoemPixelError, StateError, ValidationError
from .summarizer import registry_load
from .tuning import SessionStore, TuningSession, aggregate_round, latest_events


class _HttpError(Exception):
    def __init__(self, status: int, message: str):
        super().__init__(message)
        self.status = status


class ReviewService:
    """Store-backed request logic, independent of the HTTP layer."""

    def __init__(
        self,
        store_root: str | Path,
        images_dir: Optional[str | Path] = None,
        registry_path: Optional[str | Path] = None,
    ):
        self.store_root = Path(store_root)
        if not self.store_root.exists():
            raise StateError(f"session store not found: {self.store_root}")
        self.images_dir = Path(images_dir) if images_dir else self.store_root / "images"
        self._locks: dict[str, threading.Lock] = {}
        self._locks_guard = threading.Lock()
        try:
            self._templates = {t.id: t.text for t in registry_load(registry_path)}
        except PoemPixelError:
            self._templates = {}

    def _lock(self, session_id: str) -> threading.Lock:
        with self._locks_guard:
            return self._locks.setdefault(session_id, threading.Lock())

    def _store(self, session_id: str) -> SessionStore:
        if not re.fullmatch(r"[A-Za-z0-9._-]+", session_id):
            raise _HttpError(404, f"unknown session {session_id!r}")
        store = SessionStore(self.store_root / session_id)
        if not store.exists():
            raise _HttpError(404, f"unknown session {session_id!r}")
        return store

    def _completeness(self, store: SessionStore, session: TuningSession, round_) -> dict:
        events = latest_events(store.round_events(round_.index))
        raters_seen = {e.rater_id for e in events}
        scored = {(e.item_id, e.rater_id) for e in events}
        expected = {
            (item.item_id, rater) for item in round_.items for rater in session.raters
        }
        complete = bool(expected) and expected <= scored
        return {"rater_count": len(raters_seen), "complete": complete, "events": events}

    def session_view(self, session_id: str, rater_id: Optional[str] = None) -> dict:
        store = self._store(session_id)
        session = store.load()
        rounds = []
        for round_ in session.rounds:
            info = self._completeness(store, session, round_)
            rounds.append(
                {
                    "round": round_.index,
                    "template_id": round_.template_id,
                    "template_text": self._templates.get(round_.template_id),
                    "status": round_.status,
                    "aggregate": round_.aggregate,
                    "automated_metrics": round_.automated_metrics,
                    "complete": info["complete"],
                    "rater_count": info["rater_count"],
                    "item_count": len(round_.items),
                }
            )
        open_round = session.open_round()
        view = {
            "session_id": session_id,
            "mode": session.mode,
            "aggregation": session.aggregation,
            "current_round": open_round.index if open_round else None,
            "stopped": session.stopped,
            "selected_round": session.selected_round,
            "selected_template_id": (
                session.rounds[session.selected_round - 1].template_id
                if session.selected_round
                else None
            ),
            "raters": list(session.raters),
            "rounds": rounds,
        }
        if rater_id and open_round:
            view["pending_count"] = len(self.pending(session_id, open_round.index, rater_id))
        elif rater_id:
            view["pending_count"] = 0
        return view

    def pending(self, session_id: str, round_index: int, rater_id: str) -> list[dict]:
        store = self._store(session_id)
        session = store.load()
        round_ = next((r for r in session.rounds if r.index == round_index), None)
        if round_ is None:
            raise _HttpError(404, f"unknown round {round_index}")
        if round_.status != "open":
            return []
        scored = {
            e.item_id
            for e in latest_events(store.round_events(round_index))
            if e.rater_id == rater_id
        }
        return [
            {
                "item_id": item.item_id,
                "session_id": session_id,
                "round_index": round_index,
                "poem_text": item.poem_text,
                "payload": item.payload,
                "blind": item.blind,
            }
            for item in round_.items
            if item.item_id not in scored
        ]

    def submit(self, session_id: str, item_id: str, rater_id: str, value) -> dict:
        if not rater_id:
            raise _HttpError(400, "rater_id is required")
        store = self._store(session_id)
        with self._lock(session_id):
            try:
                event = store.submit(item_id, rater_id, value)
            except StateError as exc:
                raise _HttpError(409, str(exc)) from exc
            except ValidationError as exc:
                status = 404 if "unknown item" in str(exc) else 400
                raise _HttpError(status, str(exc)) from exc
        return {"stored": asdict(event)}

    def aggregate(self, session_id: str, round_index: int) -> dict:
        store = self._store(session_id)
        session = store.load()
        round_ = next((r for r in session.rounds if r.index == round_index), None)
        if round_ is None:
            raise _HttpError(404, f"unknown round {round_index}")
        info = self._completeness(store, session, round_)
        if round_.status == "closed":
            value = round_.aggregate
        else:
            try:
                value = aggregate_round(info["events"], session.mode)
            except ValidationError as exc:
                raise _HttpError(400, str(exc)) from exc
        return {
            "aggregate": value,
            "rater_count": info["rater_count"],
            "complete": info["complete"],
        }

    def image(self, name: str) -> bytes:
        if not re.fullmatch(r"[A-Za-z0-9._-]+\.png", name):
            raise _HttpError(404, f"unknown image {name!r}")
        path = self.images_dir / name
        if not path.exists():
            raise _HttpError(404, f"unknown image {name!r}")
        return path.read_bytes()


_ROUTES = {
    "health": re.compile(r"^/health$"),
    "session": re.compile(r"^/sessions/([^/]+)$"),
    "pending": re.compile(r"^/sessions/([^/]+)/rounds/(\d+)/pending$"),
    "aggregate": re.compile(r"^/sessions/([^/]+)/rounds/(\d+)/aggregate$"),
    "score": re.compile(r"^/sessions/([^/]+)/items/([^/]+)/score$"),
    "image": re.compile(r"^/images/([^/]+)$"),
}


class _Handler(BaseHTTPRequestHandler):
    server_version = "poempixel-review/0.1"

    @property
    def service(self) -> ReviewService:
        return self.server.service  # type: ignore[attr-defined]

    def log_message(self, format, *args):  # noqa: A002 - stdlib signature
        if getattr(self.server, "verbose", False):
            super().log_message(format, *args)

    def _send(self, status: int, payload, content_type: str = "application/json"):
        body = payload if isinstance(payload, bytes) else json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(body)))
        self.send_header("Access-Control-Allow-Origin", "*")
        self.end_headers()
        self.wfile.write(body)

    def _check_token(self) -> bool:
        token = getattr(self.server, "token", None)
        if token and self.headers.get("X-Review-Token") != token:
            self._send(401, {"error": "missing or invalid X-Review-Token"})
            return False
        return True

    def do_GET(self):  # noqa: N802 - stdlib naming
        url = urlparse(self.path)
        query = {k: v[0] for k, v in parse_qs(url.query).items()}
        try:
            if _ROUTES["health"].match(url.path):
                self._send(200, {"status": "ok"})
                return
            if not self._check_token():
                return
            if match := _ROUTES["session"].match(url.path):
                self._send(200, self.service.session_view(match.group(1), query.get("rater")))
            elif match := _ROUTES["pending"].match(url.path):
                rater = query.get("rater", "")
                if not rater:
                    raise _HttpError(400, "rater query parameter is required")
                self._send(
                    200, self.service.pending(match.group(1), int(match.group(2)), rater)
                )
            elif match := _ROUTES["aggregate"].match(url.path):
                self._send(200, self.service.aggregate(match.group(1), int(match.group(2))))
            elif match := _ROUTES["image"].match(url.path):
                self._send(200, self.service.image(match.group(1)), content_type="image/png")
            else:
                raise _HttpError(404, f"no such endpoint: {url.path}")
        except _HttpError as exc:
            self._send(exc.status, {"error": str(exc)})

    def do_POST(self):  # noqa: N802 - stdlib naming
        url = urlparse(self.path)
        try:
            if not self._check_token():
                return
            match = _ROUTES["score"].match(url.path)
            if not match:
                raise _HttpError(404, f"no such endpoint: {url.path}")
            length = int(self.headers.get("Content-Length", 0))
            try:
                body = json.loads(self.rfile.read(length) or b"{}")
            except json.JSONDecodeError as exc:
                raise _HttpError(400, f"invalid JSON body: {exc.msg}") from exc
            if "value" not in body:
                raise _HttpError(400, "body must include rater_id and value")
            result = self.service.submit(
                match.group(1), match.group(2), str(body.get("rater_id", "")), body["value"]
            )
            self._send(200, result)
        except _HttpError as exc:
            self._send(exc.status, {"error": str(exc)})


class ReviewServer:
    """Running service handle: binds on construction, serves on a thread."""

    def __init__(
        self,
        store_root: str | Path,
        port: int = 0,
        host: str = "127.0.0.1",
        images_dir: Optional[str | Path] = None,
        registry_path: Optional[str | Path] = None,
        token: Optional[str] = None,
        verbose: bool = False,
    ):
        service = ReviewService(store_root, images_dir=images_dir, registry_path=registry_path)
        try:
            self._httpd = ThreadingHTTPServer((host, port), _Handler)
        except OSError as exc:
            raise StateError(f"cannot bind {host}:{port}: {exc}") from exc
        self._httpd.service = service  # type: ignore[attr-defined]
        self._httpd.token = token  # type: ignore[attr-defined]
        self._httpd.verbose = verbose  # type: ignore[attr-defined]
        self.host = host
        self.port = self._httpd.server_address[1]
        self._thread: Optional[threading.Thread] = None

    @property
    def url(self) -> str:
        return f"http://{self.host}:{self.port}"

    def start(self) -> "ReviewServer":
        self._thread = threading.Thread(target=self._httpd.serve_forever, daemon=True)
        self._thread.start()
        return self

    def serve_forever(self) -> None:
        self._httpd.serve_forever()

    def shutdown(self) -> None:
        self._httpd.shutdown()
        self._httpd.server_close()
        if self._thread:
            self._thread.join(timeout=5)


def serve(
    store_root: str | Path,
    port: int = 8765,
    **kwargs,
) -> ReviewServer:
    """Construct and start a review server; returns the running handle."""
    return ReviewServer(store_root, port=port, **kwargs).start()
