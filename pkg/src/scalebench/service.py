"""Central results service.

Storage is one append-only JSON-Lines file plus an in-memory id index that
is rebuilt at startup. Writes go through a single lock and are fsynced
before the response is sent. Reads work on an immutable tuple snapshot
and never wait for the lock.

Endpoints::

    POST /api/v1/results   token-gated, body: JSON array of RunRecord (<= 100)
    GET  /api/v1/results   filters: site_id, family, case_name, nodes, ppn
    GET  /api/v1/series    metric (required), family, case_name, ppn
"""

from __future__ import annotations

import hmac
import json
import logging
import os
import threading
from http import HTTPStatus
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from typing import Any, Iterable, Mapping
from urllib.parse import parse_qs, urlsplit

from .domain import METRICS, RunRecord, validate_record
from .errors import ScaleBenchError, ValidationError
from .metrics import aggregate
from .resultstore import MAX_BATCH, matches, read_records, record_line

log = logging.getLogger(__name__)

RESULTS_PATH = "/api/v1/results"
SERIES_PATH = "/api/v1/series"
MAX_BODY_BYTES = 16 * 1024 * 1024


class BadRequest(ScaleBenchError):
    def __init__(self, status: int, message: str) -> None:
        self.status = status
        super().__init__(message)


def query_order(record: RunRecord) -> tuple:
    return (record.site_id, record.case_name, record.nodes, record.ppn,
            record.timestamp_utc, record.record_id)


def _single(params: Mapping[str, Any], name: str) -> str | None:
    value = params.get(name)
    if isinstance(value, list):
        value = value[-1] if value else None
    return value


def _int_param(params: Mapping[str, Any], name: str) -> int | None:
    value = _single(params, name)
    if value is None or value == "":
        return None
    try:
        return int(value)
    except (TypeError, ValueError):
        raise BadRequest(400, f"{name} must be an integer, got {value!r}") from None


class ResultService:
    def __init__(self, data_path: Path | str, tokens: Iterable[str] = ()) -> None:
        self.data_path = Path(data_path)
        self.tokens = tuple(t for t in tokens if t)
        self._write_lock = threading.Lock()
        records: list[RunRecord] = []
        if self.data_path.exists():
            loaded, skipped = read_records(self.data_path)
            if skipped:
                log.warning("%s: skipped %d malformed line(s) at startup", self.data_path, skipped)
            seen: set[str] = set()
            for r in loaded:
                if r.record_id not in seen:
                    seen.add(r.record_id)
                    records.append(r)
        else:
            self.data_path.parent.mkdir(parents=True, exist_ok=True)
            self.data_path.touch()
        self._ids = {r.record_id for r in records}
        self._snapshot: tuple[RunRecord, ...] = tuple(records)

    def __len__(self) -> int:
        return len(self._snapshot)

    def snapshot(self) -> tuple[RunRecord, ...]:
        return self._snapshot

    def authorized(self, token: str | None) -> bool:
        if not token:
            return False
        return any(hmac.compare_digest(token, t) for t in self.tokens)

    def handle_submit(self, body: Any, token: str | None) -> tuple[int, dict]:
        if not self.authorized(token):
            return 401, {"error": "invalid or missing bearer token"}
        if not isinstance(body, list):
            return 400, {"error": "body must be a JSON array of records"}
        if len(body) > MAX_BATCH:
            return 413, {"error": f"at most {MAX_BATCH} records per request"}
        candidates: list[RunRecord] = []
        reasons: list[dict] = []
        for index, item in enumerate(body):
            try:
                candidates.append(validate_record(RunRecord.from_dict(item)))
            except ValidationError as exc:
                reasons.append({"index": index, "reason": exc.field, "detail": str(exc)})
            except (TypeError, ValueError) as exc:
                reasons.append({"index": index, "reason": "record", "detail": str(exc)})
        accepted = duplicates = 0
        with self._write_lock:
            fresh: list[RunRecord] = []
            batch_ids: set[str] = set()
            for record in candidates:
                if record.record_id in self._ids or record.record_id in batch_ids:
                    duplicates += 1
                else:
                    batch_ids.add(record.record_id)
                    fresh.append(record)
            if fresh:
                data = "".join(record_line(r) for r in fresh).encode("utf-8")
                with open(self.data_path, "ab") as fh:
                    fh.write(data)
                    fh.flush()
                    os.fsync(fh.fileno())
                self._ids |= batch_ids
                self._snapshot = self._snapshot + tuple(fresh)
                accepted = len(fresh)
        return 200, {"accepted": accepted, "duplicates": duplicates,
                     "rejected": len(reasons), "reasons": reasons}

    def _filtered(self, params: Mapping[str, Any], fields: Iterable[str]) -> list[RunRecord]:
        filters: dict[str, Any] = {}
        for name in fields:
            if name in ("nodes", "ppn"):
                filters[name] = _int_param(params, name)
            else:
                value = _single(params, name)
                filters[name] = value if value != "" else None
        return [r for r in self._snapshot if matches(r, filters)]

    def handle_query(self, params: Mapping[str, Any]) -> tuple[int, Any]:
        try:
            records = self._filtered(params, ("site_id", "family", "case_name", "nodes", "ppn"))
        except BadRequest as exc:
            return exc.status, {"error": str(exc)}
        return 200, [r.to_dict() for r in sorted(records, key=query_order)]

    def handle_series(self, params: Mapping[str, Any]) -> tuple[int, Any]:
        metric = _single(params, "metric")
        if metric not in METRICS:
            return 400, {"error": f"unknown metric {metric!r}; expected one of {list(METRICS)}"}
        try:
            records = self._filtered(params, ("family", "case_name", "ppn"))
        except BadRequest as exc:
            return exc.status, {"error": str(exc)}
        result = aggregate(records, metric)
        return 200, {"points": [p.to_dict() for p in result.points],
                     "warnings": result.warnings}


class _Handler(BaseHTTPRequestHandler):
    server: ResultServer
    protocol_version = "HTTP/1.1"

    def log_message(self, format: str, *args: Any) -> None:
        log.info("%s - %s", self.address_string(), format % args)

    def _send(self, status: int, payload: Any) -> None:
        body = json.dumps(payload).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json; charset=utf-8")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def do_GET(self) -> None:
        url = urlsplit(self.path)
        params = parse_qs(url.query, keep_blank_values=True)
        if url.path == RESULTS_PATH:
            self._send(*self.server.service.handle_query(params))
        elif url.path == SERIES_PATH:
            self._send(*self.server.service.handle_series(params))
        else:
            self._send(404, {"error": f"no such endpoint {url.path}"})

    def do_POST(self) -> None:
        url = urlsplit(self.path)
        length = int(self.headers.get("Content-Length") or 0)
        if url.path != RESULTS_PATH:
            self.rfile.read(length)
            self._send(404, {"error": f"no such endpoint {url.path}"})
            return
        if length > MAX_BODY_BYTES:
            self.close_connection = True
            self._send(413, {"error": "request body too large"})
            return
        raw = self.rfile.read(length)
        auth = self.headers.get("Authorization", "")
        token = auth[len("Bearer "):].strip() if auth.startswith("Bearer ") else None
        if not self.server.service.authorized(token):
            self._send(401, {"error": "invalid or missing bearer token"})
            return
        try:
            body = json.loads(raw.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            self._send(400, {"error": f"malformed JSON: {exc}"})
            return
        self._send(*self.server.service.handle_submit(body, token))


class ResultServer(ThreadingHTTPServer):
    daemon_threads = True
    allow_reuse_address = False

    def __init__(self, address: tuple[str, int], service: ResultService) -> None:
        self.service = service
        super().__init__(address, _Handler)

    @property
    def url(self) -> str:
        host, port = self.server_address[:2]
        return f"http://{host}:{port}"


def start_background(service: ResultService, host: str = "127.0.0.1",
                     port: int = 0) -> tuple[ResultServer, threading.Thread]:
    """Serve on a daemon thread; stop with ``server.shutdown(); server.server_close()``."""
    server = ResultServer((host, port), service)
    thread = threading.Thread(target=server.serve_forever, name="scalebench-service",
                              daemon=True)
    thread.start()
    return server, thread
