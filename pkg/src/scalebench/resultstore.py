"""Local append-only result log and the client that syncs it to the service.

The log is UTF-8 JSON-Lines, one canonical RunRecord object per line.
Deduplication happens on the server, keyed by :func:`record_id`.
"""

from __future__ import annotations

import json
import logging
import os
import threading
import time
import urllib.error
import urllib.request
from pathlib import Path
from typing import Any, Callable, Iterable, Mapping, Sequence

from .domain import RunRecord, canonical_json, compute_record_id, validate_record
from .errors import AuthError, RemoteError, ScaleBenchError

log = logging.getLogger(__name__)

DEFAULT_STORE = "results.jsonl"
MAX_BATCH = 100
RETRY_DELAYS = (1.0, 2.0, 4.0)
FILTER_FIELDS = ("site_id", "family", "case_name", "nodes", "ppn")

_append_lock = threading.Lock()


def record_id(record: RunRecord) -> str:
    """SHA-256 hex of the canonical JSON of the identifying fields.

    Identifying fields are site_id, family, case_name, nodes, ppn,
    runtime_seconds, gflops and timestamp_utc. Metadata and the pass flag
    are excluded so that re-parsing never forks a record's identity.
    """
    return compute_record_id(record)


def record_line(record: RunRecord) -> str:
    return canonical_json(record.to_dict()) + "\n"


def append_local(record: RunRecord, path: Path | str = DEFAULT_STORE) -> None:
    """Append one record as a single JSON line.

    The line goes out in one ``write`` on an O_APPEND descriptor, so appends
    from threads of this process never interleave. Raises OSError when the
    file cannot be opened (e.g. the directory does not exist).
    """
    data = record_line(record).encode("utf-8")
    with _append_lock:
        fd = os.open(os.fspath(path), os.O_WRONLY | os.O_APPEND | os.O_CREAT, 0o644)
        try:
            os.write(fd, data)
        finally:
            os.close(fd)


def read_records(path: Path | str) -> tuple[list[RunRecord], int]:
    """All valid records in the file plus the number of lines skipped.

    A trailing line without a newline is an in-progress append and counts
    as malformed.
    """
    records: list[RunRecord] = []
    skipped = 0
    with open(path, "rb") as fh:
        raw = fh.read()
    lines = raw.split(b"\n")
    tail = lines.pop()  # empty if the file ends in a newline
    if tail.strip():
        skipped += 1
    for lineno, line in enumerate(lines, 1):
        if not line.strip():
            continue
        try:
            records.append(validate_record(RunRecord.from_dict(json.loads(line))))
        except (ValueError, TypeError, ScaleBenchError) as exc:
            skipped += 1
            log.debug("%s:%d: skipped (%s)", path, lineno, exc)
    return records, skipped


def matches(record: RunRecord, filters: Mapping[str, Any]) -> bool:
    return all(getattr(record, k) == v for k, v in filters.items() if v is not None)


def load_local(path: Path | str = DEFAULT_STORE, **filters: Any) -> list[RunRecord]:
    """Validated records whose fields equal every given filter.

    Filters are any of site_id, family, case_name, nodes, ppn. Malformed
    lines are skipped and reported in a single warning.
    """
    unknown = set(filters) - set(FILTER_FIELDS)
    if unknown:
        raise TypeError(f"unknown filter fields: {sorted(unknown)}")
    records, skipped = read_records(path)
    if skipped:
        log.warning("%s: skipped %d malformed line(s)", path, skipped)
    return [r for r in records if matches(r, filters)]


def _batches(items: Sequence[RunRecord], size: int) -> Iterable[Sequence[RunRecord]]:
    for start in range(0, len(items), size):
        yield items[start:start + size]


def _post_batch(url: str, token: str, batch: Sequence[RunRecord], timeout: float) -> dict:
    body = json.dumps([r.to_dict() for r in batch]).encode("utf-8")
    request = urllib.request.Request(url, data=body, method="POST", headers={
        "Content-Type": "application/json",
        "Authorization": f"Bearer {token}",
    })
    with urllib.request.urlopen(request, timeout=timeout) as response:
        return json.loads(response.read().decode("utf-8"))


def push(records: Sequence[RunRecord], endpoint_url: str, auth_token: str, *,
         batch_size: int = MAX_BATCH, delays: Sequence[float] = RETRY_DELAYS,
         sleep: Callable[[float], None] = time.sleep, timeout: float = 30.0,
         on_batch: Callable[[Sequence[RunRecord], dict], None] | None = None) -> dict[str, int]:
    """POST records to ``<endpoint_url>/api/v1/results`` in batches.

    Each failed batch is retried after each delay in ``delays`` (1 s, 2 s,
    4 s by default). HTTP 401 raises AuthError at once. When retries run
    out, RemoteError carries the counts of the batches that did land.
    ``on_batch`` is called after each accepted batch.
    """
    if not 1 <= batch_size <= MAX_BATCH:
        raise ValueError(f"batch_size must be within 1..{MAX_BATCH}")
    url = endpoint_url.rstrip("/")
    if not url.endswith("/api/v1/results"):
        url += "/api/v1/results"
    records = list(records)
    accepted = duplicates = 0
    for batch in _batches(records, batch_size):
        attempt = 0
        while True:
            try:
                reply = _post_batch(url, auth_token, batch, timeout)
                break
            except urllib.error.HTTPError as exc:
                if exc.code == 401:
                    raise AuthError(f"{url}: unauthorized") from exc
                retryable = exc.code >= 500 or exc.code == 429
                error: Exception = exc
            except (urllib.error.URLError, OSError, ValueError) as exc:
                retryable = True
                error = exc
            if not retryable or attempt >= len(delays):
                raise RemoteError(f"{url}: {error}", accepted, duplicates) from error
            log.info("push batch failed (%s); retrying in %gs", error, delays[attempt])
            sleep(delays[attempt])
            attempt += 1
        accepted += int(reply.get("accepted", 0))
        duplicates += int(reply.get("duplicates", 0))
        if reply.get("rejected"):
            log.warning("server rejected %s record(s): %s", reply["rejected"], reply.get("reasons"))
        if on_batch is not None:
            on_batch(batch, reply)
    return {"accepted": accepted, "duplicates": duplicates}
