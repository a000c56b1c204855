from __future__ import annotations

import hashlib
import json
import logging
import threading
from dataclasses import replace

import pytest

from scalebench.errors import AuthError, RemoteError
from scalebench.resultstore import append_local, load_local, push, read_records, record_id

from conftest import TOKEN, make_record


def test_record_id_is_sha256_of_sorted_identity():
    r = make_record()
    identity = {
        "case_name": "hpl", "family": "hpl", "gflops": 166.3, "nodes": 1, "ppn": 16,
        "runtime_seconds": 184.59, "site_id": "AWS-NHT", "timestamp_utc": "2018-03-05T10:15:06Z",
    }
    text = json.dumps(identity, sort_keys=True, separators=(",", ":"))
    assert record_id(r) == hashlib.sha256(text.encode()).hexdigest()


def test_record_id_ignores_metadata_and_verdict():
    r = make_record()
    assert record_id(replace(r, metadata={"hostname": "x"}, passed=False)) == record_id(r)
    assert record_id(replace(r, tool_version="9.9")) == record_id(r)


def test_record_id_sensitive_to_tiny_runtime_change():
    a = make_record(runtime_seconds=1.0)
    b = make_record(runtime_seconds=1.0 + 1e-9)
    assert record_id(a) != record_id(b)


def test_record_id_int_and_float_agree():
    assert record_id(make_record(runtime_seconds=2)) == record_id(make_record(runtime_seconds=2.0))


def test_append_round_trip(tmp_path):
    path = tmp_path / "r.jsonl"
    records = [make_record(nodes=n) for n in (1, 2, 4)]
    for r in records:
        append_local(r, path)
    assert load_local(path) == records
    assert path.read_bytes().count(b"\n") == 3


def test_append_missing_directory(tmp_path):
    with pytest.raises(OSError):
        append_local(make_record(), tmp_path / "nope" / "r.jsonl")


def test_duplicate_append_keeps_both_lines(tmp_path):
    path = tmp_path / "r.jsonl"
    append_local(make_record(), path)
    append_local(make_record(), path)
    assert len(path.read_text().splitlines()) == 2


def test_concurrent_appends_do_not_interleave(tmp_path):
    path = tmp_path / "r.jsonl"

    def worker(k):
        for i in range(50):
            append_local(make_record(nodes=k + 1, runtime_seconds=float(i + 1)), path)

    threads = [threading.Thread(target=worker, args=(k,)) for k in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    records, skipped = read_records(path)
    assert skipped == 0 and len(records) == 400


def test_load_filters(tmp_path):
    path = tmp_path / "r.jsonl"
    for site in ("A", "B"):
        for n in (1, 2):
            append_local(make_record(site_id=site, nodes=n), path)
    assert len(load_local(path, site_id="A")) == 2
    assert [r.nodes for r in load_local(path, site_id="B", nodes=2)] == [2]
    assert load_local(path, family="vasp") == []
    with pytest.raises(TypeError):
        load_local(path, colour="red")


def test_corrupt_line_skipped_with_warning(tmp_path, caplog):
    path = tmp_path / "r.jsonl"
    append_local(make_record(nodes=1), path)
    with open(path, "a") as fh:
        fh.write("{not json\n")
    append_local(make_record(nodes=2), path)
    with caplog.at_level(logging.WARNING, logger="scalebench.resultstore"):
        records = load_local(path)
    assert [r.nodes for r in records] == [1, 2]
    assert "skipped 1 malformed" in caplog.text


def test_partial_trailing_line_counts_as_skipped(tmp_path):
    path = tmp_path / "r.jsonl"
    append_local(make_record(), path)
    with open(path, "a") as fh:
        fh.write('{"site_id": "AWS')
    assert read_records(path)[1] == 1


def test_empty_file(tmp_path):
    path = tmp_path / "r.jsonl"
    path.write_text("")
    assert load_local(path) == []


# -- push ----------------------------------------------------------------

def test_push_batches_and_idempotence(server):
    records = [make_record(runtime_seconds=float(i + 1)) for i in range(250)]
    sizes = []
    result = push(records, server.url, TOKEN, on_batch=lambda b, reply: sizes.append(len(b)))
    assert sizes == [100, 100, 50]
    assert result == {"accepted": 250, "duplicates": 0}
    again = push(records[:10], server.url, TOKEN)
    assert again == {"accepted": 0, "duplicates": 10}
    assert len(server.service) == 250


def test_push_bad_token_no_retry(server):
    sleeps = []
    with pytest.raises(AuthError):
        push([make_record()], server.url, "wrong", sleep=sleeps.append)
    assert sleeps == []
    assert len(server.service) == 0


def test_push_retries_then_succeeds(server, monkeypatch):
    import urllib.error

    from scalebench import resultstore

    real = resultstore._post_batch
    calls = {"n": 0}

    def flaky(*args):
        calls["n"] += 1
        if calls["n"] <= 2:
            raise urllib.error.URLError("connection refused")
        return real(*args)

    monkeypatch.setattr(resultstore, "_post_batch", flaky)
    sleeps = []
    assert push([make_record()], server.url, TOKEN, sleep=sleeps.append)["accepted"] == 1
    assert sleeps == [1.0, 2.0]


def test_push_gives_up_after_delays():
    sleeps = []
    with pytest.raises(RemoteError) as info:
        push([make_record()], "http://127.0.0.1:9", TOKEN, sleep=sleeps.append, timeout=1)
    assert sleeps == [1.0, 2.0, 4.0]
    assert info.value.accepted == 0


def test_push_batch_size_bounds():
    with pytest.raises(ValueError):
        push([], "http://x", TOKEN, batch_size=101)
