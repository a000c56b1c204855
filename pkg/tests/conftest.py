from __future__ import annotations

import contextlib
import os
import re
import signal
import subprocess
import sys
from pathlib import Path

import pytest

from scalebench.domain import RunRecord
from scalebench.service import ResultService, start_background

FIXTURES = Path(__file__).resolve().parent.parent / "fixtures"
TOKEN = "test-token"


def make_record(**overrides) -> RunRecord:
    fields = dict(
        site_id="AWS-NHT",
        family="hpl",
        case_name="hpl",
        nodes=1,
        ppn=16,
        runtime_seconds=184.59,
        gflops=166.3,
        passed=True,
        timestamp_utc="2018-03-05T10:15:06Z",
        tool_version="0.1.0",
        metadata={},
    )
    fields.update(overrides)
    return RunRecord(**fields).with_id()


def hpl_text(time: float, gflops: float, n: int = 35840, nb: int = 192, p: int = 4,
             q: int = 4, verdict: str = "PASSED") -> str:
    """Minimal stdout in HPL's layout, for synthetic replay corpora."""
    return "\n".join([
        "=" * 80,
        "T/V                N    NB     P     Q               Time                 Gflops",
        "-" * 80,
        f"WR11C2R4  {n}  {nb}  {p}  {q}  {time!r}  {gflops!r}",
        "-" * 80,
        f"||Ax-b||_oo/(eps*(||A||_oo*||x||_oo+||b||_oo)*N)=   3.4e-03 ...... {verdict}",
        "=" * 80,
        "",
    ])


@pytest.fixture
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture
def server(tmp_path):
    """Results service on an ephemeral port, torn down after the test."""
    service = ResultService(tmp_path / "service.jsonl", tokens=[TOKEN])
    srv, thread = start_background(service)
    yield srv
    srv.shutdown()
    srv.server_close()
    thread.join(timeout=5)


@contextlib.contextmanager
def serve_process(data: Path, *extra: str, token: str = TOKEN):
    """`scalebench serve` on an ephemeral port; yields (process, base_url)."""
    env = {k: v for k, v in os.environ.items() if not k.startswith("SB_")}
    proc = subprocess.Popen(
        [sys.executable, "-m", "scalebench", "serve", "--config", str(data.parent / "absent.toml"),
         "--listen", "127.0.0.1:0", "--data", str(data), "--token", token, *extra],
        stdout=subprocess.PIPE, stderr=subprocess.PIPE, text=True, env=env)
    try:
        line = proc.stdout.readline()
        match = re.search(r"on (http://\S+)", line)
        if not match:
            proc.kill()
            raise RuntimeError(f"serve did not start: {line!r} {proc.stderr.read()}")
        yield proc, match.group(1)
    finally:
        if proc.poll() is None:
            proc.send_signal(signal.SIGTERM)
            try:
                proc.wait(timeout=10)
            except subprocess.TimeoutExpired:
                proc.kill()
                proc.wait()
