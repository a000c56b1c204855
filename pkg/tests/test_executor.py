from __future__ import annotations

import shutil
import sys

import pytest

from scalebench.domain import BenchmarkCase, RunConfig, Site
from scalebench.errors import InvalidPlan
from scalebench.executor import (
    BatchScriptRunner,
    LocalRunner,
    ReplayRunner,
    capture_environment,
    emit_batch_script,
    execute_plan,
    plan_runs,
)

from conftest import FIXTURES

HPL = BenchmarkCase("hpl", "hpl", parameters={"binary": "xhpl", "N": 35840, "NB": 192})
LU = BenchmarkCase("builtin_lu", "builtin-lu", parameters={"n": 64, "seed": 1})
SITE = Site("OL-NHT", provider="oracle")


def test_default_plan_is_1_2_4_8():
    plan = plan_runs(HPL, SITE, ppn=36)
    assert [(c.nodes, c.ppn) for c in plan.configs] == [(1, 36), (2, 36), (4, 36), (8, 36)]


def test_repetitions():
    plan = plan_runs(HPL, SITE, [1], ppn=1, repetitions=3)
    assert [(c.nodes, c.repetition) for c in plan.configs] == [(1, 0), (1, 1), (1, 2)]


@pytest.mark.parametrize("nodes", [[2, 1], [], [1, 1], [0, 1]])
def test_invalid_node_lists(nodes):
    with pytest.raises(InvalidPlan):
        plan_runs(HPL, SITE, nodes, ppn=1)


def test_replay_four_fixtures():
    plan = plan_runs(HPL, SITE, ppn=16)
    report = execute_plan(plan, ReplayRunner(FIXTURES))
    assert report.ok
    assert [r.gflops for r in report.records] == [166.3, 319.3, 612.0, 1131.0]
    assert [r.runtime_seconds for r in report.records] == [184.59, 96.14, 50.16, 27.14]
    assert {r.metadata["time_source"] for r in report.records} == {"application"}
    assert {(r.site_id, r.family, r.case_name, r.ppn) for r in report.records} == {
        ("OL-NHT", "hpl", "hpl", 16)}


def test_replay_missing_fixture_continues(tmp_path):
    root = tmp_path / "fx"
    shutil.copytree(FIXTURES / "hpl", root / "hpl")
    (root / "hpl/hpl/8x16.out").unlink()
    report = execute_plan(plan_runs(HPL, SITE, ppn=16), ReplayRunner(root))
    assert len(report.records) == 3
    assert len(report.failures) == 1
    assert report.failures[0].config == RunConfig(8, 16, 0)


def test_replay_deterministic_except_timestamps():
    plan = plan_runs(HPL, SITE, ppn=16)
    a = execute_plan(plan, ReplayRunner(FIXTURES), clock=lambda: "2020-01-01T00:00:00Z")
    b = execute_plan(plan, ReplayRunner(FIXTURES), clock=lambda: "2021-06-01T12:00:00Z")
    strip = lambda r: {k: v for k, v in r.to_dict().items() if k not in ("timestamp_utc", "record_id")}
    assert [strip(r) for r in a.records] == [strip(r) for r in b.records]
    fixed = execute_plan(plan, ReplayRunner(FIXTURES), clock=lambda: "2020-01-01T00:00:00Z")
    assert fixed.records == a.records


def test_unparseable_output_is_a_failure(tmp_path):
    (tmp_path / "hpl/hpl").mkdir(parents=True)
    (tmp_path / "hpl/hpl/1x1.out").write_text("garbage")
    report = execute_plan(plan_runs(HPL, SITE, [1], ppn=1), ReplayRunner(tmp_path))
    assert not report.records and "no result row" in str(report.failures[0])


def test_local_builtin_kernel(tmp_path):
    runner = LocalRunner(tmp_path, suite_binary=f"{sys.executable} -m scalebench")
    case = BenchmarkCase("builtin_lu", "builtin-lu", parameters={"n": 256, "seed": 0})
    report = execute_plan(plan_runs(case, SITE, [1], ppn=1), runner)
    assert report.ok, report.failures
    (record,) = report.records
    assert record.gflops > 0 and record.passed
    assert record.metadata["time_source"] == "wall_clock"
    assert record.runtime_seconds == float(record.metadata["wall_seconds"])


def test_local_missing_binary_fails_cleanly(tmp_path):
    case = BenchmarkCase("vasp", "VASP-ELB", parameters={"binary": "/nonexistent/vasp"})
    report = execute_plan(plan_runs(case, SITE, [1], ppn=1),
                          LocalRunner(tmp_path, suite_binary="unused"))
    assert len(report.failures) == 1 and not report.records


def test_local_app_timing_overrides_wall(tmp_path):
    # fake "VASP": a launcher that just writes an OUTCAR
    fake = tmp_path / "fake_mpirun"
    fake.write_text("#!/bin/sh\nprintf ' Elapsed time (sec):   12.5\\n' > OUTCAR\n")
    fake.chmod(0o755)
    case = BenchmarkCase("vasp", "VASP-ELB", parameters={
        "binary": "vasp_std", "launcher": str(fake), "output_file": "OUTCAR"})
    report = execute_plan(plan_runs(case, SITE, [1], ppn=1), LocalRunner(tmp_path / "runs"))
    (record,) = report.records
    assert record.runtime_seconds == 12.5
    assert record.metadata["time_source"] == "application"
    assert "wall_seconds" in record.metadata


def test_emit_pbs():
    script = emit_batch_script(HPL, RunConfig(4, 16), "pbs")
    assert "#PBS -l nodes=4:ppn=16" in script
    assert "mpirun -np 64 xhpl" in script
    assert "HPL.dat" in script


def test_emit_slurm_minimal():
    script = emit_batch_script(HPL, RunConfig(1, 1), "slurm")
    assert "#SBATCH --nodes=1" in script
    assert "#SBATCH --ntasks-per-node=1" in script


def test_emit_slurm_builtin_kernel():
    script = emit_batch_script(LU, RunConfig(1, 1), "slurm", binary_path="scalebench")
    assert script.rstrip().endswith("scalebench kernel --n 64 --seed 1")


def test_emit_unknown_scheduler():
    with pytest.raises(ValueError):
        emit_batch_script(HPL, RunConfig(1, 1), "lsf")


def test_batch_runner_two_phase(tmp_path):
    runner = BatchScriptRunner(tmp_path, "slurm")
    plan = plan_runs(HPL, SITE, [1, 2], ppn=16)
    first = execute_plan(plan, runner)
    assert not first.records and len(first.pending) == 2
    scripts = sorted(p.name for p in tmp_path.glob("*.sh"))
    assert scripts == ["hpl_1x16_r0.slurm.sh", "hpl_2x16_r0.slurm.sh"]
    shutil.copy(FIXTURES / "hpl/hpl/1x16.out", tmp_path / "hpl_1x16_r0.out")
    shutil.copy(FIXTURES / "hpl/hpl/2x16.out", tmp_path / "hpl_2x16_r0.out")
    second = execute_plan(plan, runner)
    assert second.ok and [r.gflops for r in second.records] == [166.3, 319.3]


def test_capture_environment_keys():
    env = capture_environment()
    for key in ("hostname", "logical_cpu_count", "timestamp_utc", "tool_version"):
        assert env[key]
    assert capture_environment()["timestamp_utc"] >= env["timestamp_utc"]


def test_capture_environment_offline(monkeypatch):
    import socket

    def boom():
        raise OSError("no network")

    monkeypatch.setattr(socket, "gethostname", boom)
    assert capture_environment()["hostname"] == "unknown"
