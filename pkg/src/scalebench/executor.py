"""Run planning and execution.

A plan is the ordered list of (nodes, ppn, repetition) configurations for
one case on one site. Runners turn a configuration into raw application
output; :func:`execute_plan` parses that output into RunRecords. A failed
configuration is recorded as a :class:`RunFailed` and the plan carries on.
"""

from __future__ import annotations

import logging
import os
import platform
import shlex
import socket
import subprocess
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Protocol, Sequence

from . import __version__
from .adapters import (
    build_command,
    hpl_generate_input,
    hpl_params_for,
    parse_output,
    render_template,
    run_variables,
)
from .domain import (
    DEFAULT_NODE_LIST,
    BenchmarkCase,
    RunConfig,
    RunRecord,
    Site,
    utc_now,
    validate_record,
)
from .errors import InvalidPlan, RunFailed, RunPending, ScaleBenchError

log = logging.getLogger(__name__)

# Families whose own timer overrides the launcher wall clock.
APP_TIMED_FAMILIES = frozenset({"hpl", "vasp", "gromacs"})
SCHEDULERS = ("pbs", "slurm")


def default_suite_binary() -> str:
    return f"{shlex.quote(sys.executable)} -m scalebench"


@dataclass(frozen=True)
class RunPlan:
    case: BenchmarkCase
    site: Site
    configs: tuple[RunConfig, ...]
    ppn_override: bool = False

    def __post_init__(self) -> None:
        object.__setattr__(self, "configs", tuple(self.configs))
        if not self.configs:
            raise InvalidPlan("plan has no configurations")
        if list(self.configs) != sorted(self.configs):
            raise InvalidPlan("configs must be ordered by (nodes, ppn, repetition)")
        if not self.ppn_override and len({c.ppn for c in self.configs}) > 1:
            raise InvalidPlan("configs mix ppn values; pass ppn_override=True to allow it")


def plan_runs(case: BenchmarkCase, site: Site, node_list: Sequence[int] = DEFAULT_NODE_LIST,
              *, ppn: int, repetitions: int = 1) -> RunPlan:
    nodes = list(node_list)
    if not nodes:
        raise InvalidPlan("node_list is empty")
    if any(isinstance(n, bool) or not isinstance(n, int) or n < 1 for n in nodes):
        raise InvalidPlan(f"node counts must be positive integers: {nodes}")
    if any(b <= a for a, b in zip(nodes, nodes[1:])):
        raise InvalidPlan(f"node_list must be strictly increasing: {nodes}")
    if repetitions < 1:
        raise InvalidPlan("repetitions must be >= 1")
    if isinstance(ppn, bool) or not isinstance(ppn, int) or ppn < 1:
        raise InvalidPlan("ppn must be a positive integer")
    configs = [RunConfig(n, ppn, rep) for n in nodes for rep in range(repetitions)]
    return RunPlan(case=case, site=site, configs=tuple(configs))


@dataclass(frozen=True)
class RunOutput:
    text: str
    wall_seconds: float | None = None  # None when no live timing exists (replay)


class Runner(Protocol):
    kind: str

    def run(self, case: BenchmarkCase, config: RunConfig) -> RunOutput: ...


class ReplayRunner:
    """Serves recorded outputs from ``<root>/<family>/<case>/<nodes>x<ppn>.out``.

    A repetition-specific ``<nodes>x<ppn>.r<k>.out`` wins over the plain file.
    """

    kind = "replay"

    def __init__(self, root: Path | str) -> None:
        self.root = Path(root)

    def fixture_path(self, case: BenchmarkCase, config: RunConfig) -> Path:
        base = self.root / case.family / case.case_name
        specific = base / f"{config.nodes}x{config.ppn}.r{config.repetition}.out"
        return specific if specific.exists() else base / f"{config.nodes}x{config.ppn}.out"

    def run(self, case: BenchmarkCase, config: RunConfig) -> RunOutput:
        path = self.fixture_path(case, config)
        try:
            return RunOutput(path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise RunFailed(config, f"no replay fixture at {path}") from None


def resolve_binary(case: BenchmarkCase, suite_binary: str | None = None) -> str:
    if case.family == "builtin_lu":
        return suite_binary or default_suite_binary()
    binary = case.parameters.get("binary")
    if not binary:
        raise ScaleBenchError(f"case {case.case_name!r} has no 'binary' parameter")
    return str(binary)


def prepare_inputs(case: BenchmarkCase, config: RunConfig,
                   base_dir: Path | str = ".") -> dict[str, str]:
    """Rendered input files for a run, keyed by file name.

    Templates named ``*.tmpl`` or ``*.template`` lose that suffix. HPL cases
    without an explicit HPL.dat template get a generated one.
    """
    variables = run_variables(case, config)
    files: dict[str, str] = {}
    for rel in case.template_paths:
        src = Path(base_dir) / rel
        name = src.name
        for suffix in (".tmpl", ".template"):
            if name.endswith(suffix):
                name = name[: -len(suffix)]
        files[name] = render_template(src.read_text(encoding="utf-8"), variables)
    if case.family == "hpl" and "HPL.dat" not in files:
        files["HPL.dat"] = hpl_generate_input(hpl_params_for(case, config))
    return files


class LocalRunner:
    """Runs each configuration as a child process on this machine.

    The child is timed with a monotonic clock from spawn to exit. Output is
    the child's stdout unless the case names an ``output_file`` (e.g.
    ``OUTCAR``) to read from the run directory afterwards.
    """

    kind = "local"

    def __init__(self, workdir: Path | str, base_dir: Path | str = ".",
                 suite_binary: str | None = None, timeout: float | None = None) -> None:
        self.workdir = Path(workdir)
        self.base_dir = Path(base_dir)
        self.suite_binary = suite_binary
        self.timeout = timeout

    def run(self, case: BenchmarkCase, config: RunConfig) -> RunOutput:
        rundir = self.workdir / case.case_name / f"{config.nodes}x{config.ppn}-r{config.repetition}"
        try:
            rundir.mkdir(parents=True, exist_ok=True)
            for name, text in prepare_inputs(case, config, self.base_dir).items():
                (rundir / name).write_text(text, encoding="utf-8")
            cmd = build_command(case, config, resolve_binary(case, self.suite_binary))
        except (OSError, ScaleBenchError) as exc:
            raise RunFailed(config, exc) from exc
        env = {**os.environ, **cmd["env"]}
        log.info("running %s in %s", shlex.join(cmd["argv"]), rundir)
        start = time.perf_counter()
        try:
            proc = subprocess.run(cmd["argv"], cwd=rundir, env=env, capture_output=True,
                                  text=True, timeout=self.timeout)
        except (OSError, subprocess.SubprocessError) as exc:
            raise RunFailed(config, exc) from exc
        wall = time.perf_counter() - start
        (rundir / "stdout.txt").write_text(proc.stdout, encoding="utf-8")
        if proc.returncode != 0:
            tail = proc.stderr.strip().splitlines()[-3:]
            raise RunFailed(config, f"exit status {proc.returncode}: {' | '.join(tail)}")
        text = proc.stdout
        output_file = case.parameters.get("output_file")
        if output_file:
            try:
                text = (rundir / str(output_file)).read_text(encoding="utf-8")
            except OSError as exc:
                raise RunFailed(config, exc) from exc
        return RunOutput(text, wall_seconds=wall)


def _script_stem(case: BenchmarkCase, config: RunConfig) -> str:
    return f"{case.case_name}_{config.nodes}x{config.ppn}_r{config.repetition}"


def emit_batch_script(case: BenchmarkCase, config: RunConfig, scheduler: str,
                      binary_path: str | None = None, base_dir: Path | str = ".",
                      output_path: str | None = None) -> str:
    """Job script for PBS or Slurm that stages inputs and runs the case once."""
    if scheduler not in SCHEDULERS:
        raise ValueError(f"unknown scheduler {scheduler!r}; expected one of {SCHEDULERS}")
    cmd = build_command(case, config, binary_path or resolve_binary(case))
    stem = _script_stem(case, config)
    output_path = output_path or f"{stem}.out"
    lines = ["#!/bin/bash"]
    if scheduler == "pbs":
        lines += [
            f"#PBS -N {stem}",
            f"#PBS -l nodes={config.nodes}:ppn={config.ppn}",
            f"#PBS -o {output_path}",
            "#PBS -j oe",
            "",
            'cd "${PBS_O_WORKDIR:-.}"',
        ]
    else:
        lines += [
            f"#SBATCH --job-name={stem}",
            f"#SBATCH --nodes={config.nodes}",
            f"#SBATCH --ntasks-per-node={config.ppn}",
            f"#SBATCH --output={output_path}",
            "",
            'cd "${SLURM_SUBMIT_DIR:-.}"',
        ]
    lines.append("set -e")
    for key, value in sorted(cmd["env"].items()):
        lines.append(f"export {key}={shlex.quote(value)}")
    for name, text in prepare_inputs(case, config, base_dir).items():
        lines.append(f"cat > {shlex.quote(name)} <<'SCALEBENCH_EOF'")
        lines.append(text.rstrip("\n"))
        lines.append("SCALEBENCH_EOF")
    lines.append(shlex.join(cmd["argv"]))
    return "\n".join(lines) + "\n"


class BatchScriptRunner:
    """Two-phase runner for clusters with a resource manager.

    The first pass writes one job script per configuration and reports each
    run as pending. After the jobs have been submitted and finished, a
    second pass finds their output files next to the scripts and parses them.
    Nothing is ever submitted or polled from here.
    """

    kind = "batch_script"

    def __init__(self, outdir: Path | str, scheduler: str = "slurm", base_dir: Path | str = ".",
                 suite_binary: str | None = None) -> None:
        if scheduler not in SCHEDULERS:
            raise ValueError(f"unknown scheduler {scheduler!r}")
        self.outdir = Path(outdir)
        self.scheduler = scheduler
        self.base_dir = Path(base_dir)
        self.suite_binary = suite_binary

    def run(self, case: BenchmarkCase, config: RunConfig) -> RunOutput:
        stem = _script_stem(case, config)
        output = self.outdir / f"{stem}.out"
        if output.exists():
            return RunOutput(output.read_text(encoding="utf-8"))
        try:
            self.outdir.mkdir(parents=True, exist_ok=True)
            script = emit_batch_script(case, config, self.scheduler,
                                       resolve_binary(case, self.suite_binary),
                                       self.base_dir, output_path=output.name)
            path = self.outdir / f"{stem}.{self.scheduler}.sh"
            path.write_text(script, encoding="utf-8")
        except (OSError, ScaleBenchError) as exc:
            raise RunFailed(config, exc) from exc
        raise RunPending(config, f"script written to {path}; output pending")


def capture_environment() -> dict[str, str]:
    def probe(fn: Callable[[], object]) -> str:
        try:
            value = fn()
        except Exception:
            return "unknown"
        return "unknown" if value in (None, "") else str(value)

    return {
        "hostname": probe(socket.gethostname),
        "logical_cpu_count": probe(os.cpu_count),
        "timestamp_utc": utc_now(),
        "tool_version": __version__,
        "platform": probe(platform.platform),
        "python": probe(platform.python_version),
    }


@dataclass
class ExecutionReport:
    records: list[RunRecord] = field(default_factory=list)
    failures: list[RunFailed] = field(default_factory=list)

    @property
    def pending(self) -> list[RunFailed]:
        return [f for f in self.failures if isinstance(f, RunPending)]

    @property
    def ok(self) -> bool:
        return not self.failures

    def summary(self) -> str:
        hard = len(self.failures) - len(self.pending)
        return f"{len(self.records)} succeeded, {hard} failed, {len(self.pending)} pending"


def execute_plan(plan: RunPlan, runner: Runner,
                 clock: Callable[[], str] = utc_now) -> ExecutionReport:
    """Run every configuration in order; one bad run never stops the rest."""
    env = capture_environment()
    env.pop("timestamp_utc")
    report = ExecutionReport()
    case = plan.case
    for config in plan.configs:
        started = clock()
        try:
            output = runner.run(case, config)
            parsed = parse_output(case.family, output.text)
            if output.wall_seconds is not None and case.family not in APP_TIMED_FAMILIES:
                runtime, source = output.wall_seconds, "wall_clock"
            else:
                runtime, source = parsed.runtime_seconds, "application"
            metadata = {
                **env,
                **{f"app_{k}": str(v) for k, v in parsed.extras.items()},
                "runner": runner.kind,
                "time_source": source,
                "repetition": str(config.repetition),
            }
            if output.wall_seconds is not None:
                metadata["wall_seconds"] = repr(output.wall_seconds)
            record = RunRecord(
                site_id=plan.site.id,
                family=case.family,
                case_name=case.case_name,
                nodes=config.nodes,
                ppn=config.ppn,
                runtime_seconds=runtime,
                gflops=parsed.gflops,
                passed=parsed.passed,
                timestamp_utc=started,
                tool_version=__version__,
                metadata=metadata,
            ).with_id()
            report.records.append(validate_record(record))
        except RunFailed as exc:
            report.failures.append(exc)
            log.warning("run %s failed: %s", config, exc.cause)
        except ScaleBenchError as exc:
            report.failures.append(RunFailed(config, exc))
            log.warning("run %s failed: %s", config, exc)
    return report
