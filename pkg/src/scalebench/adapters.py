"""Application adapters: input templates, launch commands and output parsers.

One parser per supported application. Each returns a :class:`ParsedOutput`
or raises :class:`ParseError`; none of them ever reports a non-positive
runtime.
"""

from __future__ import annotations

import math
import re
import shlex
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Mapping

from .domain import BenchmarkCase, RunConfig
from .errors import InvalidGrid, MissingVariable, ParseError
from .kernels import RESIDUAL_THRESHOLD, KernelResult

PLACEHOLDER_RE = re.compile(r"\{\{\s*([A-Za-z_][A-Za-z0-9_]*)\s*\}\}")
RUN_VARIABLES = frozenset({"nodes", "ppn", "total_cores"})

DEFAULT_LAUNCHER = "mpirun"
DEFAULT_NP_FLAG = "-np"
DEFAULT_KERNEL_N = 256

_NUMBER = r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?"


@dataclass(frozen=True)
class ParsedOutput:
    family: str
    runtime_seconds: float
    gflops: float | None = None
    passed: bool = True
    extras: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not (self.runtime_seconds > 0 and math.isfinite(self.runtime_seconds)):
            raise ParseError(f"non-positive runtime {self.runtime_seconds!r}")
        if self.family == "hpl" and self.gflops is None:
            raise ParseError("hpl output without gflops")


# -- templates -----------------------------------------------------------

def _format_value(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def render_template(template: str, variables: Mapping[str, Any]) -> str:
    """Replace every ``{{name}}`` with its binding. Unused variables are fine."""

    def substitute(match: re.Match[str]) -> str:
        name = match.group(1)
        if name not in variables:
            raise MissingVariable(name)
        return _format_value(variables[name])

    return PLACEHOLDER_RE.sub(substitute, template)


def template_placeholders(template: str) -> set[str]:
    return set(PLACEHOLDER_RE.findall(template))


def run_variables(case: BenchmarkCase, config: RunConfig) -> dict[str, Any]:
    variables = dict(case.parameters)
    variables.update(nodes=config.nodes, ppn=config.ppn, total_cores=config.total_cores)
    return variables


def check_case_templates(case: BenchmarkCase, base_dir: Path | str = ".") -> None:
    """Raise MissingVariable if a template references an unbound placeholder."""
    bound = set(case.parameters) | RUN_VARIABLES
    for rel in case.template_paths:
        text = (Path(base_dir) / rel).read_text(encoding="utf-8")
        for name in sorted(template_placeholders(text) - bound):
            raise MissingVariable(name)


# -- HPL -----------------------------------------------------------------

_HPL_DAT = """\
HPLinpack benchmark input file
Innovative Computing Laboratory, University of Tennessee
HPL.out      output file name (if any)
6            device out (6=stdout,7=stderr,file)
1            # of problems sizes (N)
{N:<12d} Ns
1            # of NBs
{NB:<12d} NBs
0            PMAP process mapping (0=Row-,1=Column-major)
1            # of process grids (P x Q)
{P:<12d} Ps
{Q:<12d} Qs
16.0         threshold
1            # of panel fact
2            PFACTs (0=left, 1=Crout, 2=Right)
1            # of recursive stopping criterium
4            NBMINs (>= 1)
1            # of panels in recursion
2            NDIVs
1            # of recursive panel fact.
1            RFACTs (0=left, 1=Crout, 2=Right)
1            # of broadcast
1            BCASTs (0=1rg,1=1rM,2=2rg,3=2rM,4=Lng,5=LnM)
1            # of lookahead depth
1            DEPTHs (>=0)
2            SWAP (0=bin-exch,1=long,2=mix)
64           swapping threshold
0            L1 in (0=transposed,1=no-transposed) form
0            U  in (0=transposed,1=no-transposed) form
1            Equilibration (0=no,1=yes)
8            memory alignment in double (>=8)
"""


def hpl_generate_input(params: Mapping[str, int]) -> str:
    """HPL.dat text for a single N, a single NB and a single P x Q grid.

    The caller is responsible for P*Q matching the number of MPI ranks.
    """
    try:
        n, nb, p, q = (int(params[k]) for k in ("N", "NB", "P", "Q"))
    except KeyError as exc:
        raise MissingVariable(exc.args[0]) from None
    if p < 1 or q < 1:
        raise InvalidGrid(f"process grid {p}x{q} is empty")
    if n < 1 or nb < 1:
        raise ValueError("N and NB must be >= 1")
    return _HPL_DAT.format(N=n, NB=nb, P=p, Q=q)


def _hpl_grid(ranks: int) -> tuple[int, int]:
    """Most square P x Q factorization with P <= Q."""
    p = int(math.isqrt(ranks))
    while ranks % p:
        p -= 1
    return p, ranks // p


_HPL_HEADER_RE = re.compile(r"^\s*T/V\s+N\s+NB\s+P\s+Q\s+Time\s+Gflops\s*$")
_HPL_ROW_RE = re.compile(
    rf"^\s*(\S+)\s+(\d+)\s+(\d+)\s+(\d+)\s+(\d+)\s+({_NUMBER})\s+({_NUMBER})\s*$"
)
_HPL_CHECK_RE = re.compile(r"\|\|Ax-b\|\|.*?(PASSED|FAILED)")


def parse_hpl_output(text: str) -> ParsedOutput:
    """Extract time, Gflops and residual verdict from HPL stdout.

    Uses the first result row under the first ``T/V N NB P Q Time Gflops``
    header. ``passed`` is true only if every residual check says PASSED.
    """
    lines = text.splitlines()
    row = None
    for i, line in enumerate(lines):
        if _HPL_HEADER_RE.match(line):
            for candidate in lines[i + 1:]:
                m = _HPL_ROW_RE.match(candidate)
                if m:
                    row = m
                    break
            break
    if row is None:
        raise ParseError("no result row")
    verdicts = _HPL_CHECK_RE.findall(text)
    if not verdicts:
        raise ParseError("no residual verdict")
    runtime = float(row.group(6))
    if runtime <= 0:
        raise ParseError(f"non-positive runtime {runtime!r}")
    return ParsedOutput(
        family="hpl",
        runtime_seconds=runtime,
        gflops=float(row.group(7)),
        passed=all(v == "PASSED" for v in verdicts),
        extras={"variant": row.group(1), "N": row.group(2), "NB": row.group(3),
                "P": row.group(4), "Q": row.group(5)},
    )


def format_hpl_report(result: KernelResult, nb: int = 1, p: int = 1, q: int = 1,
                      variant: str = "WR00L2L2") -> str:
    """Render a kernel result in HPL's stdout layout so parse_hpl_output reads it."""
    rule = "=" * 80
    dash = "-" * 80
    verdict = "PASSED" if result.passed else "FAILED"
    return "\n".join([
        rule,
        "scalebench builtin LU kernel (HPL-compatible report)",
        rule,
        "",
        "The matrix A is randomly generated for each test.",
        f"The relative machine precision (eps) is taken to be {2.0 ** -52:.6e}",
        f"Computational tests pass if scaled residuals are less than {RESIDUAL_THRESHOLD:.1f}",
        "",
        rule,
        f"{'T/V':<10}{'N':>10}{'NB':>6}{'P':>6}{'Q':>6}{'Time':>19}{'Gflops':>23}",
        dash,
        f"{variant:<10}{result.n:>10d}{nb:>6d}{p:>6d}{q:>6d}"
        f" {result.runtime_seconds!r:>18} {result.gflops!r:>22}",
        dash,
        f"||Ax-b||_oo/(eps*(||A||_oo*||x||_oo+||b||_oo)*N)= {result.residual:>15.7e} ...... {verdict}",
        rule,
        "",
        "Finished      1 tests with the following results:",
        f"              {int(result.passed)} tests completed and passed residual checks,",
        f"              {int(not result.passed)} tests completed and failed residual checks,",
        "              0 tests skipped because of illegal input values.",
        dash,
        "",
        "End of Tests.",
        rule,
        "",
    ])


# -- VASP / GROMACS --------------------------------------------------------

_VASP_ELAPSED_RE = re.compile(rf"Elapsed time \(sec\):\s*({_NUMBER})")


def parse_vasp_output(text: str) -> ParsedOutput:
    """Runtime from the last ``Elapsed time (sec):`` line of an OUTCAR."""
    matches = _VASP_ELAPSED_RE.findall(text)
    if not matches:
        raise ParseError("no elapsed time")
    runtime = float(matches[-1])
    if runtime <= 0:
        raise ParseError(f"non-positive runtime {runtime!r}")
    return ParsedOutput(family="vasp", runtime_seconds=runtime, passed=True)


_GMX_TIME_RE = re.compile(rf"^\s*Time:\s+({_NUMBER})\s+({_NUMBER})", re.MULTILINE)
_GMX_PERF_RE = re.compile(rf"^\s*Performance:\s+({_NUMBER})(?:\s+({_NUMBER}))?", re.MULTILINE)


def parse_gromacs_output(text: str) -> ParsedOutput:
    """Wall time from md.log's ``Time:`` line; ns/day kept as an extra."""
    matches = _GMX_TIME_RE.findall(text)
    if not matches:
        raise ParseError("no time line")
    runtime = float(matches[-1][1])
    if runtime <= 0:
        raise ParseError(f"non-positive runtime {runtime!r}")
    extras = {}
    perf = _GMX_PERF_RE.findall(text)
    if perf:
        extras["ns_per_day"] = perf[-1][0]
        if perf[-1][1]:
            extras["hour_per_ns"] = perf[-1][1]
    return ParsedOutput(family="gromacs", runtime_seconds=runtime, extras=extras)


PARSERS: dict[str, Callable[[str], ParsedOutput]] = {
    "hpl": parse_hpl_output,
    # the kernel subcommand prints an HPL-layout report
    "builtin_lu": lambda text: _as_builtin(parse_hpl_output(text)),
    "vasp": parse_vasp_output,
    "gromacs": parse_gromacs_output,
}


def _as_builtin(parsed: ParsedOutput) -> ParsedOutput:
    return ParsedOutput(family="builtin_lu", runtime_seconds=parsed.runtime_seconds,
                        gflops=parsed.gflops, passed=parsed.passed, extras=parsed.extras)


def parse_output(family: str, text: str) -> ParsedOutput:
    try:
        parser = PARSERS[family]
    except KeyError:
        raise ParseError(f"no parser for family {family!r}") from None
    return parser(text)


# -- commands ------------------------------------------------------------

def build_command(case: BenchmarkCase, config: RunConfig, binary_path: str) -> dict[str, Any]:
    """Launcher argv and environment for one run. Executes nothing.

    ``builtin_lu`` is single-process, so it is invoked directly as
    ``<suite binary> kernel ...`` with no MPI launcher. Everything else goes
    through ``<launcher> <np flag> <total cores> <binary> <args...>``;
    launcher, flag and extra args come from the case parameters
    ``launcher``, ``np_flag`` and ``args``.
    """
    if not binary_path:
        raise ValueError("binary_path must be non-empty")
    params = case.parameters
    env = {"OMP_NUM_THREADS": str(params.get("omp_num_threads", 1))}
    if case.family == "builtin_lu":
        argv = shlex.split(binary_path) + [
            "kernel",
            "--n", str(params.get("n", DEFAULT_KERNEL_N)),
            "--seed", str(params.get("seed", 0)),
        ]
        return {"argv": argv, "env": env}
    argv = [
        str(params.get("launcher", DEFAULT_LAUNCHER)),
        str(params.get("np_flag", DEFAULT_NP_FLAG)),
        str(config.total_cores),
        binary_path,
    ]
    extra = params.get("args", "")
    if extra:
        rendered = render_template(str(extra), run_variables(case, config))
        argv.extend(shlex.split(rendered))
    return {"argv": argv, "env": env}


def hpl_params_for(case: BenchmarkCase, config: RunConfig) -> dict[str, int]:
    """HPL.dat parameters for a run; grid defaults to the squarest P x Q."""
    p, q = _hpl_grid(config.total_cores)
    params = case.parameters
    return {
        "N": int(params.get("N", 1000)),
        "NB": int(params.get("NB", 128)),
        "P": int(params.get("P", p)),
        "Q": int(params.get("Q", q)),
    }
