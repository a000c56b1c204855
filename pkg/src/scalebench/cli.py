"""Command line entry point.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
Results go to stdout, diagnostics to stderr.
"""

from __future__ import annotations

import argparse
import errno
import json
import logging
import signal
import sys
import urllib.error
import urllib.parse
import urllib.request
from pathlib import Path
from typing import Sequence

from . import __version__
from .adapters import format_hpl_report
from .config import DEFAULT_CONFIG, DEFAULT_CONFIG_NAME, load_config, parse_listen
from .domain import FAMILIES, METRICS, MetricPoint
from .errors import AuthError, ConfigError, InvalidPlan, RemoteError, ScaleBenchError
from .executor import (
    BatchScriptRunner,
    LocalRunner,
    ReplayRunner,
    execute_plan,
    plan_runs,
)
from .kernels import run_builtin_linpack
from .metrics import aggregate
from .report import write_report
from .resultstore import append_local, load_local, push
from .service import SERIES_PATH, ResultServer, ResultService

log = logging.getLogger("scalebench")

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # argparse exits 2 already; keep message on stderr
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _err(message: str) -> None:
    print(f"scalebench: {message}", file=sys.stderr)


def _int_list(text: str) -> list[int]:
    try:
        return [int(part) for part in text.replace(" ", "").split(",") if part]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}")


def cmd_init(args: argparse.Namespace) -> int:
    path = Path(args.path)
    if path.exists() and not args.force:
        _err(f"{path} exists; use --force to overwrite")
        return EXIT_USAGE
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(DEFAULT_CONFIG, encoding="utf-8")
    except OSError as exc:
        _err(str(exc))
        return EXIT_USAGE
    print(f"wrote {path}")
    return EXIT_OK


def cmd_run(args: argparse.Namespace) -> int:
    try:
        cfg = load_config(args.config)
    except ConfigError as exc:
        _err(str(exc))
        return EXIT_USAGE
    case = cfg.cases.get(args.case)
    if case is None:
        _err(f"unknown case {args.case!r}; configured: {', '.join(sorted(cfg.cases)) or 'none'}")
        return EXIT_USAGE
    store = Path(args.store) if args.store else cfg.store_path
    try:
        plan = plan_runs(case, cfg.site, args.nodes or cfg.node_list,
                         ppn=args.ppn or cfg.ppn, repetitions=args.reps or cfg.repetitions)
    except InvalidPlan as exc:
        _err(str(exc))
        return EXIT_USAGE
    if args.runner == "local":
        runner = LocalRunner(cfg.workdir, base_dir=cfg.base_dir, suite_binary=args.suite_binary)
    elif args.runner == "replay":
        runner = ReplayRunner(Path(args.replay_root) if args.replay_root else cfg.replay_root)
    else:
        try:
            runner = BatchScriptRunner(cfg.batch_dir, args.scheduler or cfg.scheduler,
                                       base_dir=cfg.base_dir, suite_binary=args.suite_binary)
        except ValueError as exc:
            _err(str(exc))
            return EXIT_USAGE

    report = execute_plan(plan, runner)
    try:
        for record in report.records:
            append_local(record, store)
    except OSError as exc:
        _err(f"cannot append to {store}: {exc}")
        return EXIT_FAIL

    print(f"{'case':<16} {'nodes':>5} {'ppn':>4} {'seconds':>12} {'gflops':>12} {'pass':>5}")
    for r in report.records:
        gflops = f"{r.gflops:.4g}" if r.gflops is not None else "-"
        print(f"{r.case_name:<16} {r.nodes:>5} {r.ppn:>4} {r.runtime_seconds:>12.6g} "
              f"{gflops:>12} {'yes' if r.passed else 'NO':>5}")
    for failure in report.failures:
        c = failure.config
        tag = "pending" if failure in report.pending else "FAILED"
        print(f"{case.case_name:<16} {c.nodes:>5} {c.ppn:>4} {tag:>12}  {failure.cause}")
    print(f"{report.summary()}; {len(report.records)} record(s) appended to {store}")
    hard_failures = len(report.failures) - len(report.pending)
    return EXIT_FAIL if hard_failures else EXIT_OK


def _cursor_path(store: Path) -> Path:
    return store.with_name(store.name + ".pushed")


def cmd_push(args: argparse.Namespace) -> int:
    try:
        cfg = load_config(args.config, required=False)
    except ConfigError as exc:
        _err(str(exc))
        return EXIT_USAGE
    endpoint = args.endpoint or cfg.endpoint
    token = args.token or cfg.token
    if not endpoint or not token:
        _err("an endpoint and a token are required (flags, SB_ENDPOINT/SB_TOKEN, or config)")
        return EXIT_USAGE
    store = Path(args.store) if args.store else cfg.store_path
    if not store.exists():
        _err(f"local store {store} does not exist")
        return EXIT_USAGE
    cursor = _cursor_path(store)
    pushed = set(cursor.read_text(encoding="utf-8").split()) if cursor.exists() else set()
    pending, seen = [], set()
    for record in load_local(store):
        if record.record_id in seen or (record.record_id in pushed and not args.all):
            continue
        seen.add(record.record_id)
        pending.append(record)

    def mark(batch, _reply) -> None:
        with open(cursor, "a", encoding="utf-8") as fh:
            fh.writelines(f"{r.record_id}\n" for r in batch)

    try:
        totals = push(pending, endpoint, token, on_batch=mark)
    except AuthError as exc:
        _err(f"authentication failed: {exc}")
        return EXIT_FAIL
    except RemoteError as exc:
        _err(f"push failed: {exc} (accepted={exc.accepted} duplicates={exc.duplicates} so far)")
        return EXIT_FAIL
    print(f"pushed {len(pending)} record(s): accepted={totals['accepted']} "
          f"duplicates={totals['duplicates']}")
    return EXIT_OK


def cmd_serve(args: argparse.Namespace) -> int:
    try:
        cfg = load_config(args.config, required=False)
        host, port = parse_listen(args.listen or cfg.listen)
    except ConfigError as exc:
        _err(str(exc))
        return EXIT_USAGE
    data = Path(args.data) if args.data else cfg.data_path
    tokens = list(cfg.tokens) + list(args.token or [])
    if not tokens:
        log.warning("no write tokens configured; submissions will be refused")
    try:
        service = ResultService(data, tokens)
    except OSError as exc:
        _err(f"cannot open data file {data}: {exc}")
        return EXIT_USAGE
    try:
        server = ResultServer((host, port), service)
    except OSError as exc:
        reason = "address in use" if exc.errno == errno.EADDRINUSE else str(exc)
        _err(f"cannot listen on {host}:{port}: {reason}")
        return EXIT_USAGE

    def stop(signum, frame) -> None:
        raise KeyboardInterrupt

    signal.signal(signal.SIGTERM, stop)
    print(f"serving {len(service)} record(s) from {data} on {server.url}", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    print("stopped", flush=True)
    return EXIT_OK


def _fetch_series(url: str, metric: str, case_name: str, family: str | None,
                  ppn: int | None) -> tuple[list[MetricPoint], list[str]]:
    query = {"metric": metric, "case_name": case_name}
    if family:
        query["family"] = family
    if ppn:
        query["ppn"] = str(ppn)
    full = url.rstrip("/") + SERIES_PATH + "?" + urllib.parse.urlencode(query)
    with urllib.request.urlopen(full, timeout=30) as response:
        payload = json.loads(response.read().decode("utf-8"))
    return [MetricPoint.from_dict(p) for p in payload["points"]], list(payload["warnings"])


def cmd_report(args: argparse.Namespace) -> int:
    if args.source == "local":
        try:
            cfg = load_config(args.config, required=False)
        except ConfigError as exc:
            _err(str(exc))
            return EXIT_USAGE
        store = Path(args.store) if args.store else cfg.store_path
        if not store.exists():
            _err(f"local store {store} does not exist")
            return EXIT_FAIL
        records = load_local(store, case_name=args.case, family=args.family, ppn=args.ppn)
        result = aggregate(records, args.metric)
        points, warnings = result.points, result.warnings
    else:
        try:
            points, warnings = _fetch_series(args.source, args.metric, args.case,
                                             args.family, args.ppn)
        except (urllib.error.URLError, OSError, ValueError, KeyError) as exc:
            _err(f"cannot query {args.source}: {exc}")
            return EXIT_FAIL
    for w in warnings:
        _err(f"warning: {w}")
    if not points:
        _err(f"no {args.metric} points for case {args.case!r}")
        return EXIT_FAIL
    try:
        paths = write_report(points, args.out, args.case, args.metric, png=args.png)
    except ImportError as exc:
        _err(f"--png needs matplotlib (pip install 'scalebench[plot]'): {exc}")
        return EXIT_FAIL
    except (ScaleBenchError, OSError) as exc:
        _err(str(exc))
        return EXIT_FAIL
    for path in paths:
        print(path)
    return EXIT_OK


def cmd_kernel(args: argparse.Namespace) -> int:
    result = run_builtin_linpack(args.n, args.seed)
    sys.stdout.write(format_hpl_report(result))
    return EXIT_OK if result.passed else EXIT_FAIL


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="scalebench", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("init", help="write a commented default config")
    p.add_argument("path", nargs="?", default=DEFAULT_CONFIG_NAME)
    p.add_argument("--force", action="store_true", help="overwrite an existing file")
    p.set_defaults(func=cmd_init)

    p = sub.add_parser("run", help="execute a case over the node matrix and log the results")
    p.add_argument("--config", default=DEFAULT_CONFIG_NAME)
    p.add_argument("--case", required=True)
    p.add_argument("--runner", choices=("local", "replay", "batch-script"), default="local")
    p.add_argument("--nodes", type=_int_list, help="comma-separated node counts, e.g. 1,2,4,8")
    p.add_argument("--ppn", type=int, help="processors per node")
    p.add_argument("--reps", type=int, help="repetitions per node count")
    p.add_argument("--store", help="result log (default from config)")
    p.add_argument("--replay-root", help="fixture root for --runner replay")
    p.add_argument("--scheduler", choices=("pbs", "slurm"), help="for --runner batch-script")
    p.add_argument("--suite-binary", help="command that runs this tool (for builtin_lu)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("push", help="send unsynced local records to the results service")
    p.add_argument("--config", default=DEFAULT_CONFIG_NAME)
    p.add_argument("--endpoint")
    p.add_argument("--token")
    p.add_argument("--store")
    p.add_argument("--all", action="store_true", help="ignore the sync cursor and resend everything")
    p.set_defaults(func=cmd_push)

    p = sub.add_parser("serve", help="run the results service")
    p.add_argument("--config", default=DEFAULT_CONFIG_NAME)
    p.add_argument("--listen", help="host:port (SB_PORT overrides the port)")
    p.add_argument("--data", help="service JSON-Lines file")
    p.add_argument("--token", action="append", help="accepted write token (repeatable)")
    p.set_defaults(func=cmd_serve)

    p = sub.add_parser("report", help="write CSV and SVG charts for one metric")
    p.add_argument("--config", default=DEFAULT_CONFIG_NAME)
    p.add_argument("--source", default="local", help="'local' or a service URL")
    p.add_argument("--metric", choices=METRICS, default="speedup_ratio")
    p.add_argument("--case", required=True)
    p.add_argument("--out", default="report")
    p.add_argument("--family", choices=FAMILIES)
    p.add_argument("--ppn", type=int)
    p.add_argument("--store")
    p.add_argument("--png", action="store_true", help="also render a PNG with matplotlib")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("kernel", help="run the built-in LU kernel and print an HPL-style report")
    p.add_argument("--n", type=int, default=256)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_kernel)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
