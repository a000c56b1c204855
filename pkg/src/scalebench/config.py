"""TOML configuration for the command line tool."""

from __future__ import annotations

import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .domain import DEFAULT_NODE_LIST, BenchmarkCase, Site
from .errors import ConfigError, ValidationError

DEFAULT_CONFIG_NAME = "scalebench.toml"
DEFAULT_LISTEN = "127.0.0.1:8080"

DEFAULT_CONFIG = """\
# scalebench configuration.
# Relative paths are resolved against the directory holding this file.
# SB_ENDPOINT and SB_TOKEN override [service].endpoint and [service].token.

[site]
# Unique site id; also used as the legend label in charts.
id = "my-site"
provider = "on-premises"
description = ""
hyperthreading = false
cpu_model = ""
interconnect = ""

[store]
path = "results.jsonl"      # local append-only result log
workdir = "runs"            # run directories for the local runner
replay_root = "fixtures"    # <family>/<case>/<nodes>x<ppn>.out for the replay runner
batch_dir = "batch"         # job scripts and their outputs
scheduler = "slurm"         # pbs | slurm

[plan]
node_list = [1, 2, 4, 8]
ppn = 1
repetitions = 1

[service]
# Client side (push / report --source URL).
endpoint = "http://127.0.0.1:8080"
token = ""
# Server side (serve). SB_PORT overrides the port of `listen`.
listen = "127.0.0.1:8080"
data = "service-results.jsonl"
tokens = []

# Built-in LU kernel: runs anywhere, no external binaries.
[[cases]]
name = "builtin-lu"
family = "builtin_lu"
[cases.parameters]
n = 256
seed = 0

# The stubs below need real binaries; adjust `binary` before a local run.
[[cases]]
name = "hpl"
family = "hpl"
[cases.parameters]
binary = "xhpl"
N = 35840
NB = 192

[[cases]]
name = "VASP-ELB"
family = "vasp"
templates = []              # e.g. ["templates/vasp/INCAR.tmpl"]
[cases.parameters]
binary = "vasp_std"
output_file = "OUTCAR"

[[cases]]
name = "gromacs"
family = "gromacs"
[cases.parameters]
binary = "gmx_mpi"
args = "mdrun -s topol.tpr -g md.log"
output_file = "md.log"
"""


@dataclass
class Config:
    path: Path | None = None
    site: Site = field(default_factory=lambda: Site(id="my-site"))
    cases: dict[str, BenchmarkCase] = field(default_factory=dict)
    store_path: Path = Path("results.jsonl")
    workdir: Path = Path("runs")
    replay_root: Path = Path("fixtures")
    batch_dir: Path = Path("batch")
    scheduler: str = "slurm"
    node_list: tuple[int, ...] = DEFAULT_NODE_LIST
    ppn: int = 1
    repetitions: int = 1
    endpoint: str | None = None
    token: str | None = None
    listen: str = DEFAULT_LISTEN
    data_path: Path = Path("service-results.jsonl")
    tokens: tuple[str, ...] = ()

    @property
    def base_dir(self) -> Path:
        return self.path.parent if self.path else Path(".")


def _table(data: dict, name: str) -> dict:
    value = data.get(name, {})
    if not isinstance(value, dict):
        raise ConfigError(f"[{name}] must be a table")
    return value


def load_config(path: Path | str | None = None, required: bool = True) -> Config:
    """Parse a config file; with ``required=False`` a missing file gives defaults."""
    env_endpoint = os.environ.get("SB_ENDPOINT") or None
    env_token = os.environ.get("SB_TOKEN") or None
    path = Path(path or DEFAULT_CONFIG_NAME)
    if not path.exists():
        if required:
            raise ConfigError(f"config file {path} not found (create one with `scalebench init`)")
        return Config(endpoint=env_endpoint, token=env_token,
                      tokens=(env_token,) if env_token else ())
    try:
        data = tomllib.loads(path.read_text(encoding="utf-8"))
    except (OSError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc

    base = path.parent
    cfg = Config(path=path)

    def resolve(value: Any, default: Path) -> Path:
        p = Path(value) if value else default
        return p if p.is_absolute() else base / p

    try:
        cfg.site = Site.from_dict(_table(data, "site") or {"id": "my-site"})
        store = _table(data, "store")
        cfg.store_path = resolve(store.get("path"), Path("results.jsonl"))
        cfg.workdir = resolve(store.get("workdir"), Path("runs"))
        cfg.replay_root = resolve(store.get("replay_root"), Path("fixtures"))
        cfg.batch_dir = resolve(store.get("batch_dir"), Path("batch"))
        cfg.scheduler = str(store.get("scheduler", "slurm"))
        plan = _table(data, "plan")
        cfg.node_list = tuple(int(n) for n in plan.get("node_list", DEFAULT_NODE_LIST))
        cfg.ppn = int(plan.get("ppn", 1))
        cfg.repetitions = int(plan.get("repetitions", 1))
        service = _table(data, "service")
        cfg.endpoint = env_endpoint or service.get("endpoint") or None
        cfg.token = env_token or service.get("token") or None
        cfg.listen = str(service.get("listen", DEFAULT_LISTEN))
        cfg.data_path = resolve(service.get("data"), Path("service-results.jsonl"))
        cfg.tokens = tuple(str(t) for t in service.get("tokens", ()))
        if env_token and env_token not in cfg.tokens:
            cfg.tokens += (env_token,)
        for entry in data.get("cases", []):
            name = entry.get("name")
            if name in cfg.cases:
                raise ConfigError(f"case {name!r} defined twice")
            cfg.cases[name] = BenchmarkCase(
                family=entry.get("family", ""),
                case_name=name or "",
                template_paths=tuple(entry.get("templates", ())),
                parameters=dict(entry.get("parameters", {})),
            )
    except ValidationError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return cfg


def parse_listen(listen: str) -> tuple[str, int]:
    """``host:port`` (or bare port) with SB_PORT overriding the port."""
    host, _, port = listen.rpartition(":")
    if not host and not port.isdigit():
        raise ConfigError(f"bad listen address {listen!r}")
    env_port = os.environ.get("SB_PORT")
    try:
        return host or "127.0.0.1", int(env_port if env_port else port)
    except ValueError:
        raise ConfigError(f"bad port in {listen!r} / SB_PORT={env_port!r}") from None
