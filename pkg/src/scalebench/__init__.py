"""Benchmark orchestration across node/ppn matrices with shared result aggregation."""

from importlib import metadata as _metadata

try:
    __version__ = _metadata.version("scalebench")
except _metadata.PackageNotFoundError:  # running from a source tree
    __version__ = "0.1.0"

from .domain import (  # noqa: E402
    BenchmarkCase,
    MetricPoint,
    RunConfig,
    RunRecord,
    Site,
    validate_record,
)
from .errors import ScaleBenchError  # noqa: E402

__all__ = [
    "BenchmarkCase",
    "MetricPoint",
    "RunConfig",
    "RunRecord",
    "ScaleBenchError",
    "Site",
    "validate_record",
    "__version__",
]
