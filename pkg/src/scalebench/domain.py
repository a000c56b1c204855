"""Core data model: sites, benchmark cases, run configurations and records.

All types are frozen dataclasses. Their canonical JSON object form uses the
field names as written here and is the storage and wire schema for the
result log and the results service.
"""

from __future__ import annotations

import hashlib
import json
import math
import re
from dataclasses import asdict, dataclass, field, replace
from datetime import datetime, timezone
from typing import Any, Mapping

from .errors import ValidationError

FAMILIES = ("hpl", "vasp", "gromacs", "builtin_lu")
GFLOPS_FAMILIES = frozenset({"hpl", "builtin_lu"})
METRICS = ("speedup_ratio", "speedup", "performance_per_core", "performance_gain")
DEFAULT_NODE_LIST = (1, 2, 4, 8)

SITE_ID_RE = re.compile(r"[A-Za-z0-9._-]+")
TIMESTAMP_FORMAT = "%Y-%m-%dT%H:%M:%SZ"
_TIMESTAMP_RE = re.compile(r"\d{4}-\d{2}-\d{2}T\d{2}:\d{2}:\d{2}Z")

# Fields hashed into record_id; metadata and passed are deliberately excluded.
IDENTITY_FIELDS = (
    "site_id",
    "family",
    "case_name",
    "nodes",
    "ppn",
    "runtime_seconds",
    "gflops",
    "timestamp_utc",
)


def utc_now() -> str:
    return datetime.now(timezone.utc).strftime(TIMESTAMP_FORMAT)


def _is_int(value: Any) -> bool:
    return isinstance(value, int) and not isinstance(value, bool)


def _is_real(value: Any) -> bool:
    return (isinstance(value, (int, float)) and not isinstance(value, bool)
            and math.isfinite(value))


@dataclass(frozen=True)
class Site:
    id: str
    provider: str = ""
    description: str = ""
    hyperthreading: bool = False
    cpu_model: str = ""
    interconnect: str = ""

    def __post_init__(self) -> None:
        if not isinstance(self.id, str) or not SITE_ID_RE.fullmatch(self.id):
            raise ValidationError("id", f"invalid site id {self.id!r}")

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> Site:
        return cls(
            id=data.get("id", ""),
            provider=str(data.get("provider", "")),
            description=str(data.get("description", "")),
            hyperthreading=bool(data.get("hyperthreading", False)),
            cpu_model=str(data.get("cpu_model", "")),
            interconnect=str(data.get("interconnect", "")),
        )


@dataclass(frozen=True)
class BenchmarkCase:
    family: str
    case_name: str
    template_paths: tuple[str, ...] = ()
    parameters: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.family not in FAMILIES:
            raise ValidationError("family", f"unknown family {self.family!r}")
        if not self.case_name:
            raise ValidationError("case_name", "must be non-empty")
        object.__setattr__(self, "template_paths", tuple(self.template_paths))


@dataclass(frozen=True, order=True)
class RunConfig:
    nodes: int
    ppn: int
    repetition: int = 0

    def __post_init__(self) -> None:
        if not _is_int(self.nodes) or self.nodes < 1:
            raise ValidationError("nodes", "must be a positive integer")
        if not _is_int(self.ppn) or self.ppn < 1:
            raise ValidationError("ppn", "must be a positive integer")
        if not _is_int(self.repetition) or self.repetition < 0:
            raise ValidationError("repetition", "must be a non-negative integer")

    @property
    def total_cores(self) -> int:
        return self.nodes * self.ppn

    def __str__(self) -> str:
        return f"{self.nodes}x{self.ppn}#{self.repetition}"


@dataclass(frozen=True)
class RunRecord:
    """One executed benchmark instance.

    Construction does not validate; use :func:`validate_record`. This keeps
    invalid records representable so that they can be rejected with a reason.
    """

    site_id: str
    family: str
    case_name: str
    nodes: int
    ppn: int
    runtime_seconds: float
    gflops: float | None = None
    passed: bool = True
    timestamp_utc: str = ""
    tool_version: str = ""
    metadata: Mapping[str, str] = field(default_factory=dict)
    record_id: str = ""

    @property
    def total_cores(self) -> int:
        return self.nodes * self.ppn

    def identity(self) -> dict[str, Any]:
        ident = {name: getattr(self, name) for name in IDENTITY_FIELDS}
        # int and float spellings of the same value must hash alike.
        for name in ("runtime_seconds", "gflops"):
            if _is_real(ident[name]):
                ident[name] = float(ident[name])
        return ident

    def with_id(self) -> RunRecord:
        return replace(self, record_id=compute_record_id(self))

    def to_dict(self) -> dict[str, Any]:
        return {
            "record_id": self.record_id,
            "site_id": self.site_id,
            "family": self.family,
            "case_name": self.case_name,
            "nodes": self.nodes,
            "ppn": self.ppn,
            "runtime_seconds": self.runtime_seconds,
            "gflops": self.gflops,
            "passed": self.passed,
            "timestamp_utc": self.timestamp_utc,
            "tool_version": self.tool_version,
            "metadata": dict(self.metadata),
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> RunRecord:
        """Build a record from its JSON object form.

        Missing required keys raise ValidationError naming the key. A missing
        or empty ``record_id`` is derived from the identifying fields.
        """
        if not isinstance(data, Mapping):
            raise ValidationError("record", "expected a JSON object")
        values: dict[str, Any] = {}
        for name in ("site_id", "family", "case_name", "nodes", "ppn", "runtime_seconds"):
            if name not in data:
                raise ValidationError(name, "missing")
            values[name] = data[name]
        values["gflops"] = data.get("gflops")
        values["passed"] = data.get("passed", True)
        values["timestamp_utc"] = data.get("timestamp_utc", "")
        values["tool_version"] = data.get("tool_version", "")
        values["metadata"] = data.get("metadata") or {}
        record = cls(**values, record_id=data.get("record_id") or "")
        if not record.record_id:
            try:
                record = record.with_id()
            except (TypeError, ValueError):
                pass  # unhashable garbage; validate_record will name the field
        return record


@dataclass(frozen=True)
class MetricPoint:
    metric: str
    site_id: str
    family: str
    case_name: str
    nodes: int
    ppn: int
    value: float
    sample_count: int

    def __post_init__(self) -> None:
        if self.metric not in METRICS:
            raise ValidationError("metric", f"unknown metric {self.metric!r}")
        if not _is_real(self.value):
            raise ValidationError("value", "must be finite")
        if not _is_int(self.sample_count) or self.sample_count < 1:
            raise ValidationError("sample_count", "must be a positive integer")

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> MetricPoint:
        return cls(**{name: data[name] for name in cls.__dataclass_fields__})


def canonical_json(obj: Any) -> str:
    """Sorted keys, no whitespace; floats use Python's shortest round-trip repr."""
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False,
                      allow_nan=False)


def compute_record_id(record: RunRecord) -> str:
    return hashlib.sha256(canonical_json(record.identity()).encode("utf-8")).hexdigest()


def validate_record(record: RunRecord) -> RunRecord:
    """Return ``record`` unchanged if every RunRecord invariant holds.

    Raises ValidationError whose ``field`` is the first violated invariant,
    checked in field declaration order with ``record_id`` last.
    """
    if not isinstance(record.site_id, str) or not SITE_ID_RE.fullmatch(record.site_id):
        raise ValidationError("site_id", f"invalid site id {record.site_id!r}")
    if record.family not in FAMILIES:
        raise ValidationError("family", f"unknown family {record.family!r}")
    if not isinstance(record.case_name, str) or not record.case_name:
        raise ValidationError("case_name", "must be a non-empty string")
    if not _is_int(record.nodes) or record.nodes < 1:
        raise ValidationError("nodes", "must be a positive integer")
    if not _is_int(record.ppn) or record.ppn < 1:
        raise ValidationError("ppn", "must be a positive integer")
    if not _is_real(record.runtime_seconds) or record.runtime_seconds <= 0:
        raise ValidationError("runtime_seconds", "must be a positive finite number")
    if record.gflops is None:
        if record.family in GFLOPS_FAMILIES:
            raise ValidationError("gflops", f"required for family {record.family}")
    elif not _is_real(record.gflops) or record.gflops < 0:
        raise ValidationError("gflops", "must be a non-negative finite number")
    if not isinstance(record.passed, bool):
        raise ValidationError("passed", "must be a boolean")
    if not isinstance(record.timestamp_utc, str) or not _TIMESTAMP_RE.fullmatch(record.timestamp_utc):
        raise ValidationError("timestamp_utc", "expected YYYY-MM-DDTHH:MM:SSZ")
    try:
        datetime.strptime(record.timestamp_utc, TIMESTAMP_FORMAT)
    except ValueError:
        raise ValidationError("timestamp_utc", "not a calendar date") from None
    if not isinstance(record.tool_version, str):
        raise ValidationError("tool_version", "must be a string")
    if not isinstance(record.metadata, Mapping) or not all(
        isinstance(k, str) and isinstance(v, str) for k, v in record.metadata.items()
    ):
        raise ValidationError("metadata", "must map strings to strings")
    if record.record_id != compute_record_id(record):
        raise ValidationError("record_id", "does not match identifying fields")
    return record
