"""Scaling metrics and per-configuration averaging.

Records are grouped by (site, family, case, nodes, ppn). Every point is the
arithmetic mean over the records of its group. Gain and speedup ratio are
formed from group means: mean gflops at n nodes over mean gflops at one
node with the same site, family, case and ppn.
"""

from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, NamedTuple

from .domain import METRICS, MetricPoint, RunRecord
from .errors import MissingBaseline, NonPositiveRuntime

GFLOPS_METRICS = frozenset({"speedup_ratio", "performance_gain", "performance_per_core"})
BASELINE_METRICS = frozenset({"speedup_ratio", "performance_gain"})


class GroupKey(NamedTuple):
    site_id: str
    family: str
    case_name: str
    nodes: int
    ppn: int

    @classmethod
    def of(cls, record: RunRecord) -> GroupKey:
        return cls(record.site_id, record.family, record.case_name, record.nodes, record.ppn)

    def baseline(self) -> GroupKey:
        return self._replace(nodes=1)


def performance_gain(perf_n: float, perf_1: float | None) -> float:
    if perf_1 is None or not perf_1 > 0:
        raise MissingBaseline(f"single-node performance must be positive, got {perf_1!r}")
    if perf_n < 0:
        raise ValueError(f"performance must be non-negative, got {perf_n!r}")
    return perf_n / perf_1


def speedup_ratio(gain: float, nodes: int) -> float:
    """Gain relative to ideal linear scaling in node count."""
    if nodes < 1:
        raise ValueError("nodes must be >= 1")
    if gain < 0:
        raise ValueError("gain must be non-negative")
    return gain / nodes


def speedup(runtime_seconds: float) -> float:
    if not runtime_seconds > 0:
        raise NonPositiveRuntime(f"runtime must be positive, got {runtime_seconds!r}")
    return 1.0 / runtime_seconds


def performance_per_core(gflops: float, total_cores: int) -> float:
    if total_cores < 1:
        raise ValueError("total_cores must be >= 1")
    if gflops < 0:
        raise ValueError("gflops must be non-negative")
    return gflops / total_cores


def mean(values: Iterable[float]) -> float:
    # fsum is correctly rounded, so the mean does not depend on input order.
    values = list(values)
    return math.fsum(values) / len(values)


@dataclass
class Aggregation:
    points: list[MetricPoint]
    warnings: list[str]


def aggregate(records: Iterable[RunRecord], metric: str) -> Aggregation:
    """Average ``metric`` per GroupKey.

    Groups that cannot be computed (no one-node baseline, no gflops) are
    skipped and named in ``warnings``. Points are sorted by site, case,
    nodes, then ppn and family for a total order.
    """
    if metric not in METRICS:
        raise ValueError(f"unknown metric {metric!r}; expected one of {METRICS}")
    groups: dict[GroupKey, list[RunRecord]] = defaultdict(list)
    for record in records:
        groups[GroupKey.of(record)].append(record)

    warnings: list[str] = []
    points: list[MetricPoint] = []
    for key in sorted(groups, key=_point_order):
        members = groups[key]
        if metric in GFLOPS_METRICS and any(r.gflops is None for r in members):
            warnings.append(f"{_label(key)}: records without gflops, skipped")
            continue
        if metric == "speedup":
            value = mean(speedup(r.runtime_seconds) for r in members)
        elif metric == "performance_per_core":
            value = mean(performance_per_core(r.gflops, r.total_cores) for r in members)
        else:
            base_members = groups.get(key.baseline())
            if not base_members or any(r.gflops is None for r in base_members):
                warnings.append(f"{_label(key)}: missing baseline at nodes=1, skipped")
                continue
            try:
                gain = performance_gain(mean(r.gflops for r in members),
                                        mean(r.gflops for r in base_members))
            except MissingBaseline as exc:
                warnings.append(f"{_label(key)}: {exc}, skipped")
                continue
            value = gain if metric == "performance_gain" else speedup_ratio(gain, key.nodes)
        points.append(MetricPoint(metric=metric, site_id=key.site_id, family=key.family,
                                  case_name=key.case_name, nodes=key.nodes, ppn=key.ppn,
                                  value=value, sample_count=len(members)))
    return Aggregation(points, warnings)


def _point_order(key: GroupKey) -> tuple:
    return (key.site_id, key.case_name, key.nodes, key.ppn, key.family)


def _label(key: GroupKey) -> str:
    return f"{key.site_id}/{key.family}/{key.case_name} nodes={key.nodes} ppn={key.ppn}"
