"""Query feature vectors and workload file ingestion.

A workload file is JSON lines, one object per query::

    {"query_id": "q1",
     "features": {"operator_counts": {"Project": 3, "Filter": 2},
                  "total_operators": 5, "max_depth": 3,
                  "num_input_sources": 1,
                  "total_input_bytes": 1073741824,
                  "total_rows_processed": 5000000},
     "curve": [[1, 100.0], [3, 46.0], [8, 23.0]],
     "profile": {"driver_time": 2.0, "profiled_at": [16, 1],
                 "stages": [{"id": "s0", "tasks": [1.5, 2.0], "depends_on": []}]}}

``curve`` and ``profile`` are optional; a record used for training must
carry at least one of them. Curve entries accept either a single runtime
or a list of repeated measurements, which are averaged after discarding
outliers beyond 1.5x the inter-quartile range.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence, Union

import numpy as np

from .errors import SchemaMismatchError, WorkloadError
from .ppm import AllocationCurve
from .schedsim import QueryProfile, StageProfile

__all__ = [
    "SCALAR_FEATURES",
    "OPERATOR_PREFIX",
    "QueryFeatures",
    "WorkloadRecord",
    "FeatureVector",
    "aggregate_timings",
    "load_workload",
    "save_workload",
    "build_schema",
    "vectorize",
]

SCALAR_FEATURES = (
    "total_operators",
    "max_depth",
    "num_input_sources",
    "total_input_bytes",
    "total_rows_processed",
)

# Operator-count features are namespaced so a weird operator name can never
# collide with a scalar feature.
OPERATOR_PREFIX = "op:"


@dataclass(frozen=True)
class QueryFeatures:
    """Compile-time plan and input-size characteristics of one query.

    Only features known before execution are allowed here; runtime
    statistics would not be available when the model is scored.
    """

    operator_counts: Mapping[str, int]
    total_operators: int
    max_depth: int
    num_input_sources: int
    total_input_bytes: int
    total_rows_processed: int

    def __post_init__(self) -> None:
        counts = dict(self.operator_counts)
        for name, count in counts.items():
            if not isinstance(name, str) or not name:
                raise ValueError(f"operator names must be non-empty strings, got {name!r}")
            if count < 0:
                raise ValueError(f"operator count for {name!r} must be >= 0")
        for attr in SCALAR_FEATURES:
            if getattr(self, attr) < 0:
                raise ValueError(f"{attr} must be >= 0")
        if self.total_operators != sum(counts.values()):
            raise ValueError(
                f"total_operators={self.total_operators} does not equal the sum "
                f"of operator counts ({sum(counts.values())})"
            )
        if self.max_depth > self.total_operators:
            raise ValueError("max_depth cannot exceed total_operators")
        object.__setattr__(self, "operator_counts", counts)

    def scalar(self, name: str) -> float:
        return float(getattr(self, name))


@dataclass
class WorkloadRecord:
    """One workload row: features plus optional ground truth.

    ``observed_curve`` holds actual runtimes; ``profile`` holds per-stage
    task timings from a single profiled run, usable by the scheduler
    estimator. Training needs at least one of the two.
    """

    query_id: str
    features: QueryFeatures
    observed_curve: Optional[AllocationCurve] = None
    profile: Optional[QueryProfile] = None

    @property
    def trainable(self) -> bool:
        return self.observed_curve is not None or self.profile is not None


@dataclass(frozen=True)
class FeatureVector:
    """Dense encoding of :class:`QueryFeatures` under a fixed schema."""

    values: tuple[float, ...]
    schema: tuple[str, ...]

    def __post_init__(self) -> None:
        if len(self.values) != len(self.schema):
            raise SchemaMismatchError(
                f"vector has {len(self.values)} values for {len(self.schema)} schema entries"
            )

    def as_array(self) -> np.ndarray:
        return np.asarray(self.values, dtype=float)


def aggregate_timings(values: Sequence[float]) -> float:
    """Average repeated timings, discarding outliers beyond 1.5x IQR."""
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        raise ValueError("no timings to aggregate")
    if arr.size < 4:
        return float(arr.mean())
    q1, q3 = np.percentile(arr, [25, 75])
    iqr = q3 - q1
    keep = arr[(arr >= q1 - 1.5 * iqr) & (arr <= q3 + 1.5 * iqr)]
    if keep.size == 0:  # pathological spread, fall back to plain mean
        keep = arr
    return float(keep.mean())


_RECORD_KEYS = {"query_id", "features", "curve", "profile"}
_FEATURE_KEYS = {"operator_counts", *SCALAR_FEATURES}
_PROFILE_KEYS = {"driver_time", "profiled_at", "stages"}
_STAGE_KEYS = {"id", "tasks", "depends_on"}


def _parse_features(obj: dict, line: int) -> QueryFeatures:
    unknown = set(obj) - _FEATURE_KEYS
    if unknown:
        raise WorkloadError(f"unknown feature keys {sorted(unknown)}", line)
    missing = _FEATURE_KEYS - set(obj)
    if missing:
        raise WorkloadError(f"missing feature keys {sorted(missing)}", line)
    try:
        return QueryFeatures(
            operator_counts={str(k): int(v) for k, v in obj["operator_counts"].items()},
            total_operators=int(obj["total_operators"]),
            max_depth=int(obj["max_depth"]),
            num_input_sources=int(obj["num_input_sources"]),
            total_input_bytes=int(obj["total_input_bytes"]),
            total_rows_processed=int(obj["total_rows_processed"]),
        )
    except (ValueError, TypeError, AttributeError) as exc:
        raise WorkloadError(f"invalid features: {exc}", line) from exc


def _parse_curve(entries, line: int) -> AllocationCurve:
    points = []
    for entry in entries:
        try:
            n, t = entry
        except (TypeError, ValueError) as exc:
            raise WorkloadError(f"curve entries must be [n, seconds] pairs: {entry!r}", line) from exc
        seconds = aggregate_timings(t) if isinstance(t, (list, tuple)) else float(t)
        points.append((int(n), seconds))
    try:
        return AllocationCurve(tuple(points))
    except ValueError as exc:
        raise WorkloadError(f"invalid curve: {exc}", line) from exc


def _parse_profile(obj: dict, query_id: str, line: int) -> QueryProfile:
    unknown = set(obj) - _PROFILE_KEYS
    if unknown:
        raise WorkloadError(f"unknown profile keys {sorted(unknown)}", line)
    stages = []
    for stage in obj.get("stages", []):
        bad = set(stage) - _STAGE_KEYS
        if bad:
            raise WorkloadError(f"unknown stage keys {sorted(bad)}", line)
        stages.append(
            StageProfile(
                stage_id=str(stage["id"]),
                task_durations=tuple(float(t) for t in stage["tasks"]),
                depends_on=tuple(str(d) for d in stage.get("depends_on", ())),
            )
        )
    profiled_at = tuple(obj.get("profiled_at", (16, 4)))
    try:
        return QueryProfile(
            query_id=query_id,
            driver_time=float(obj.get("driver_time", 0.0)),
            stages=tuple(stages),
            profiled_at=(int(profiled_at[0]), int(profiled_at[1])),
        )
    except ValueError as exc:
        raise WorkloadError(f"invalid profile: {exc}", line) from exc


def load_workload(path: Union[str, Path]) -> list[WorkloadRecord]:
    """Parse and validate a JSON-lines workload file.

    Raises :class:`WorkloadError` naming the offending line for malformed
    records, unknown keys, invariant violations, and duplicate query ids.
    """
    records: list[WorkloadRecord] = []
    seen: set[str] = set()
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, raw in enumerate(fh, start=1):
            raw = raw.strip()
            if not raw:
                continue
            try:
                obj = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise WorkloadError(f"invalid JSON: {exc}", line_no) from exc
            if not isinstance(obj, dict):
                raise WorkloadError("record must be a JSON object", line_no)
            unknown = set(obj) - _RECORD_KEYS
            if unknown:
                raise WorkloadError(f"unknown keys {sorted(unknown)}", line_no)
            if "query_id" not in obj or "features" not in obj:
                raise WorkloadError("record needs query_id and features", line_no)
            query_id = str(obj["query_id"])
            if query_id in seen:
                raise WorkloadError(f"duplicate query_id {query_id!r}", line_no)
            seen.add(query_id)

            record = WorkloadRecord(
                query_id=query_id,
                features=_parse_features(obj["features"], line_no),
                observed_curve=_parse_curve(obj["curve"], line_no) if obj.get("curve") else None,
                profile=_parse_profile(obj["profile"], query_id, line_no) if obj.get("profile") else None,
            )
            records.append(record)
    return records


def save_workload(records: Iterable[WorkloadRecord], path: Union[str, Path]) -> None:
    """Write records in the JSON-lines format accepted by :func:`load_workload`."""
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            obj: dict = {
                "query_id": rec.query_id,
                "features": {
                    "operator_counts": dict(sorted(rec.features.operator_counts.items())),
                    **{name: getattr(rec.features, name) for name in SCALAR_FEATURES},
                },
            }
            if rec.observed_curve is not None:
                obj["curve"] = [[n, t] for n, t in rec.observed_curve.points]
            if rec.profile is not None:
                obj["profile"] = {
                    "driver_time": rec.profile.driver_time,
                    "profiled_at": list(rec.profile.profiled_at),
                    "stages": [
                        {
                            "id": st.stage_id,
                            "tasks": list(st.task_durations),
                            "depends_on": list(st.depends_on),
                        }
                        for st in rec.profile.stages
                    ],
                }
            fh.write(json.dumps(obj, sort_keys=True) + "\n")


def build_schema(records: Iterable[WorkloadRecord]) -> tuple[str, ...]:
    """Feature schema for a training set: every operator name seen plus the
    scalar features, sorted by name for stability under shuffling."""
    names = {OPERATOR_PREFIX + op for rec in records for op in rec.features.operator_counts}
    names.update(SCALAR_FEATURES)
    return tuple(sorted(names))


def vectorize(features: QueryFeatures, schema: Sequence[str], warn_unknown: bool = True) -> FeatureVector:
    """Encode features as a dense vector under ``schema``.

    Operators absent from the query encode as 0. Operators present in the
    query but missing from the schema are dropped with a warning; they were
    never seen in training, so the model has no use for them. Pass
    ``warn_unknown=False`` when dropping is intentional (feature ablation).
    """
    schema = tuple(schema)
    known = set(schema)
    if warn_unknown:
        dropped = [
            op for op in features.operator_counts
            if OPERATOR_PREFIX + op not in known and features.operator_counts[op] > 0
        ]
        if dropped:
            warnings.warn(
                f"operators {sorted(dropped)} are not in the model schema and were dropped",
                stacklevel=2,
            )
    values = []
    for name in schema:
        if name.startswith(OPERATOR_PREFIX):
            values.append(float(features.operator_counts.get(name[len(OPERATOR_PREFIX):], 0)))
        elif name in SCALAR_FEATURES:
            values.append(features.scalar(name))
        else:
            raise SchemaMismatchError(f"unknown schema entry {name!r}")
    return FeatureVector(values=tuple(values), schema=schema)
