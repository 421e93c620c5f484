"""Scheduler-style runtime estimation from a single profiled run.

Given the per-stage task durations recorded in one execution of a query,
:func:`estimate_runtime` estimates the runtime at any other allocation by
combining the classic makespan lower bound per stage (the critical task
versus the remaining work spread over the available slots) with a serial
composition of stages. The estimate depends on the allocation only through
``slots = n * e_c``, and is monotonically non-increasing in it by
construction. The resulting curves are what the parameter model trains on
when actual multi-configuration runs are unavailable.
"""

from __future__ import annotations

from dataclasses import dataclass
from graphlib import CycleError, TopologicalSorter
from typing import Sequence

import numpy as np

from .ppm import AllocationCurve, ResourceKind

__all__ = [
    "StageProfile",
    "QueryProfile",
    "estimate_runtime",
    "estimate_curve",
    "synthetic_profile",
]


@dataclass(frozen=True)
class StageProfile:
    """Task timings of one stage from a profiled run."""

    stage_id: str
    task_durations: tuple[float, ...]
    depends_on: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if not self.task_durations:
            raise ValueError(f"stage {self.stage_id!r} has no tasks")
        if any(t <= 0 for t in self.task_durations):
            raise ValueError(f"stage {self.stage_id!r} has non-positive task durations")

    @property
    def total_work(self) -> float:
        """Total task-seconds in the stage."""
        return float(sum(self.task_durations))

    @property
    def critical_time(self) -> float:
        """Longest single task; no allocation can beat it."""
        return float(max(self.task_durations))


@dataclass(frozen=True)
class QueryProfile:
    """All stages of one profiled query run.

    ``profiled_at`` records the ``(n, e_c)`` configuration the profile was
    captured with; replays may use any other allocation.
    """

    query_id: str
    driver_time: float
    stages: tuple[StageProfile, ...]
    profiled_at: tuple[int, int] = (16, 4)

    def __post_init__(self) -> None:
        if self.driver_time < 0:
            raise ValueError("driver_time must be >= 0")
        ids = [s.stage_id for s in self.stages]
        if len(set(ids)) != len(ids):
            raise ValueError(f"duplicate stage ids in profile {self.query_id!r}")
        known = set(ids)
        graph = {}
        for stage in self.stages:
            missing = set(stage.depends_on) - known
            if missing:
                raise ValueError(f"stage {stage.stage_id!r} depends on unknown stages {sorted(missing)}")
            graph[stage.stage_id] = set(stage.depends_on)
        try:
            TopologicalSorter(graph).prepare()
        except CycleError as exc:
            raise ValueError(f"stage dependencies of {self.query_id!r} contain a cycle") from exc

    @property
    def total_work(self) -> float:
        return float(sum(s.total_work for s in self.stages))

    @property
    def floor_runtime(self) -> float:
        """Runtime with unbounded slots: driver plus every critical task."""
        return self.driver_time + sum(s.critical_time for s in self.stages)


def estimate_runtime(profile: QueryProfile, n: int, e_c: int = 1) -> float:
    """Estimated runtime with ``n`` executors of ``e_c`` cores each.

    Each stage takes ``max(critical task, work / slots)`` and stages are
    composed serially; overlapping independent stages is deliberately not
    modeled, which keeps the estimate conservative and monotone.
    """
    if n < 1 or e_c < 1:
        raise ValueError("n and e_c must be >= 1")
    slots = n * e_c
    total = profile.driver_time
    for stage in profile.stages:
        total += max(stage.critical_time, stage.total_work / slots)
    return total


def estimate_curve(profile: QueryProfile, n_grid: Sequence[int], e_c: int = 1) -> AllocationCurve:
    """Estimated runtimes across ``n_grid`` executor counts."""
    if len(n_grid) == 0:
        raise ValueError("n_grid must be non-empty")
    points = tuple((int(n), estimate_runtime(profile, int(n), e_c)) for n in n_grid)
    return AllocationCurve(points, ResourceKind.EXECUTORS)


def synthetic_profile(
    rng: np.random.Generator,
    query_id: str = "synthetic",
    stage_works: Sequence[float] = (100.0,),
    tasks_per_stage: Sequence[int] = (20,),
    driver_time: float = 2.0,
    sigma: float = 0.5,
    profiled_at: tuple[int, int] = (16, 1),
) -> QueryProfile:
    """Random profile with log-normal task durations.

    ``stage_works`` fixes each stage's total task-seconds exactly (the
    random draws are rescaled to sum to it), ``sigma`` controls duration
    skew and therefore how early the stage saturates.
    """
    if len(stage_works) != len(tasks_per_stage):
        raise ValueError("stage_works and tasks_per_stage must have the same length")
    stages = []
    for i, (work, n_tasks) in enumerate(zip(stage_works, tasks_per_stage)):
        if work <= 0 or n_tasks < 1:
            raise ValueError("stage work must be positive and task count >= 1")
        raw = rng.lognormal(mean=0.0, sigma=sigma, size=n_tasks)
        durations = raw * (work / raw.sum())
        stages.append(
            StageProfile(
                stage_id=f"s{i}",
                task_durations=tuple(float(d) for d in durations),
                depends_on=(f"s{i - 1}",) if i > 0 else (),
            )
        )
    return QueryProfile(
        query_id=query_id,
        driver_time=driver_time,
        stages=tuple(stages),
        profiled_at=profiled_at,
    )
