"""Synthetic workload generation.

Stands in for real query telemetry: each generated query gets a random but
internally consistent plan feature vector, a per-stage task profile whose
total work, stage structure, and skew are driven by those features, and an
observed runtime curve derived from the profile with configurable
multiplicative noise. Runtime characteristics are therefore a learnable
function of the features, which is what the parameter-model pipeline needs
to demonstrate end to end.
"""

from __future__ import annotations

import math
from typing import Optional, Sequence

import numpy as np

from .features import QueryFeatures, WorkloadRecord
from .ppm import AllocationCurve, ResourceKind
from .schedsim import QueryProfile, StageProfile, estimate_curve
from .training import DEFAULT_N_GRID

__all__ = ["OPERATOR_VOCABULARY", "generate_query", "generate_workload"]

# Operator inventory of the synthetic plans; mirrors the handful of
# physical operators a SQL-on-cluster engine emits.
OPERATOR_VOCABULARY = (
    "Aggregate",
    "BroadcastExchange",
    "Exchange",
    "Expand",
    "Filter",
    "Generate",
    "HashJoin",
    "Limit",
    "Project",
    "Scan",
    "Sort",
    "SortMergeJoin",
    "Union",
    "Window",
)


def _draw_features(rng: np.random.Generator) -> QueryFeatures:
    sources = int(rng.integers(1, 6))
    total_bytes = int(10 ** rng.uniform(8.8, 11.3))
    row_width = 10 ** rng.uniform(1.7, 2.7)
    rows = max(1, int(total_bytes / row_width))

    joins = int(rng.integers(0, sources + 2))
    hash_joins = int(rng.integers(0, joins + 1))
    counts = {
        "Scan": sources,
        "HashJoin": hash_joins,
        "SortMergeJoin": joins - hash_joins,
        "Filter": 1 + int(rng.poisson(2.0)),
        "Project": 2 + int(rng.poisson(3.0)),
        "Aggregate": int(rng.poisson(1.2)),
        "Exchange": joins + int(rng.poisson(1.0)),
        "Sort": int(rng.poisson(0.7)),
        "Union": int(rng.poisson(0.3)),
        "Window": int(rng.poisson(0.2)),
        "Limit": int(rng.integers(0, 2)),
        "Expand": int(rng.poisson(0.15)),
        "Generate": int(rng.poisson(0.1)),
        "BroadcastExchange": int(rng.poisson(0.4)),
    }
    counts = {op: c for op, c in counts.items() if c > 0}
    total_ops = sum(counts.values())
    depth = min(total_ops, 2 + joins + counts.get("Aggregate", 0) + int(rng.poisson(1.0)))
    return QueryFeatures(
        operator_counts=counts,
        total_operators=total_ops,
        max_depth=depth,
        num_input_sources=sources,
        total_input_bytes=total_bytes,
        total_rows_processed=rows,
    )


def _profile_from_features(
    features: QueryFeatures, rng: np.random.Generator, query_id: str
) -> QueryProfile:
    """Task profile whose shape is (almost) a function of the plan features.

    Total work grows with input size and plan complexity, the stage count
    follows plan depth, barrier stages follow shuffle-like operators, and
    task counts follow input size. Randomness only jitters the work split
    and shapes individual task durations, so a model trained on features
    can actually learn the runtime behavior; the dominant noise source is
    meant to be the explicit noise on the observed curves.
    """
    counts = features.operator_counts
    joins = counts.get("HashJoin", 0) + counts.get("SortMergeJoin", 0)
    aggregates = counts.get("Aggregate", 0)
    barrier_ops = counts.get("Exchange", 0) + counts.get("Sort", 0) + aggregates
    ops = features.total_operators
    gb = features.total_input_bytes / 1e9
    total_work = 300.0 * gb**0.75 * (1.0 + 0.12 * joins)
    driver = 1.5 + 0.07 * ops

    n_stages = int(np.clip(2 + features.max_depth // 3 + joins // 2, 2, 8))
    n_barriers = min(n_stages - 1, barrier_ops // 3)
    # barriers spread over the later stages; stage 0 is always wide
    small_ids = {n_stages - 1 - j * 2 for j in range(n_barriers)} - {0}
    wide_ids = [i for i in range(n_stages) if i not in small_ids]

    small_frac = 0.05 + 0.015 * min(len(small_ids), 4) if small_ids else 0.0
    small_tasks = 2 + ops % 5
    works = np.zeros(n_stages)
    if small_ids:
        small_weights = 1.0 + 0.08 * rng.uniform(-1.0, 1.0, len(small_ids))
        small_works = total_work * small_frac * small_weights / small_weights.sum()
        # barriers are short synchronization points: cap their work so a
        # barrier's critical task stays well under any idle-release timeout
        small_works = np.minimum(small_works, 15.0 * small_tasks)
        works[sorted(small_ids)] = small_works
    wide_total = total_work - works.sum()
    wide_weights = (1.0 + np.arange(len(wide_ids))) ** -0.6
    wide_weights *= 1.0 + 0.08 * rng.uniform(-1.0, 1.0, len(wide_ids))
    works[wide_ids] = wide_total * wide_weights / wide_weights.sum()

    wide_tasks = int(np.clip(300 * (1.0 + gb) ** 0.4, 300, 1500))
    sigma_wide = 0.22 + 0.05 * (features.max_depth % 4)
    stages = []
    for i in range(n_stages):
        if i in small_ids:
            n_tasks, sigma = small_tasks, 0.15
        else:
            n_tasks, sigma = wide_tasks, sigma_wide
        raw = rng.lognormal(mean=0.0, sigma=sigma, size=n_tasks)
        durations = raw * (works[i] / raw.sum())
        stages.append(
            StageProfile(
                stage_id=f"s{i}",
                task_durations=tuple(float(d) for d in durations),
                depends_on=(f"s{i - 1}",) if i > 0 else (),
            )
        )
    return QueryProfile(
        query_id=query_id,
        driver_time=driver,
        stages=tuple(stages),
        profiled_at=(16, 1),
    )


def generate_query(
    rng: np.random.Generator,
    query_id: str,
    n_grid: Sequence[int] = DEFAULT_N_GRID,
    noise: float = 0.05,
) -> WorkloadRecord:
    """One synthetic record: features, profile, and a noisy observed curve.

    The noiseless curve is the scheduler estimate of the profile, so it is
    monotone non-increasing; ``noise`` applies independent multiplicative
    log-normal jitter per grid point.
    """
    features = _draw_features(rng)
    profile = _profile_from_features(features, rng, query_id)
    clean = estimate_curve(profile, n_grid, e_c=1)
    if noise > 0:
        factors = np.exp(noise * rng.standard_normal(len(clean.points)))
        points = tuple((n, t * f) for (n, t), f in zip(clean.points, factors))
        observed = AllocationCurve(points, ResourceKind.EXECUTORS)
    else:
        observed = clean
    return WorkloadRecord(
        query_id=query_id,
        features=features,
        observed_curve=observed,
        profile=profile,
    )


def generate_workload(
    count: int,
    seed: int = 0,
    n_grid: Sequence[int] = DEFAULT_N_GRID,
    noise: float = 0.05,
) -> list[WorkloadRecord]:
    """Deterministic synthetic workload of ``count`` queries."""
    if count < 1:
        raise ValueError("count must be >= 1")
    children = np.random.SeedSequence(seed).spawn(count)
    width = max(3, len(str(count)))
    return [
        generate_query(np.random.default_rng(children[i]), f"q{i:0{width}d}", n_grid, noise)
        for i in range(count)
    ]
