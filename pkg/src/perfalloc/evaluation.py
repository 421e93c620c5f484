"""Repeated k-fold evaluation of the parameter-model pipeline.

Each repeat shuffles the workload with a derived seed and partitions it
into k folds; each fold trains the forest on the other k-1 folds (targets
fitted from simulated or observed training curves) and scores the held-out
queries against their observed runtimes. Reported per allocation count:
the relative error E(n) (sum of absolute errors over sum of actual
runtimes), with dispersion across all k x repeats fold evaluations, plus
selection quality (chosen allocation and realized slowdown) per objective.

Fold evaluations are independent; they run in parallel across processes
when ``n_jobs`` allows, with results aggregated in a fixed order so the
report is identical at any parallelism level.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import forest as forest_mod
from .features import WorkloadRecord, build_schema, vectorize
from .forest import TrainingExample
from .ppm import PpmFamily, PricePerfModel
from .selection import SelectionObjective
from .training import DEFAULT_N_GRID, training_curve

__all__ = [
    "CvPlan",
    "ErrorStat",
    "SelectionStat",
    "EvalReport",
    "AblationReport",
    "default_objectives",
    "cross_validate",
    "ablation",
]


@dataclass(frozen=True)
class CvPlan:
    """k folds per repeat (k=5 gives the usual 80:20 split), shuffled anew
    each repeat from a seed derived from ``rng_seed``."""

    k: int = 5
    repeats: int = 10
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if self.k < 2:
            raise ValueError("cross validation needs k >= 2")
        if self.repeats < 1:
            raise ValueError("repeats must be >= 1")


@dataclass(frozen=True)
class ErrorStat:
    n: int
    mean: float
    std: float


@dataclass(frozen=True)
class SelectionStat:
    objective: str
    mean_chosen_n: float
    std_chosen_n: float
    mean_realized_slowdown: float
    std_realized_slowdown: float


@dataclass(frozen=True)
class EvalReport:
    family: PpmFamily
    n_grid: tuple[int, ...]
    fold_count: int
    errors: tuple[ErrorStat, ...]
    selection: tuple[SelectionStat, ...]
    fold_test_ids: tuple[tuple[str, ...], ...]

    def error_at(self, n: int) -> ErrorStat:
        for stat in self.errors:
            if stat.n == n:
                return stat
        raise KeyError(f"no error statistic at n={n}")

    def to_dict(self) -> dict:
        return {
            "family": self.family.value,
            "n_grid": list(self.n_grid),
            "fold_count": self.fold_count,
            "errors": [{"n": e.n, "mean": e.mean, "std": e.std} for e in self.errors],
            "selection": [
                {
                    "objective": s.objective,
                    "mean_chosen_n": s.mean_chosen_n,
                    "std_chosen_n": s.std_chosen_n,
                    "mean_realized_slowdown": s.mean_realized_slowdown,
                    "std_realized_slowdown": s.std_realized_slowdown,
                }
                for s in self.selection
            ],
            "fold_test_ids": [list(ids) for ids in self.fold_test_ids],
        }


def default_objectives(n_range: tuple[int, int]) -> tuple[SelectionObjective, ...]:
    """Slowdown thresholds from 1 to 2 plus the elbow point."""
    objectives = [
        SelectionObjective(kind="limited_slowdown", n_range=n_range, h=h)
        for h in (1.0, 1.05, 1.1, 1.2, 1.5, 2.0)
    ]
    objectives.append(SelectionObjective(kind="elbow", n_range=n_range))
    return tuple(objectives)


# Worker context for fold evaluation, installed once per process by the
# pool initializer so records are not re-pickled for every fold.
_CTX: dict = {}


def _init_worker(ctx: dict) -> None:
    _CTX.update(ctx)


@dataclass(frozen=True)
class _FoldJob:
    index: int
    train_idx: tuple[int, ...]
    test_idx: tuple[int, ...]
    forest_seed: int


@dataclass(frozen=True)
class _FoldOutcome:
    index: int
    errors: tuple[float, ...]  # E(n) per grid point
    chosen: tuple[float, ...]  # mean chosen n per objective
    slowdowns: tuple[float, ...]  # mean realized slowdown per objective
    test_ids: tuple[str, ...]


def _realized_slowdown(actual, chosen: int, n_range: tuple[int, int]) -> float:
    ns = np.arange(n_range[0], n_range[1] + 1, dtype=float)
    t_min = float(np.min(actual.evaluate(ns)))
    return actual.evaluate(chosen) / t_min


def _run_fold(job: _FoldJob) -> _FoldOutcome:
    records: list[WorkloadRecord] = _CTX["records"]
    targets: dict[str, np.ndarray] = _CTX["targets"]
    family: PpmFamily = _CTX["family"]
    n_grid: tuple[int, ...] = _CTX["n_grid"]
    objectives: tuple[SelectionObjective, ...] = _CTX["objectives"]
    n_estimators: int = _CTX["n_estimators"]
    feature_subset: Optional[tuple[str, ...]] = _CTX["feature_subset"]

    train_records = [records[i] for i in job.train_idx]
    test_records = [records[i] for i in job.test_idx]
    assert not {r.query_id for r in train_records} & {r.query_id for r in test_records}

    schema = tuple(feature_subset) if feature_subset else build_schema(train_records)
    examples = [
        TrainingExample(
            query_id=rec.query_id,
            x=vectorize(rec.features, schema, warn_unknown=False),
            y=targets[rec.query_id],
        )
        for rec in train_records
    ]
    model = forest_mod.train(examples, n_estimators=n_estimators, rng_seed=job.forest_seed, family=family)

    predicted: list[PricePerfModel] = []
    for rec in test_records:
        x = vectorize(rec.features, schema, warn_unknown=False)
        predicted.append(family.decode(model.predict(x)))

    errors = []
    for n in n_grid:
        abs_err = sum(
            abs(ppm.evaluate(n) - rec.observed_curve.evaluate(n))
            for ppm, rec in zip(predicted, test_records)
        )
        total = sum(rec.observed_curve.evaluate(n) for rec in test_records)
        errors.append(abs_err / total)

    chosen_means = []
    slowdown_means = []
    for objective in objectives:
        chosen = [objective.select(ppm) for ppm in predicted]
        slowdowns = [
            _realized_slowdown(rec.observed_curve, c, objective.n_range)
            for rec, c in zip(test_records, chosen)
        ]
        chosen_means.append(float(np.mean(chosen)))
        slowdown_means.append(float(np.mean(slowdowns)))

    return _FoldOutcome(
        index=job.index,
        errors=tuple(errors),
        chosen=tuple(chosen_means),
        slowdowns=tuple(slowdown_means),
        test_ids=tuple(r.query_id for r in test_records),
    )


def _fold_jobs(n_records: int, plan: CvPlan) -> list[_FoldJob]:
    """Deterministic fold partitions: each repeat shuffles with its own
    derived seed and slices into k near-equal folds covering every record
    exactly once."""
    seeds = np.random.SeedSequence(plan.rng_seed).spawn(plan.repeats)
    jobs = []
    index = 0
    for repeat in range(plan.repeats):
        rng = np.random.default_rng(seeds[repeat])
        order = rng.permutation(n_records)
        fold_sizes = [n_records // plan.k + (1 if i < n_records % plan.k else 0) for i in range(plan.k)]
        start = 0
        for size in fold_sizes:
            test_idx = tuple(int(i) for i in order[start : start + size])
            train_idx = tuple(int(i) for i in np.concatenate([order[:start], order[start + size :]]))
            jobs.append(
                _FoldJob(
                    index=index,
                    train_idx=train_idx,
                    test_idx=test_idx,
                    forest_seed=int(rng.integers(0, 2**31 - 1)),
                )
            )
            index += 1
            start += size
    return jobs


def cross_validate(
    records: Sequence[WorkloadRecord],
    family: PpmFamily,
    plan: CvPlan = CvPlan(),
    n_grid: Sequence[int] = DEFAULT_N_GRID,
    objectives: Optional[Sequence[SelectionObjective]] = None,
    n_estimators: int = 100,
    e_c: Optional[int] = None,
    feature_subset: Optional[Sequence[str]] = None,
    n_jobs: Optional[int] = None,
) -> EvalReport:
    """Repeated k-fold evaluation of one model family.

    Every record needs an observed curve (the test ground truth) and a
    profile or curve to train from. Held-out queries never contribute to
    training: their curves, profiles, and even operator vocabulary stay
    outside the fold's schema.
    """
    records = list(records)
    if len(records) < plan.k:
        raise ValueError(f"workload of {len(records)} records cannot be split into {plan.k} folds")
    for rec in records:
        if rec.observed_curve is None:
            raise ValueError(f"query {rec.query_id!r} has no observed curve to test against")
        if not rec.trainable:
            raise ValueError(f"query {rec.query_id!r} has nothing to train from")

    n_grid = tuple(int(n) for n in n_grid)
    if objectives is None:
        objectives = default_objectives((min(n_grid), max(n_grid)))
    objectives = tuple(objectives)

    # Curve fitting per record is independent of the fold split, so the
    # targets are computed once up front; only schemas are fold-local.
    targets = {
        rec.query_id: family.encode(family.fit(training_curve(rec, n_grid, e_c)).model)
        for rec in records
    }

    ctx = {
        "records": records,
        "targets": targets,
        "family": family,
        "n_grid": n_grid,
        "objectives": objectives,
        "n_estimators": n_estimators,
        "feature_subset": tuple(sorted(feature_subset)) if feature_subset else None,
    }
    jobs = _fold_jobs(len(records), plan)

    if n_jobs is None:
        n_jobs = min(len(jobs), os.cpu_count() or 1)
    if n_jobs > 1:
        with ProcessPoolExecutor(max_workers=n_jobs, initializer=_init_worker, initargs=(ctx,)) as pool:
            outcomes = list(pool.map(_run_fold, jobs))
    else:
        _init_worker(ctx)
        try:
            outcomes = [_run_fold(job) for job in jobs]
        finally:
            _CTX.clear()
    outcomes.sort(key=lambda o: o.index)

    err_matrix = np.array([o.errors for o in outcomes])
    chosen_matrix = np.array([o.chosen for o in outcomes])
    slowdown_matrix = np.array([o.slowdowns for o in outcomes])

    errors = tuple(
        ErrorStat(n=n, mean=float(err_matrix[:, i].mean()), std=float(err_matrix[:, i].std(ddof=1)))
        for i, n in enumerate(n_grid)
    )
    selection = tuple(
        SelectionStat(
            objective=obj.label,
            mean_chosen_n=float(chosen_matrix[:, i].mean()),
            std_chosen_n=float(chosen_matrix[:, i].std(ddof=1)),
            mean_realized_slowdown=float(slowdown_matrix[:, i].mean()),
            std_realized_slowdown=float(slowdown_matrix[:, i].std(ddof=1)),
        )
        for i, obj in enumerate(objectives)
    )
    return EvalReport(
        family=family,
        n_grid=n_grid,
        fold_count=len(outcomes),
        errors=errors,
        selection=selection,
        fold_test_ids=tuple(o.test_ids for o in outcomes),
    )


@dataclass(frozen=True)
class AblationReport:
    """Cross-validation errors for the full schema and reduced subsets."""

    full: EvalReport
    subsets: dict[str, EvalReport]

    def deltas(self, n: int) -> dict[str, float]:
        """Mean E(n) increase of each subset over the full feature set."""
        base = self.full.error_at(n).mean
        return {name: report.error_at(n).mean - base for name, report in self.subsets.items()}


def ablation(
    records: Sequence[WorkloadRecord],
    feature_subsets: dict[str, Sequence[str]],
    plan: CvPlan = CvPlan(),
    n_grid: Sequence[int] = DEFAULT_N_GRID,
    family: PpmFamily = PpmFamily.POWER_LAW,
    **kwargs,
) -> AblationReport:
    """Re-run cross-validation with the model restricted to each named
    feature subset, reporting errors against the full set."""
    full_schema = set(build_schema(records))
    for name, subset in feature_subsets.items():
        if not subset:
            raise ValueError(f"feature subset {name!r} is empty")
        unknown = set(subset) - full_schema
        if unknown:
            raise ValueError(f"feature subset {name!r} contains unknown features {sorted(unknown)}")

    full = cross_validate(records, family, plan, n_grid, **kwargs)
    subsets = {
        name: cross_validate(records, family, plan, n_grid, feature_subset=subset, **kwargs)
        for name, subset in feature_subsets.items()
    }
    return AblationReport(full=full, subsets=subsets)
