"""Building parameter-model training data from workload records.

Each query contributes exactly one training example per model family: its
allocation/runtime curve (simulated from a profiled run, or observed) is
fitted by both model families and the fitted parameters become the
regression targets.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

from .features import WorkloadRecord, build_schema, vectorize
from .forest import TrainingExample
from .ppm import AllocationCurve, PpmFamily
from .schedsim import estimate_curve

__all__ = ["DEFAULT_N_GRID", "AugmentedData", "training_curve", "augment_training_data"]

# Default executor grid for simulated training curves; matches the grid the
# observed runtimes are gathered on.
DEFAULT_N_GRID = (1, 3, 8, 16, 32, 48)


@dataclass(frozen=True)
class AugmentedData:
    """Training examples per model family, under one feature schema."""

    schema: tuple[str, ...]
    examples: dict[PpmFamily, list[TrainingExample]]

    def for_family(self, family: PpmFamily) -> list[TrainingExample]:
        return self.examples[family]


def training_curve(
    record: WorkloadRecord,
    n_grid: Sequence[int] = DEFAULT_N_GRID,
    e_c: Optional[int] = None,
) -> Optional[AllocationCurve]:
    """The curve a record trains on.

    A profiled run is preferred: simulating it gives runtimes at every grid
    point from a single execution. Records with only an observed curve use
    that directly. ``e_c`` defaults to the core count the profile was
    captured with.
    """
    if record.profile is not None:
        cores = e_c if e_c is not None else record.profile.profiled_at[1]
        return estimate_curve(record.profile, n_grid, cores)
    return record.observed_curve


def augment_training_data(
    records: Sequence[WorkloadRecord],
    n_grid: Sequence[int] = DEFAULT_N_GRID,
    e_c: Optional[int] = None,
    schema: Optional[Sequence[str]] = None,
) -> AugmentedData:
    """Fit both model families to every record's training curve.

    Emits one example per record per family, never one per grid point.
    Records with neither a profile nor an observed curve are skipped with a
    warning. Degenerate (flat-curve) fits are kept, flagged.
    """
    if schema is None:
        schema = build_schema(records)
    schema = tuple(schema)
    examples: dict[PpmFamily, list[TrainingExample]] = {f: [] for f in PpmFamily}
    for record in records:
        curve = training_curve(record, n_grid, e_c)
        if curve is None:
            warnings.warn(
                f"query {record.query_id!r} has neither a profile nor an observed curve; skipped",
                stacklevel=2,
            )
            continue
        x = vectorize(record.features, schema)
        for family in PpmFamily:
            fit = family.fit(curve)
            examples[family].append(
                TrainingExample(
                    query_id=record.query_id,
                    x=x,
                    y=family.encode(fit.model),
                    degenerate=fit.degenerate,
                )
            )
    return AugmentedData(schema=schema, examples=examples)
