"""Choosing an allocation from a predicted price-performance model.

Two objectives are supported: *limited slowdown* picks the smallest
allocation whose runtime stays within a factor ``H`` of the best achievable
over the range, and *elbow point* picks the allocation where the
range-normalized curve's slope crosses 1, i.e. where further resources stop
paying for themselves. A chosen total-core count can then be factorized
into executors of ``e_c`` cores each against a node shape.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional, Protocol, Sequence, Union

import numpy as np

from .errors import InfeasibleSelectionError

__all__ = [
    "Evaluable",
    "SelectionObjective",
    "NodeShape",
    "ElbowResult",
    "Factorization",
    "error_metric",
    "select_limited_slowdown",
    "select_elbow",
    "factorize_cores",
]


class Evaluable(Protocol):
    """Anything that maps an allocation to a runtime: a fitted model
    (evaluated directly) or an observed curve (interpolated)."""

    def evaluate(self, n): ...


@dataclass(frozen=True)
class NodeShape:
    """Hardware shape constraining how executors pack onto nodes."""

    cores: int  # cores per node
    memory_gb: float  # memory per node
    executor_memory_gb: float  # memory granted to each executor

    def __post_init__(self) -> None:
        if self.cores < 1:
            raise ValueError("cores must be >= 1")
        if self.memory_gb <= 0 or self.executor_memory_gb <= 0:
            raise ValueError("memory sizes must be positive")
        if self.executor_memory_gb > self.memory_gb:
            raise ValueError("executor memory cannot exceed node memory")


@dataclass(frozen=True)
class SelectionObjective:
    """A selection rule over an integer allocation range.

    ``kind`` is ``"limited_slowdown"`` (requires ``h >= 1``) or ``"elbow"``.
    """

    kind: str
    n_range: tuple[int, int]
    h: Optional[float] = None

    def __post_init__(self) -> None:
        if self.kind not in ("limited_slowdown", "elbow"):
            raise ValueError(f"unknown objective kind {self.kind!r}")
        lo, hi = self.n_range
        if lo < 1 or hi < lo:
            raise ValueError(f"invalid allocation range {self.n_range}")
        if self.kind == "limited_slowdown":
            if self.h is None or self.h < 1:
                raise ValueError("limited_slowdown needs a slowdown threshold h >= 1")

    @property
    def label(self) -> str:
        return f"H={self.h:g}" if self.kind == "limited_slowdown" else "elbow"

    def select(self, model: Evaluable) -> int:
        if self.kind == "limited_slowdown":
            return select_limited_slowdown(model, self.h, self.n_range)
        return select_elbow(model, self.n_range).n


@dataclass(frozen=True)
class ElbowResult:
    n: int
    degenerate: bool = False


@dataclass(frozen=True)
class Factorization:
    e_c: int
    n: int
    waste: int  # stranded cores per node

    @property
    def total_cores(self) -> int:
        return self.e_c * self.n


CurvePair = tuple[Evaluable, Evaluable]


def error_metric(pairs: Union[CurvePair, Iterable[CurvePair]], n: int) -> float:
    """Relative time error at allocation ``n``.

    For a set of (predicted, actual) pairs this is the sum of absolute
    errors over the sum of actual runtimes; a single pair reduces to
    ``|t_hat - t| / t``. Off-grid allocations are interpolated by the
    curves themselves.
    """
    if isinstance(pairs, tuple) and len(pairs) == 2 and hasattr(pairs[0], "evaluate"):
        pairs = [pairs]
    abs_err = 0.0
    total = 0.0
    count = 0
    for predicted, actual in pairs:
        t_hat = predicted.evaluate(n)
        t = actual.evaluate(n)
        abs_err += abs(t_hat - t)
        total += t
        count += 1
    if count == 0:
        raise ValueError("error_metric needs at least one (predicted, actual) pair")
    return abs_err / total


def _grid_values(model: Evaluable, n_range: tuple[int, int]) -> tuple[np.ndarray, np.ndarray]:
    lo, hi = n_range
    ns = np.arange(lo, hi + 1)
    ts = np.asarray(model.evaluate(ns.astype(float)), dtype=float)
    return ns, ts


def select_limited_slowdown(model: Evaluable, h: float, n_range: tuple[int, int]) -> int:
    """Smallest ``n`` in the range whose runtime is within ``h`` of the
    minimum achievable runtime. ``n_range[1]`` always qualifies, so a
    result is guaranteed."""
    if h < 1:
        raise ValueError("slowdown threshold must be >= 1")
    ns, ts = _grid_values(model, n_range)
    t_min = float(ts.min())
    qualifying = np.flatnonzero(ts <= h * t_min)
    return int(ns[qualifying[0]])


def select_elbow(model: Evaluable, n_range: tuple[int, int]) -> ElbowResult:
    """Slope-crossover point of the range-normalized curve.

    Both axes are rescaled to [0, 1]; the answer is the smallest ``n``
    whose backward-difference slope is still >= 1 while the next point's
    is <= 1. A flat curve, or one with no crossover, degenerates to the
    range minimum.
    """
    ns, ts = _grid_values(model, n_range)
    if ns.size < 3:
        raise ValueError("elbow selection needs at least 3 grid points")
    t_min, t_max = float(ts.min()), float(ts.max())
    if t_max == t_min:
        return ElbowResult(n=int(ns[0]), degenerate=True)
    u = (ns - ns[0]) / (ns[-1] - ns[0])
    v = (ts - t_min) / (t_max - t_min)
    # slope[i] is the drop rate arriving at grid point i (backward difference)
    slope = (v[:-1] - v[1:]) / (u[1:] - u[:-1])
    for i in range(1, ns.size - 1):
        if slope[i - 1] >= 1 and slope[i] <= 1:
            return ElbowResult(n=int(ns[i]))
    return ElbowResult(n=int(ns[0]), degenerate=True)


def factorize_cores(
    k: int,
    node: NodeShape,
    e_c_candidates: Optional[Sequence[int]] = None,
) -> Factorization:
    """Split ``k`` total cores into ``n`` executors of ``e_c`` cores.

    Feasible candidates must divide ``k`` evenly and pack into a node
    within its memory (``executor_memory * floor(cores/e_c) <= memory``).
    Among those, the candidate stranding the fewest node cores wins; ties
    go to the larger executor size, which keeps per-executor overheads low.
    """
    if k < 1:
        raise ValueError("total core count must be >= 1")
    if e_c_candidates is None:
        e_c_candidates = range(1, node.cores + 1)
    violations: dict[int, str] = {}
    best: Optional[Factorization] = None
    for e_c in e_c_candidates:
        if e_c < 1 or e_c > node.cores:
            violations[e_c] = f"e_c={e_c} outside [1, {node.cores}]"
            continue
        per_node = node.cores // e_c
        if node.executor_memory_gb * per_node > node.memory_gb:
            violations[e_c] = (
                f"e_c={e_c}: {per_node} executors/node need "
                f"{node.executor_memory_gb * per_node:g} GB > {node.memory_gb:g} GB"
            )
            continue
        if k % e_c != 0:
            violations[e_c] = f"e_c={e_c} does not divide k={k}"
            continue
        waste = node.cores % e_c
        if best is None or waste < best.waste or (waste == best.waste and e_c > best.e_c):
            best = Factorization(e_c=e_c, n=k // e_c, waste=waste)
    if best is None:
        detail = "; ".join(violations[e] for e in sorted(violations))
        raise InfeasibleSelectionError(
            f"no feasible cores-per-executor value for k={k} on {node}: {detail}",
            violations,
        )
    return best
