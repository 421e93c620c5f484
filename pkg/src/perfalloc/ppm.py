"""Parametric price-performance models (PPMs).

A PPM maps a compute allocation (executor or total-core count) to a
predicted query runtime. Two families are supported:

* :class:`PowerLawPPM` -- ``t(n) = max(b * n**a, m)``, a power law with a
  runtime floor ``m`` that captures saturation.
* :class:`AmdahlPPM` -- ``t(n) = s + p / n``, a fixed serial component plus
  a perfectly scalable one.

Both families are monotonically non-increasing in ``n`` by construction,
and both can be fitted from an observed :class:`AllocationCurve` with
ordinary least squares (log-log space for the power law, reciprocal space
for Amdahl).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

__all__ = [
    "ResourceKind",
    "AllocationCurve",
    "PowerLawPPM",
    "AmdahlPPM",
    "SaturationPoint",
    "FitResult",
    "PpmFamily",
    "PricePerfModel",
    "SATURATION_TOLERANCE",
    "evaluate_power_law",
    "evaluate_amdahl",
    "fit_power_law",
    "fit_amdahl",
    "saturation_point",
    "rms_relative_error",
]

# Relative tolerance above the observed minimum below which a point counts
# as saturated. Run-to-run noise of real curves is of this magnitude.
SATURATION_TOLERANCE = 0.02


class ResourceKind(enum.Enum):
    EXECUTORS = "executors"
    TOTAL_CORES = "total_cores"


@dataclass(frozen=True)
class AllocationCurve:
    """Observed or estimated runtimes at increasing allocations.

    ``points`` is an ordered sequence of ``(n, t)`` pairs with strictly
    increasing positive integer ``n`` and positive runtimes ``t`` in
    seconds. Queries at off-grid ``n`` are answered by piecewise-linear
    interpolation, clamped at the ends of the grid.
    """

    points: tuple[tuple[int, float], ...]
    resource_kind: ResourceKind = ResourceKind.EXECUTORS

    def __post_init__(self) -> None:
        pts = tuple((int(n), float(t)) for n, t in self.points)
        if not pts:
            raise ValueError("allocation curve needs at least one point")
        ns = [n for n, _ in pts]
        if any(n < 1 for n in ns):
            raise ValueError("allocation counts must be >= 1")
        if any(b <= a for a, b in zip(ns, ns[1:])):
            raise ValueError("allocation counts must be strictly increasing")
        if any(t <= 0 for _, t in pts):
            raise ValueError("runtimes must be positive")
        object.__setattr__(self, "points", pts)

    @property
    def ns(self) -> np.ndarray:
        return np.array([n for n, _ in self.points], dtype=float)

    @property
    def ts(self) -> np.ndarray:
        return np.array([t for _, t in self.points], dtype=float)

    @property
    def min_t(self) -> float:
        return min(t for _, t in self.points)

    def evaluate(self, n: Union[int, float, np.ndarray]):
        """Runtime at ``n``, piecewise-linearly interpolated on the grid."""
        out = np.interp(np.asarray(n, dtype=float), self.ns, self.ts)
        return float(out) if np.ndim(n) == 0 else out


def _check_allocation(n) -> np.ndarray:
    arr = np.asarray(n, dtype=float)
    if np.any(arr < 1):
        raise ValueError("allocation must be >= 1")
    return arr


@dataclass(frozen=True)
class PowerLawPPM:
    """Power law with saturation: ``t(n) = max(b * n**a, m)``.

    ``a`` must be non-positive so runtime never increases with more
    resources; ``b`` is the scale at ``n = 1`` and ``m`` the runtime floor.
    """

    a: float
    b: float
    m: float

    def __post_init__(self) -> None:
        if self.b <= 0 or self.m <= 0:
            raise ValueError(f"b and m must be positive, got b={self.b}, m={self.m}")
        if self.a > 0:
            raise ValueError(f"exponent a must be <= 0, got a={self.a}")

    def evaluate(self, n: Union[int, float, np.ndarray]):
        arr = _check_allocation(n)
        out = np.maximum(self.b * arr**self.a, self.m)
        return float(out) if np.ndim(n) == 0 else out

    def curve(self, n_grid: Sequence[int], resource_kind: ResourceKind = ResourceKind.EXECUTORS) -> AllocationCurve:
        return AllocationCurve(tuple((int(n), self.evaluate(int(n))) for n in n_grid), resource_kind)

    def to_targets(self) -> np.ndarray:
        """Regression targets: ``(a, log(b), m)``. ``b`` spans orders of
        magnitude, so it is learned in log space."""
        return np.array([self.a, math.log(self.b), self.m], dtype=float)

    @classmethod
    def from_targets(cls, vec: Sequence[float]) -> "PowerLawPPM":
        """Build a valid model from a (possibly out-of-range) predicted
        target vector, clamping to the monotone, positive domain."""
        a, log_b, m = (float(v) for v in vec)
        return cls(a=min(a, 0.0), b=math.exp(log_b), m=max(m, 1e-9))


@dataclass(frozen=True)
class AmdahlPPM:
    """Serial-plus-scalable model: ``t(n) = s + p / n``."""

    s: float
    p: float

    def __post_init__(self) -> None:
        if self.s < 0 or self.p < 0:
            raise ValueError(f"s and p must be non-negative, got s={self.s}, p={self.p}")

    def evaluate(self, n: Union[int, float, np.ndarray]):
        arr = _check_allocation(n)
        out = self.s + self.p / arr
        return float(out) if np.ndim(n) == 0 else out

    def curve(self, n_grid: Sequence[int], resource_kind: ResourceKind = ResourceKind.EXECUTORS) -> AllocationCurve:
        return AllocationCurve(tuple((int(n), self.evaluate(int(n))) for n in n_grid), resource_kind)

    def to_targets(self) -> np.ndarray:
        """Regression targets: ``(s, log1p(p))``."""
        return np.array([self.s, math.log1p(self.p)], dtype=float)

    @classmethod
    def from_targets(cls, vec: Sequence[float]) -> "AmdahlPPM":
        s, log1p_p = (float(v) for v in vec)
        return cls(s=max(s, 0.0), p=max(math.expm1(log1p_p), 0.0))


PricePerfModel = Union[PowerLawPPM, AmdahlPPM]


@dataclass(frozen=True)
class SaturationPoint:
    """Smallest allocation at which a power-law model sits on its floor."""

    n_m: int


@dataclass(frozen=True)
class FitResult:
    """A fitted model plus its goodness of fit.

    ``residual`` is the RMS error in the space the regression was done in
    (log space for the power law, linear space for Amdahl). ``degenerate``
    marks fits that collapsed to a flat model, either because fewer than
    two points were available outside the saturated region or because the
    unconstrained slope came out positive.
    """

    model: PricePerfModel
    residual: float
    degenerate: bool = False


def evaluate_power_law(model: PowerLawPPM, n: int) -> float:
    return model.evaluate(n)


def evaluate_amdahl(model: AmdahlPPM, n: int) -> float:
    return model.evaluate(n)


def _fit_region(curve: AllocationCurve) -> tuple[np.ndarray, np.ndarray, float]:
    """Points used for the log-space power-law fit.

    The region is the prefix of points strictly above the saturation
    threshold ``m * (1 + SATURATION_TOLERANCE)`` plus the first point at
    the floor; everything after the curve first touches the floor is
    saturated and would bias the slope.
    """
    ns, ts = curve.ns, curve.ts
    m = curve.min_t
    threshold = m * (1.0 + SATURATION_TOLERANCE)
    end = len(ts)
    for i, t in enumerate(ts):
        if t <= threshold:
            end = i + 1  # include the first at-floor point
            break
    return ns[:end], ts[:end], m


def fit_power_law(curve: AllocationCurve) -> FitResult:
    """Least-squares power-law fit in log-log space.

    The floor ``m`` is the minimum observed runtime; slope and intercept
    come from OLS of ``log t`` against ``log n`` over the non-saturating
    region. A positive fitted slope is clamped to the flat model
    ``t = m``.
    """
    if len(curve.points) < 3:
        raise ValueError("power-law fit needs at least 3 points")
    ns, ts, m = _fit_region(curve)

    if len(ns) < 2:
        return FitResult(model=PowerLawPPM(a=0.0, b=m, m=m), residual=0.0, degenerate=True)

    a, log_b = np.polyfit(np.log(ns), np.log(ts), 1)
    if a > 0:
        model: PowerLawPPM = PowerLawPPM(a=0.0, b=m, m=m)
        degenerate = True
    else:
        model = PowerLawPPM(a=float(a), b=float(np.exp(log_b)), m=m)
        degenerate = False

    predicted = np.maximum(model.b * ns**model.a, model.m)
    residual = float(np.sqrt(np.mean((np.log(predicted) - np.log(ts)) ** 2)))
    return FitResult(model=model, residual=residual, degenerate=degenerate)


def fit_amdahl(curve: AllocationCurve) -> FitResult:
    """Least-squares Amdahl fit of ``t`` against ``1/n``.

    Negative fitted components are clamped to zero and the other parameter
    refitted, keeping the model in its valid domain.
    """
    if len(curve.points) < 3:
        raise ValueError("Amdahl fit needs at least 3 points")
    ns, ts = curve.ns, curve.ts
    x = 1.0 / ns
    p, s = np.polyfit(x, ts, 1)
    if p < 0:
        p, s = 0.0, float(np.mean(ts))
    elif s < 0:
        s, p = 0.0, float(np.sum(ts * x) / np.sum(x * x))

    model = AmdahlPPM(s=float(s), p=float(p))
    residual = float(np.sqrt(np.mean((model.evaluate(ns) - ts) ** 2)))
    return FitResult(model=model, residual=residual)


def saturation_point(model: PowerLawPPM) -> SaturationPoint:
    """Smallest integer ``n`` with ``b * n**a <= m``.

    Found by exponential search plus bisection on the (non-increasing)
    power term, so the boundary is exact under float evaluation even when
    a shallow exponent pushes it to astronomically large ``n``.
    """
    if model.a == 0 or model.b <= model.m:
        return SaturationPoint(1)

    def saturated(n: int) -> bool:
        # must use the same arithmetic as evaluate() so the boundary the
        # caller observes is exact
        return model.evaluate(n) <= model.m

    hi = 1
    while not saturated(hi):
        hi *= 2
    lo = hi // 2  # not saturated (or 0 when hi == 1)
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if saturated(mid):
            hi = mid
        else:
            lo = mid
    return SaturationPoint(hi)


def rms_relative_error(model: PricePerfModel, curve: AllocationCurve) -> float:
    """RMS of per-point relative errors of ``model`` against ``curve``."""
    ns, ts = curve.ns, curve.ts
    rel = (model.evaluate(ns) - ts) / ts
    return float(np.sqrt(np.mean(rel**2)))


class PpmFamily(enum.Enum):
    """The two supported model families, with their fitting and target
    encoding rules attached."""

    POWER_LAW = "pl"
    AMDAHL = "al"

    @property
    def target_names(self) -> tuple[str, ...]:
        return ("a", "b", "m") if self is PpmFamily.POWER_LAW else ("s", "p")

    def fit(self, curve: AllocationCurve) -> FitResult:
        return fit_power_law(curve) if self is PpmFamily.POWER_LAW else fit_amdahl(curve)

    def encode(self, model: PricePerfModel) -> np.ndarray:
        return model.to_targets()

    def decode(self, vec: Sequence[float]) -> PricePerfModel:
        if self is PpmFamily.POWER_LAW:
            return PowerLawPPM.from_targets(vec)
        return AmdahlPPM.from_targets(vec)
