"""Discrete-time executor allocation simulator.

Replays one query's work under an allocation policy and a cluster grant
model, producing the executor skyline (allocated executors over time), the
runtime, and the occupancy cost (area under the skyline). Three policies
are modeled:

* static allocation: a fixed executor count requested up front;
* dynamic allocation: exponentially growing requests while tasks are
  piling up, plus release of executors idle beyond a timeout;
* rule allocation: a predicted executor count requested once at the start,
  with reactive idle-based release only (no reactive scale-up).

The work model matches the scheduler estimator: stages run serially, each
consuming its task-seconds at one per slot per tick but never finishing
faster than its longest task. The simulator itself is deterministic.

Grants arrive in batches: the first batch lands with the request and each
subsequent batch one allocation lag later, so large requests take several
batches to fill (tens of seconds with the defaults).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

from .ppm import AllocationCurve, fit_amdahl, fit_power_law
from .schedsim import QueryProfile

__all__ = [
    "Skyline",
    "StaticAllocation",
    "DynamicAllocation",
    "RuleAllocation",
    "AllocationPolicy",
    "ClusterModel",
    "StageWork",
    "SimWork",
    "SimResult",
    "simulate",
    "auc",
    "compare_policies",
    "ComparisonRow",
    "ComparisonReport",
]

TICK = 1.0  # seconds per simulation step


@dataclass(frozen=True)
class Skyline:
    """Step function of allocated executors over a query's lifetime."""

    samples: tuple[tuple[float, int], ...]
    end_time: float

    def __post_init__(self) -> None:
        if not self.samples:
            raise ValueError("skyline needs at least one sample")
        times = [t for t, _ in self.samples]
        if times[0] != 0:
            raise ValueError("skyline must start at time 0")
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("skyline times must be strictly increasing")
        if any(n < 0 for _, n in self.samples):
            raise ValueError("allocated executor counts must be >= 0")
        if self.end_time < times[-1]:
            raise ValueError("end_time precedes the last sample")

    @property
    def max_n(self) -> int:
        return max(n for _, n in self.samples)


def auc(skyline: Skyline) -> float:
    """Area under the skyline in executor-seconds (exact piecewise-constant
    integral)."""
    total = 0.0
    samples = skyline.samples
    for (t0, n), (t1, _) in zip(samples, samples[1:]):
        total += n * (t1 - t0)
    total += samples[-1][1] * (skyline.end_time - samples[-1][0])
    return total


@dataclass(frozen=True)
class StaticAllocation:
    """All executors requested up front and held until the query ends."""

    n: int

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValueError("static allocation needs n >= 1")

    @property
    def label(self) -> str:
        return f"sa:{self.n}"


@dataclass(frozen=True)
class DynamicAllocation:
    """Reactive policy: double the target while work keeps piling up,
    release executors idle past the timeout."""

    n_min: int
    n_max: int
    ramp_interval: float = 1.0
    idle_timeout: float = 60.0

    def __post_init__(self) -> None:
        if self.n_min < 0 or self.n_max < max(self.n_min, 1):
            raise ValueError("need 0 <= n_min <= n_max and n_max >= 1")
        if self.ramp_interval <= 0 or self.idle_timeout <= 0:
            raise ValueError("intervals must be positive")

    @property
    def label(self) -> str:
        return f"da:{self.n_min},{self.n_max}"


@dataclass(frozen=True)
class RuleAllocation:
    """Predictive policy: the model-chosen count requested once at t=0;
    scale-up stays disabled afterwards, idle release stays on."""

    n_predicted: int
    start_n: int = 0
    idle_timeout: float = 60.0

    def __post_init__(self) -> None:
        if self.n_predicted < 1:
            raise ValueError("rule allocation needs a predicted n >= 1")
        if self.start_n < 0 or self.idle_timeout <= 0:
            raise ValueError("start_n must be >= 0 and idle_timeout positive")

    @property
    def label(self) -> str:
        return f"rule:{self.n_predicted}"


AllocationPolicy = Union[StaticAllocation, DynamicAllocation, RuleAllocation]


@dataclass(frozen=True)
class ClusterModel:
    """How fast the environment fulfils executor requests.

    The first ``grant_batch`` executors of a request arrive immediately;
    each further batch arrives ``allocation_lag`` seconds after the
    previous one. ``capacity`` caps the total; requests beyond it stay
    queued (they are not binding).
    """

    allocation_lag: float = 5.0
    grant_batch: int = 5
    capacity: int = 200

    def __post_init__(self) -> None:
        if self.allocation_lag <= 0 or self.grant_batch < 1 or self.capacity < 1:
            raise ValueError("cluster model parameters must be positive")


@dataclass(frozen=True)
class StageWork:
    work_seconds: float
    critical_seconds: float = 0.0

    def __post_init__(self) -> None:
        if self.work_seconds < 0 or self.critical_seconds < 0:
            raise ValueError("stage work and critical time must be >= 0")


@dataclass(frozen=True)
class SimWork:
    """Work model driving a simulation: serial stages of task-seconds with
    per-stage critical-task floors."""

    query_id: str
    driver_time: float
    stages: tuple[StageWork, ...]
    e_c: int = 1

    def __post_init__(self) -> None:
        if self.driver_time < 0 or self.e_c < 1:
            raise ValueError("driver_time must be >= 0 and e_c >= 1")

    @property
    def total_work(self) -> float:
        return sum(s.work_seconds for s in self.stages)

    @classmethod
    def from_profile(cls, profile: QueryProfile, e_c: Optional[int] = None) -> "SimWork":
        cores = e_c if e_c is not None else profile.profiled_at[1]
        return cls(
            query_id=profile.query_id,
            driver_time=profile.driver_time,
            stages=tuple(StageWork(s.total_work, s.critical_time) for s in profile.stages),
            e_c=cores,
        )

    @classmethod
    def from_curve(cls, curve: AllocationCurve, query_id: str = "curve", e_c: int = 1) -> "SimWork":
        """Approximate work model for a query known only by its runtime
        curve: the Amdahl fit supplies the serial and scalable parts, the
        power-law floor the critical-path bound."""
        amdahl = fit_amdahl(curve).model
        floor = fit_power_law(curve).model.m
        return cls(
            query_id=query_id,
            driver_time=amdahl.s,
            stages=(StageWork(amdahl.p * e_c, max(floor - amdahl.s, 0.0)),),
            e_c=e_c,
        )


@dataclass(frozen=True)
class SimResult:
    skyline: Skyline
    runtime: float
    work_consumed: float
    full_grant_time: Optional[float]  # when the full request was allocated, if ever

    @property
    def reached_full_allocation(self) -> bool:
        return self.full_grant_time is not None and self.full_grant_time <= self.runtime

    @property
    def auc(self) -> float:
        return auc(self.skyline)

    @property
    def max_n(self) -> int:
        return self.skyline.max_n


class _PolicyState:
    """Per-run mutable policy bookkeeping: outstanding requests, ramp
    streaks, and idle-release behavior."""

    def __init__(self, policy: AllocationPolicy, capacity: int):
        self.policy = policy
        if isinstance(policy, StaticAllocation):
            self.outstanding = policy.n
            self.initial = 0
            self.idle_timeout = None
            self.request_target = policy.n
        elif isinstance(policy, RuleAllocation):
            self.initial = min(policy.start_n, capacity)
            self.outstanding = max(policy.n_predicted - self.initial, 0)
            self.idle_timeout = policy.idle_timeout
            self.request_target = max(policy.n_predicted, self.initial)
        else:
            self.initial = 0
            self.outstanding = policy.n_min
            self.idle_timeout = policy.idle_timeout
            self.request_target = policy.n_min
            self.da_target = policy.n_min
        self.pending_streak = 0.0

    def ramp(self, pending: bool, allocated: int) -> None:
        """Dynamic allocation only: exponential target growth after
        sustained pending work. Sustained backlog also re-requests up to
        the current target, so executors released while idle come back
        when work piles up again."""
        policy = self.policy
        if not isinstance(policy, DynamicAllocation):
            return
        self.pending_streak = self.pending_streak + TICK if pending else 0.0
        if self.pending_streak >= policy.ramp_interval:
            self.da_target = min(policy.n_max, max(2 * self.da_target, 1))
            self.request_target = max(self.request_target, self.da_target)
            self.outstanding = max(self.outstanding, self.da_target - allocated)
            self.pending_streak = 0.0


def simulate(
    work: Union[SimWork, QueryProfile],
    policy: AllocationPolicy,
    cluster: ClusterModel,
) -> SimResult:
    """Run one query under one policy, tick by tick.

    Each one-second tick: grants land (first batch immediately, later
    batches one lag apart), dynamic allocation may ramp, the current stage
    consumes up to one task-second per slot, and executors idle beyond the
    policy's timeout are released.
    """
    if isinstance(work, QueryProfile):
        work = SimWork.from_profile(work)

    state = _PolicyState(policy, cluster.capacity)
    allocated = state.initial
    idle: list[float] = [0.0] * allocated
    last_grant: Optional[float] = None
    full_grant_time: Optional[float] = 0.0 if state.outstanding == 0 and allocated >= state.request_target else None

    driver_left = work.driver_time
    stage_idx = 0
    remaining = [s.work_seconds for s in work.stages]
    elapsed = [0.0] * len(work.stages)
    consumed = 0.0

    samples: list[tuple[float, int]] = [(0.0, allocated)]
    t = 0.0
    if work.driver_time <= 0 and not work.stages:
        return SimResult(
            skyline=Skyline(samples=tuple(samples), end_time=0.0),
            runtime=0.0,
            work_consumed=0.0,
            full_grant_time=full_grant_time,
        )
    max_ticks = int(work.driver_time + work.total_work + sum(s.critical_seconds for s in work.stages)) + 86_400

    def record(time: float, n: int) -> None:
        if samples and samples[-1][1] == n:
            return
        if samples and samples[-1][0] == time:
            samples[-1] = (time, n)
        else:
            samples.append((time, n))

    for _ in range(max_ticks):
        # Grants land at the start of the tick.
        if state.outstanding > 0 and (last_grant is None or t - last_grant >= cluster.allocation_lag):
            grant = min(cluster.grant_batch, state.outstanding, cluster.capacity - allocated)
            if grant > 0:
                allocated += grant
                idle.extend([0.0] * grant)
                state.outstanding -= grant
                last_grant = t
                record(t, allocated)
                if state.outstanding == 0 and full_grant_time is None and allocated >= min(
                    state.request_target, cluster.capacity
                ):
                    full_grant_time = t

        # Work progress over this tick.
        slots = allocated * work.e_c
        busy = 0
        pending = False
        if driver_left > 0:
            driver_left -= TICK
        elif stage_idx < len(work.stages):
            stage = work.stages[stage_idx]
            before = remaining[stage_idx]
            take = min(float(slots) * TICK, before)
            remaining[stage_idx] = before - take
            consumed += take
            elapsed[stage_idx] += TICK
            pending = before > float(slots) * TICK
            if before > 0:
                busy = min(allocated, max(1, math.ceil(take / TICK / work.e_c)))
            else:
                busy = min(allocated, 1)  # critical task still running
            if remaining[stage_idx] <= 0 and elapsed[stage_idx] >= stage.critical_seconds:
                stage_idx += 1

        state.ramp(pending, allocated)
        t += TICK

        # Idle accounting: the longest-idle executors stay idle so they can
        # be released; work is packed onto the least-idle ones.
        if allocated:
            idle.sort()
            for i in range(len(idle)):
                idle[i] = 0.0 if i < busy else idle[i] + TICK
            if state.idle_timeout is not None:
                keep = [d for d in idle if d <= state.idle_timeout]
                released = len(idle) - len(keep)
                if released:
                    allocated -= released
                    idle = keep
                    record(t, allocated)

        done = driver_left <= 0 and stage_idx >= len(work.stages)
        if done:
            return SimResult(
                skyline=Skyline(samples=tuple(samples), end_time=t),
                runtime=t,
                work_consumed=consumed,
                full_grant_time=full_grant_time,
            )
    raise RuntimeError(f"simulation of {work.query_id!r} under {policy.label} did not terminate")


@dataclass(frozen=True)
class ComparisonRow:
    """One (query, policy) outcome with ratios against the baseline policy.

    ``speedup`` is baseline runtime over this policy's runtime (greater
    than 1 means this policy finished faster than the baseline).
    """

    query_id: str
    policy: str
    runtime: float
    max_n: int
    auc: float
    n_ratio: float
    auc_ratio: float
    speedup: float
    reached_full_allocation: bool


@dataclass(frozen=True)
class ComparisonReport:
    baseline: str
    rows: tuple[ComparisonRow, ...]

    def aggregate(self) -> dict[str, dict[str, float]]:
        """Arithmetic means of the per-query ratios, per policy."""
        out: dict[str, dict[str, float]] = {}
        policies = sorted({row.policy for row in self.rows})
        for policy in policies:
            rows = [r for r in self.rows if r.policy == policy]
            out[policy] = {
                "mean_n_ratio": sum(r.n_ratio for r in rows) / len(rows),
                "mean_auc_ratio": sum(r.auc_ratio for r in rows) / len(rows),
                "mean_speedup": sum(r.speedup for r in rows) / len(rows),
                "mean_runtime": sum(r.runtime for r in rows) / len(rows),
                "mean_auc": sum(r.auc for r in rows) / len(rows),
                "queries_fully_allocated": sum(r.reached_full_allocation for r in rows),
            }
        return out


def compare_policies(
    workload: Sequence[Union[SimWork, QueryProfile]],
    policies: Sequence[AllocationPolicy],
    cluster: ClusterModel,
    baseline: int = 0,
) -> ComparisonReport:
    """Simulate every query under every policy and report per-query
    (n, AUC, runtime) ratios against the designated baseline policy."""
    if not workload:
        raise ValueError("compare_policies needs at least one query")
    if len(policies) < 2:
        raise ValueError("compare_policies needs at least two policies")
    if not 0 <= baseline < len(policies):
        raise ValueError("baseline index out of range")

    rows: list[ComparisonRow] = []
    for item in workload:
        sim_work = item if isinstance(item, SimWork) else SimWork.from_profile(item)
        results = [(p, simulate(sim_work, p, cluster)) for p in policies]
        base = results[baseline][1]
        for policy, res in results:
            rows.append(
                ComparisonRow(
                    query_id=sim_work.query_id,
                    policy=policy.label,
                    runtime=res.runtime,
                    max_n=res.max_n,
                    auc=res.auc,
                    n_ratio=res.max_n / base.max_n,
                    auc_ratio=res.auc / base.auc,
                    speedup=base.runtime / res.runtime,
                    reached_full_allocation=res.reached_full_allocation,
                )
            )
    return ComparisonReport(baseline=policies[baseline].label, rows=tuple(rows))
