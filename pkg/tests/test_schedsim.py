import numpy as np
import pytest

from perfalloc.schedsim import (
    QueryProfile,
    StageProfile,
    estimate_curve,
    estimate_runtime,
    synthetic_profile,
)


def one_stage(tasks, driver=0.0, stage_id="s0"):
    return QueryProfile(
        query_id="q",
        driver_time=driver,
        stages=(StageProfile(stage_id=stage_id, task_durations=tuple(tasks)),),
        profiled_at=(16, 1),
    )


class TestValidation:
    def test_empty_tasks(self):
        with pytest.raises(ValueError):
            StageProfile(stage_id="s0", task_durations=())

    def test_non_positive_durations(self):
        with pytest.raises(ValueError):
            StageProfile(stage_id="s0", task_durations=(1.0, 0.0))

    def test_duplicate_stage_ids(self):
        s = StageProfile(stage_id="s0", task_durations=(1.0,))
        with pytest.raises(ValueError, match="duplicate"):
            QueryProfile(query_id="q", driver_time=0.0, stages=(s, s))

    def test_unknown_dependency(self):
        s = StageProfile(stage_id="s0", task_durations=(1.0,), depends_on=("ghost",))
        with pytest.raises(ValueError, match="unknown"):
            QueryProfile(query_id="q", driver_time=0.0, stages=(s,))

    def test_dependency_cycle(self):
        a = StageProfile(stage_id="a", task_durations=(1.0,), depends_on=("b",))
        b = StageProfile(stage_id="b", task_durations=(1.0,), depends_on=("a",))
        with pytest.raises(ValueError, match="cycle"):
            QueryProfile(query_id="q", driver_time=0.0, stages=(a, b))

    def test_negative_driver(self):
        with pytest.raises(ValueError):
            QueryProfile(query_id="q", driver_time=-1.0, stages=())


class TestEstimateRuntime:
    def test_single_stage_hand_values(self):
        profile = one_stage([10.0] * 10)
        assert estimate_runtime(profile, 1) == 100.0
        assert estimate_runtime(profile, 2) == 50.0
        assert estimate_runtime(profile, 10) == 10.0
        assert estimate_runtime(profile, 20) == 10.0  # critical task floor

    def test_driver_only(self):
        profile = QueryProfile(query_id="q", driver_time=5.0, stages=())
        for n in (1, 4, 48):
            assert estimate_runtime(profile, n) == 5.0

    def test_independent_stages_compose_serially(self):
        stages = (
            StageProfile(stage_id="a", task_durations=(10.0,) * 4),
            StageProfile(stage_id="b", task_durations=(10.0,) * 4),
        )
        profile = QueryProfile(query_id="q", driver_time=0.0, stages=stages)
        assert estimate_runtime(profile, 4) == 20.0

    def test_depends_only_on_slots(self):
        rng = np.random.default_rng(0)
        profile = synthetic_profile(rng, stage_works=(120.0, 60.0), tasks_per_stage=(40, 15))
        for n, e_c in ((3, 4), (6, 2), (12, 1), (2, 6)):
            assert estimate_runtime(profile, n, e_c) == estimate_runtime(profile, n * e_c, 1)

    def test_invalid_allocation(self):
        with pytest.raises(ValueError):
            estimate_runtime(one_stage([1.0]), 0)
        with pytest.raises(ValueError):
            estimate_runtime(one_stage([1.0]), 1, 0)

    def test_limit_is_driver_plus_critical_path(self):
        rng = np.random.default_rng(1)
        profile = synthetic_profile(rng, driver_time=3.0, stage_works=(50.0, 80.0), tasks_per_stage=(12, 30))
        assert estimate_runtime(profile, 10**9) == pytest.approx(profile.floor_runtime)


class TestEstimateCurve:
    def test_hand_example(self):
        profile = one_stage([10.0] * 10)
        curve = estimate_curve(profile, (1, 2, 10, 20))
        assert curve.points == ((1, 100.0), (2, 50.0), (10, 10.0), (20, 10.0))

    def test_driver_only_constant(self):
        profile = QueryProfile(query_id="q", driver_time=5.0, stages=())
        curve = estimate_curve(profile, (1, 8, 48))
        assert all(t == 5.0 for _, t in curve.points)

    def test_monotone_on_random_profiles(self):
        rng = np.random.default_rng(2)
        for _ in range(100):
            n_stages = int(rng.integers(1, 6))
            profile = synthetic_profile(
                rng,
                stage_works=tuple(float(w) for w in rng.uniform(5, 200, n_stages)),
                tasks_per_stage=tuple(int(t) for t in rng.integers(1, 120, n_stages)),
                driver_time=float(rng.uniform(0, 10)),
                sigma=float(rng.uniform(0.1, 1.2)),
            )
            ts = estimate_curve(profile, tuple(range(1, 49))).ts
            assert np.all(np.diff(ts) <= 1e-12)

    def test_empty_grid_rejected(self):
        with pytest.raises(ValueError):
            estimate_curve(one_stage([1.0]), ())


class TestSyntheticProfile:
    def test_work_normalized_exactly(self):
        rng = np.random.default_rng(3)
        profile = synthetic_profile(rng, stage_works=(90.0, 40.0), tasks_per_stage=(17, 5))
        assert profile.stages[0].total_work == pytest.approx(90.0, rel=1e-12)
        assert profile.stages[1].total_work == pytest.approx(40.0, rel=1e-12)

    def test_stages_form_chain(self):
        rng = np.random.default_rng(4)
        profile = synthetic_profile(rng, stage_works=(1.0, 1.0, 1.0), tasks_per_stage=(2, 2, 2))
        assert profile.stages[0].depends_on == ()
        assert profile.stages[1].depends_on == ("s0",)
        assert profile.stages[2].depends_on == ("s1",)

    def test_reproducible(self):
        a = synthetic_profile(np.random.default_rng(5), stage_works=(10.0,), tasks_per_stage=(6,))
        b = synthetic_profile(np.random.default_rng(5), stage_works=(10.0,), tasks_per_stage=(6,))
        assert a == b

    def test_mismatched_lengths(self):
        with pytest.raises(ValueError):
            synthetic_profile(np.random.default_rng(6), stage_works=(1.0,), tasks_per_stage=(2, 3))
