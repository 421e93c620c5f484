import math

import numpy as np
import pytest

from perfalloc.allocsim import (
    ClusterModel,
    DynamicAllocation,
    RuleAllocation,
    SimWork,
    Skyline,
    StageWork,
    StaticAllocation,
    auc,
    compare_policies,
    simulate,
)
from perfalloc.ppm import AmdahlPPM
from perfalloc.schedsim import synthetic_profile

INSTANT = ClusterModel(allocation_lag=5.0, grant_batch=100, capacity=200)
DEFAULT = ClusterModel(allocation_lag=5.0, grant_batch=5, capacity=200)


def flat_work(work, crit=0.0, driver=0.0, qid="q"):
    return SimWork(query_id=qid, driver_time=driver, stages=(StageWork(work, crit),), e_c=1)


class TestSkyline:
    def test_validation(self):
        with pytest.raises(ValueError):
            Skyline(samples=(), end_time=1.0)
        with pytest.raises(ValueError):
            Skyline(samples=((1.0, 2),), end_time=5.0)  # must start at 0
        with pytest.raises(ValueError):
            Skyline(samples=((0.0, 2), (0.0, 3)), end_time=5.0)
        with pytest.raises(ValueError):
            Skyline(samples=((0.0, -1),), end_time=5.0)
        with pytest.raises(ValueError):
            Skyline(samples=((0.0, 1), (2.0, 3)), end_time=1.0)

    def test_auc_constant(self):
        assert auc(Skyline(samples=((0.0, 5),), end_time=100.0)) == 500.0

    def test_auc_step(self):
        assert auc(Skyline(samples=((0.0, 2), (10.0, 4)), end_time=20.0)) == 60.0

    def test_auc_additive_over_splits(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            times = np.unique(rng.uniform(0.5, 99.5, 8))
            samples = [(0.0, int(rng.integers(0, 20)))]
            samples += [(float(t), int(rng.integers(0, 20))) for t in times]
            end = 100.0
            sky = Skyline(samples=tuple(samples), end_time=end)
            split = float(rng.uniform(0.1, 99.9))
            # rebuild the two halves of the skyline around the split point
            left = [s for s in samples if s[0] < split]
            right_level = left[-1][1]
            right = [(0.0, right_level)] + [(t - split, n) for t, n in samples if t > split]
            a_left = auc(Skyline(samples=tuple(left), end_time=split))
            a_right = auc(Skyline(samples=tuple(right), end_time=end - split))
            assert a_left + a_right == pytest.approx(auc(sky), rel=1e-12)


class TestSimulate:
    def test_static_flat_example(self):
        res = simulate(flat_work(500.0), StaticAllocation(5), INSTANT)
        assert res.runtime == 100.0
        assert res.skyline.samples == ((0.0, 5),)
        assert res.auc == 500.0
        assert res.max_n == 5
        assert res.work_consumed == 500.0

    def test_static_skyline_constant_to_end(self):
        res = simulate(flat_work(500.0, crit=30.0), StaticAllocation(8), INSTANT)
        assert res.skyline.samples == ((0.0, 8),)

    def test_rule_ramp_with_27s_full_grant(self):
        cluster = ClusterModel(allocation_lag=6.75, grant_batch=5, capacity=200)
        res = simulate(flat_work(5000.0), RuleAllocation(25), cluster)
        assert res.max_n == 25
        assert res.full_grant_time == 28.0  # ramps, then plateaus at 25
        levels = [n for _, n in res.skyline.samples]
        assert levels == [5, 10, 15, 20, 25]

    def test_driver_only(self):
        work = SimWork(query_id="d", driver_time=5.0, stages=(), e_c=1)
        res = simulate(work, StaticAllocation(3), INSTANT)
        assert res.runtime == 5.0
        assert res.auc == 15.0

    def test_critical_floor_respected(self):
        res = simulate(flat_work(100.0, crit=40.0), StaticAllocation(10), INSTANT)
        assert res.runtime == 40.0

    def test_cores_per_executor_scale_slots(self):
        work = SimWork(query_id="q", driver_time=0.0, stages=(StageWork(400.0, 0.0),), e_c=4)
        res = simulate(work, StaticAllocation(5), INSTANT)
        assert res.runtime == 20.0  # 20 slots

    def test_dynamic_never_exceeds_bounds(self):
        rng = np.random.default_rng(1)
        for _ in range(30):
            profile = synthetic_profile(
                rng,
                stage_works=tuple(float(w) for w in rng.uniform(50, 400, 3)),
                tasks_per_stage=tuple(int(t) for t in rng.integers(20, 200, 3)),
            )
            n_max = int(rng.integers(4, 32))
            res = simulate(SimWork.from_profile(profile, e_c=1), DynamicAllocation(1, n_max), DEFAULT)
            assert res.max_n <= min(n_max, DEFAULT.capacity)

    def test_rule_never_exceeds_prediction(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            profile = synthetic_profile(
                rng,
                stage_works=(float(rng.uniform(100, 800)),),
                tasks_per_stage=(int(rng.integers(50, 300)),),
            )
            res = simulate(SimWork.from_profile(profile, e_c=1), RuleAllocation(17), DEFAULT)
            assert res.max_n <= 17

    def test_deterministic(self):
        work = flat_work(750.0, crit=12.0, driver=3.0)
        a = simulate(work, DynamicAllocation(1, 48), DEFAULT)
        b = simulate(work, DynamicAllocation(1, 48), DEFAULT)
        assert a.skyline == b.skyline
        assert a.runtime == b.runtime

    def test_da_overshoots_rule_on_bursty_work(self):
        # a short parallel burst followed by a long low-parallelism tail:
        # dynamic allocation doubles straight past what the tail can use
        work = SimWork(
            query_id="bursty",
            driver_time=0.0,
            stages=(StageWork(2000.0, 0.0), StageWork(360.0, 120.0)),
            e_c=1,
        )
        fast = ClusterModel(allocation_lag=1.0, grant_batch=16, capacity=200)
        res_da = simulate(work, DynamicAllocation(1, 48, idle_timeout=240.0), fast)
        res_rule = simulate(work, RuleAllocation(12, idle_timeout=240.0), fast)
        assert res_da.max_n > res_rule.max_n
        assert res_da.auc > res_rule.auc

    def test_idle_executors_released(self):
        # all work finishes in ~10 s on 10 executors but a 100 s critical
        # tail keeps the query alive; idle executors go away after 20 s
        work = flat_work(100.0, crit=100.0)
        res = simulate(work, RuleAllocation(10, idle_timeout=20.0), INSTANT)
        assert res.runtime == 100.0
        assert res.max_n == 10
        assert res.skyline.samples[-1][1] == 1
        assert res.auc < 10 * 100.0

    def test_work_conservation(self):
        rng = np.random.default_rng(3)
        for _ in range(25):
            n_stages = int(rng.integers(1, 5))
            profile = synthetic_profile(
                rng,
                stage_works=tuple(float(w) for w in rng.uniform(20, 300, n_stages)),
                tasks_per_stage=tuple(int(t) for t in rng.integers(5, 150, n_stages)),
                driver_time=float(rng.uniform(0, 5)),
            )
            work = SimWork.from_profile(profile, e_c=1)
            res = simulate(work, StaticAllocation(int(rng.integers(1, 40))), DEFAULT)
            assert res.work_consumed == pytest.approx(work.total_work, rel=1e-9)

    def test_capacity_caps_grants(self):
        small = ClusterModel(allocation_lag=1.0, grant_batch=50, capacity=6)
        res = simulate(flat_work(600.0), StaticAllocation(48), small)
        assert res.max_n == 6

    def test_empty_work(self):
        work = SimWork(query_id="empty", driver_time=0.0, stages=(), e_c=1)
        res = simulate(work, StaticAllocation(1), INSTANT)
        assert res.runtime == 0.0
        assert res.auc == 0.0


class TestFromCurve:
    def test_amdahl_shaped_curve(self):
        curve = AmdahlPPM(s=10.0, p=200.0).curve((1, 2, 4, 8, 16, 32))
        work = SimWork.from_curve(curve, query_id="c", e_c=1)
        assert work.driver_time == pytest.approx(10.0, rel=1e-6)
        assert work.total_work == pytest.approx(200.0, rel=1e-6)
        res = simulate(work, StaticAllocation(8), INSTANT)
        assert res.runtime == pytest.approx(10 + 200 / 8, abs=2.0)


class TestComparePolicies:
    def test_identical_policies_give_unit_ratios(self):
        work = flat_work(480.0, qid="q0")
        report = compare_policies([work], [StaticAllocation(6), StaticAllocation(6)], INSTANT)
        for row in report.rows:
            assert row.n_ratio == 1.0
            assert row.auc_ratio == 1.0
            assert row.speedup == 1.0

    def test_static_halving_arithmetic(self):
        work = flat_work(4800.0, qid="q0")
        report = compare_policies([work], [StaticAllocation(24), StaticAllocation(48)], INSTANT)
        sa48 = next(r for r in report.rows if r.policy == "sa:48")
        assert sa48.n_ratio == 2.0
        assert sa48.speedup == 2.0  # half the runtime of the 24-executor baseline
        assert sa48.auc_ratio == 1.0

    def test_validation(self):
        with pytest.raises(ValueError):
            compare_policies([], [StaticAllocation(1), StaticAllocation(2)], INSTANT)
        with pytest.raises(ValueError):
            compare_policies([flat_work(10.0)], [StaticAllocation(1)], INSTANT)
        with pytest.raises(ValueError):
            compare_policies([flat_work(10.0)], [StaticAllocation(1), StaticAllocation(2)], INSTANT, baseline=5)

    def test_aggregate_means(self):
        works = [flat_work(480.0, qid="a"), flat_work(960.0, qid="b")]
        report = compare_policies(works, [StaticAllocation(6), StaticAllocation(12)], INSTANT)
        agg = report.aggregate()
        assert agg["sa:12"]["mean_n_ratio"] == 2.0
        assert agg["sa:6"]["mean_speedup"] == 1.0


class TestPolicyValidation:
    def test_bad_parameters(self):
        with pytest.raises(ValueError):
            StaticAllocation(0)
        with pytest.raises(ValueError):
            DynamicAllocation(4, 2)
        with pytest.raises(ValueError):
            DynamicAllocation(1, 8, ramp_interval=0)
        with pytest.raises(ValueError):
            RuleAllocation(0)
        with pytest.raises(ValueError):
            ClusterModel(allocation_lag=0)
