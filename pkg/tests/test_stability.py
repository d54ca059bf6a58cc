import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from mwlab.arrivals import DETERMINISTIC, PARETO, POISSON, ArrivalPlan, ArrivalSpec, build_episode_schedule
from mwlab.jf import JumpSchedule, RateProfile, Witness, check_rjf
from mwlab.network import Network, mw_schedules
from mwlab.scenarios import three_queue
from mwlab.stability import (BOUNDED, GROWING, INCONCLUSIVE, PASS, StabilityReport, TrendThresholds,
                             detect_jumps, forced_jump_run, geometric_checkpoints, jump_thresholds, monte_carlo,
                             run_witness, sensitivity_check, simulate, step, trend_verdict)

INF = math.inf
LAM2 = (0.5, 0.5, 0.25)


def det_plan(T, lam):
    return ArrivalPlan.stationary(T, [ArrivalSpec(DETERMINISTIC)] * len(lam), lam)


def heavy_plan(T, lam=LAM2, gamma=0.6):
    return ArrivalPlan.stationary(T, [ArrivalSpec(PARETO, gamma=gamma)] * 2 + [ArrivalSpec(POISSON)], lam)


def overload_witness(gamma=0.9):
    net = Network.from_vectors([(1,)])
    return net, Witness(net, (1.2,), 0.0, (gamma,), 0, RateProfile.constant((1.2,)), JumpSchedule(), 0.2)


class TestStep:
    def test_examples(self):
        assert np.array_equal(step((2, 0, 5), (1, 1, 1), (0, 3, 0)), (1, 3, 4))
        assert np.array_equal(step((0, 0), (1, 1), (0.5, 2)), (0.5, 2))
        assert np.array_equal(step((1, 1), (2, 0), (0, 0)), (0, 1))

    def test_dimension_mismatch(self):
        with pytest.raises(ValueError):
            step((1, 1), (1,), (0, 0))

    @given(st.lists(st.tuples(st.floats(0, 10), st.floats(0, 3), st.floats(0, 5), st.floats(0, 5)),
                    min_size=1, max_size=4))
    def test_monotone_in_arrivals(self, rows):
        q, mu, a, extra = (np.array(c) for c in zip(*rows))
        assert np.sum(step(q, mu, a + extra)) >= np.sum(step(q, mu, a))


class TestSimulate:
    def test_zero_arrivals(self, pair_net):
        tr = simulate(pair_net, det_plan(200, (0, 0, 0)), 200, seed=0)
        assert np.all(tr.Q == 0)

    def test_replay_identical(self, pair_net):
        a = simulate(pair_net, heavy_plan(500), 500, seed=4)
        b = simulate(pair_net, heavy_plan(500), 500, seed=4)
        assert np.array_equal(a.Q, b.Q) and np.array_equal(a.arrivals, b.arrivals)

    def test_interior_deterministic_plateaus(self, pair_net):
        tr = simulate(pair_net, det_plan(10_000, LAM2), 10_000, seed=0)
        norms = np.linalg.norm(tr.Q, axis=1)
        assert norms[tr.slots > 5000].max() <= norms[tr.slots <= 1000].max() + 1e-9
        assert norms.max() < 5

    def test_plan_too_short(self, pair_net):
        with pytest.raises(ValueError):
            simulate(pair_net, det_plan(10, LAM2), 20, seed=0)

    @given(st.integers(0, 2**32 - 1), st.integers(5, 60))
    def test_evolution_identity(self, seed, T):
        net = three_queue()
        tr = simulate(net, heavy_plan(T), T, seed=seed, keep_schedules=True)
        assert np.all(tr.Q[0] == 0)
        for t in range(T):
            q = tr.state(t)
            top = float((net.service_set @ q).max())
            allowed = [tuple(v) for v in mw_schedules(net, q, tol=1e-9 * max(1.0, top))]
            assert tuple(tr.schedules[t]) == min(allowed)
            assert np.array_equal(tr.state(t + 1), np.maximum(q - tr.schedules[t], 0) + tr.arrivals[t])

    def test_trace_csv(self, pair_net):
        tr = simulate(pair_net, heavy_plan(20), 20, seed=1)
        lines = tr.to_csv(stride=5).splitlines()
        assert lines[0] == "slot,Q_1,Q_2,Q_3,A_1,A_2,A_3"
        assert [int(l.split(",")[0]) for l in lines[1:]] == [0, 5, 10, 15, 20]


class TestJumps:
    def test_threshold_at_last_slot(self):
        th = jump_thresholds(10.0, 100, 2.0)
        assert th[-1] == pytest.approx(11 / (2 * math.log(11)))

    def test_zero_arrivals(self):
        log = detect_jumps(np.zeros((50, 3)), 10.0, 50, 1.0, gamma=(0.4, 0.4, INF))
        assert log.entries == [] and log.counts.sum() == 0 and log.budget_ok

    def test_planted_jump(self):
        th = jump_thresholds(10.0, 50, 1.0)
        a = np.zeros((50, 3))
        a[17, 1] = 2 * th[17]
        log = detect_jumps(a, 10.0, 50, 1.0, gamma=(0.4, 0.4, INF))
        assert [(e[0], e[1]) for e in log.entries] == [(17, 1)]
        assert all(e[2] > e[3] for e in log.entries)

    @given(st.integers(0, 1000))
    def test_subthreshold_perturbation_invariance(self, seed):
        rng = np.random.default_rng(seed)
        th = jump_thresholds(20.0, 80, 1.0)
        a = rng.pareto(0.8, (80, 3))
        b = a.copy()
        below = a <= th[:, None]
        b[below] = rng.uniform(0, 1, below.sum()) * th[:, None].repeat(3, 1)[below]
        la, lb = detect_jumps(a, 20.0, 80, 1.0), detect_jumps(b, 20.0, 80, 1.0)
        assert la.entries == lb.entries


class TestSensitivity:
    def test_zero_arrivals(self, pair_net):
        tr = simulate(pair_net, det_plan(100, (0, 0, 0)), 100, seed=0)
        assert sensitivity_check(tr, pair_net, (0, 0, 0)).C_hat == pytest.approx(0.0, abs=1e-12)

    def test_exact_rates_flat(self, pair_net):
        tr = simulate(pair_net, det_plan(2000, LAM2), 2000, seed=0)
        rep = sensitivity_check(tr, pair_net, LAM2)
        assert np.isfinite(rep.C_hat) and rep.C_hat < 2

    def test_constant_stable_across_horizons(self, pair_net):
        vals = []
        for T in (1000, 10_000, 100_000):
            tr = simulate(pair_net, heavy_plan(T, gamma=0.8), T, seed=5, stride=max(1, T // 500))
            vals.append(sensitivity_check(tr, pair_net, LAM2).C_hat)
        assert max(vals) <= 2 * min(vals)


class TestTrend:
    def test_verdict_is_pure(self, pair_net):
        rep = monte_carlo(pair_net, heavy_plan(512), R=16, seed=3, queue=2)
        back = StabilityReport.from_json(rep.to_json())
        assert back.recompute() == rep.trend

    def test_linear_growth_detected(self):
        h = geometric_checkpoints(1024)[1:]
        vals = np.outer(np.random.default_rng(0).uniform(0.5, 1.5, 32), h)
        assert trend_verdict(vals, h, TrendThresholds(), 0)["verdict"] == GROWING

    def test_flat_is_bounded(self):
        h = geometric_checkpoints(1024)[1:]
        vals = np.random.default_rng(0).uniform(0.9, 1.1, (32, len(h)))
        assert trend_verdict(vals, h, TrendThresholds(), 0)["verdict"] == BOUNDED

    def test_needs_replications(self, pair_net):
        with pytest.raises(ValueError):
            monte_carlo(pair_net, heavy_plan(64), R=4)

    def test_threads_do_not_change_results(self, pair_net):
        a = monte_carlo(pair_net, heavy_plan(256), R=8, seed=2, queue=2, threads=1)
        b = monte_carlo(pair_net, heavy_plan(256), R=8, seed=2, queue=2, threads=2)
        assert a.to_json() == b.to_json()


@pytest.fixture(scope="module")
def case3():
    return check_rjf(three_queue(), LAM2, (0.4, 0.4, INF), 0.05, 2).witness


class TestWitnessRuns:
    def test_forced_run_passes(self, pair_net, case3):
        res = forced_jump_run(pair_net, case3, 10_000)
        assert res.status == PASS
        assert res.value >= case3.value * 10_000 / 2 - 0.02 * 10_000

    def test_short_horizon_inconclusive(self, pair_net, case3):
        assert forced_jump_run(pair_net, case3, 50).status == INCONCLUSIVE

    def test_overloaded_single_queue(self):
        net, w = overload_witness()
        res = forced_jump_run(net, w, 5000)
        assert res.status == PASS
        assert res.value == pytest.approx(0.2 * 5000, rel=0.01)

    def test_pure_rate_instability_exceeds(self):
        net, w = overload_witness(0.9)
        ep = build_episode_schedule(w, 20_000)
        assert run_witness(net, ep.plan, ep, R=64, seed=0).probability >= 0.9

    def test_report_fields(self, pair_net, case3):
        ep = build_episode_schedule(case3, 1000)
        rep = run_witness(pair_net, ep.plan, ep, R=16, seed=1)
        s = rep.summary()
        assert s["threshold"] == pytest.approx(case3.value * 500)
        assert len(s["jump_event_rate"]) == 2 and len(s["fluc_event_rate"]) == 3
