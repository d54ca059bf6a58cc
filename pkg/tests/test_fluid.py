import numpy as np
import pytest
from hypothesis import given, strategies as st

from mwlab.fluid import EventCapExceeded, integrate_fluid, min_norm_drift, next_event
from mwlab.network import Network
from oracles import in_hull_lp, near_maximizers

CASE1 = (0.5, 0.5, 0.75)
CASE2 = (0.5, 0.5, 0.25)


class TestDrift:
    def test_case_two_drains_first_queue(self, pair_net):
        assert np.allclose(min_norm_drift(pair_net, CASE2, (1, 0, 0)).drift, (-0.5, 0, 0), atol=1e-12)

    def test_case_one_rate(self, pair_net):
        d = min_norm_drift(pair_net, CASE1, (1, 0, 0)).drift
        assert np.allclose(d, (-0.5, 0.125, 0.125), atol=1e-12)
        assert d[2] == pytest.approx((0.75 - 0.5) / 2)

    def test_two_jump_state(self, pair_net):
        q = min_norm_drift(pair_net, CASE2, (1, 1, 0))
        assert np.allclose(q.drift, (-0.5, -0.5, 0.25), atol=1e-12)
        assert [tuple(v) for v in q.schedules(pair_net)] == [(1, 1, 0)]


class TestEvents:
    def test_catch_up(self, pair_net):
        assert next_event(pair_net, CASE1, (1, 0, 0), (-0.5, 0.125, 0.125)) == pytest.approx(1.6)

    def test_zero_hit(self, pair_net):
        assert next_event(pair_net, CASE2, (1, 0, 0), (-0.5, 0, 0)) == pytest.approx(2.0)

    def test_stationary(self, pair_net):
        assert next_event(pair_net, CASE2, (1, 1, 1), (0, 0, 0)) == np.inf


class TestTrajectories:
    def test_case_two(self, pair_net):
        tr = integrate_fluid(pair_net, CASE2, (1, 0, 0), 10)
        assert np.allclose(tr.times, [0, 2], atol=1e-9)
        assert np.allclose(tr.at(2.0), 0, atol=1e-12)
        assert np.allclose(tr.final(), 0)

    def test_case_one(self, pair_net):
        tr = integrate_fluid(pair_net, CASE1, (1, 0, 0), 10)
        assert np.allclose(tr.at(1.6), 0.2, atol=1e-9)
        assert np.allclose(tr.at(4.0), 0, atol=1e-9)
        assert np.allclose(tr.drifts[1], -1 / 12, atol=1e-12)

    def test_zero_stays_zero(self, pair_net):
        tr = integrate_fluid(pair_net, CASE2, (0, 0, 0), 5)
        assert np.allclose(tr.sample(np.linspace(0, 5, 11)), 0)

    def test_csv_columns(self, pair_net):
        lines = integrate_fluid(pair_net, CASE1, (1, 0, 0), 10).to_csv().splitlines()
        assert lines[0] == "t,q_1,q_2,q_3,drift_1,drift_2,drift_3,is_jump"
        assert float(lines[-1].split(",")[0]) == 10.0

    def test_event_cap_reports_partial(self, pair_net):
        with pytest.raises(EventCapExceeded) as info:
            integrate_fluid(pair_net, CASE1, (1, 0, 0), 10, max_events=1)
        assert info.value.partial is not None

    def test_rejects_bad_input(self, pair_net):
        with pytest.raises(ValueError):
            integrate_fluid(pair_net, CASE1, (-1, 0, 0), 1)
        with pytest.raises(ValueError):
            integrate_fluid(pair_net, CASE1, (1, 0, 0), 0)


@st.composite
def instances(draw, n_starts=2):
    ell = draw(st.integers(1, 4))
    k = draw(st.integers(1, 4))
    vecs = draw(st.lists(st.lists(st.integers(0, 3), min_size=ell, max_size=ell), min_size=k, max_size=k))
    net = Network.from_vectors(vecs)
    cap = net.service_set.max(axis=0)
    lam = np.array([draw(st.floats(0, 1)) for _ in range(ell)]) * np.maximum(cap, 0.5)
    starts = [np.array([draw(st.floats(0, 4)) for _ in range(ell)]) for _ in range(n_starts)]
    return net, lam, starts


@given(instances())
def test_nonnegative_and_drift_membership(inst):
    net, lam, (q0, _) = inst
    tr = integrate_fluid(net, lam, q0, 5.0)
    ts = np.linspace(0, 5, 41)
    assert tr.sample(ts).min() >= -1e-9
    ends = list(tr.times[1:]) + [tr.t_end]
    for t0, t1, d in zip(tr.times, ends, tr.drifts):
        if t1 - t0 < 1e-9:
            continue
        x = tr.at(0.5 * (t0 + t1))
        assert in_hull_lp(near_maximizers(net.service_set, x), lam - d)


@given(instances())
def test_nonexpansive(inst):
    net, lam, (q0, p0) = inst
    ts = np.linspace(0, 5, 101)
    a = integrate_fluid(net, lam, q0, 5.0).sample(ts)
    b = integrate_fluid(net, lam, p0, 5.0).sample(ts)
    gap = np.linalg.norm(a - b, axis=1)
    assert np.all(np.diff(gap) <= 1e-7)


@given(instances(n_starts=1), st.floats(0.2, 5.0))
def test_scale_invariance(inst, alpha):
    net, lam, (q0,) = inst
    ts = np.linspace(0, 3, 31)
    base = integrate_fluid(net, lam, q0, 3.0)
    scaled = integrate_fluid(net, lam, alpha * q0, 3.0 * alpha)
    assert np.allclose(scaled.sample(alpha * ts), alpha * base.sample(ts), atol=1e-9, rtol=0)


@given(instances(n_starts=1))
def test_deterministic(inst):
    net, lam, (q0,) = inst
    a = integrate_fluid(net, lam, q0, 4.0)
    b = integrate_fluid(net, lam, q0, 4.0)
    assert np.array_equal(a.times, b.times) and np.array_equal(a.right, b.right)
