import numpy as np
import pytest
from hypothesis import given, strategies as st

from mwlab.jf import PointCloud
from mwlab.lyapunov import build_distance_lyapunov, heavy_lattice, lattice_clouds, user_candidate, verify_special
from mwlab.scenarios import three_queue

LAM2 = (0.5, 0.5, 0.25)
EPS = 0.05


@pytest.fixture(scope="module")
def one_heavy_clouds():
    return lattice_clouds(three_queue(), LAM2, EPS, [0], 1500, seed=0, max_total=2)


class TestBuild:
    def test_cloud_points_are_zero(self):
        pts = np.array([[0, 0, 0], [1, 2, 0], [0.5, 0, 0.5]])
        V = build_distance_lyapunov([PointCloud(pts)])
        assert np.allclose(V(pts), 0)

    def test_euclidean(self):
        V = build_distance_lyapunov([PointCloud(np.zeros((1, 3)))])
        assert V(np.array([3.0, 4.0, 0.0])) == pytest.approx(5.0)

    def test_requires_origin(self):
        with pytest.raises(ValueError):
            build_distance_lyapunov([PointCloud(np.ones((1, 3)))])

    @given(st.lists(st.tuples(*[st.floats(0, 5)] * 3), min_size=1, max_size=10),
           st.tuples(*[st.floats(0, 5)] * 3), st.lists(st.tuples(*[st.floats(0, 6)] * 3), min_size=1, max_size=10))
    def test_adding_points_never_increases(self, pts, extra, queries):
        base = np.vstack([np.zeros((1, 3)), np.array(pts)])
        V1 = build_distance_lyapunov([PointCloud(base)])
        V2 = build_distance_lyapunov([PointCloud(base), PointCloud(np.array([extra]))])
        q = np.array(queries)
        assert np.all(V2(q) <= V1(q) + 1e-12)

    @given(st.lists(st.tuples(*[st.floats(0, 5)] * 3), min_size=1, max_size=10),
           st.tuples(*[st.floats(0, 6)] * 3), st.integers(0, 2), st.floats(0, 10))
    def test_heavy_closure_monotone(self, pts, x, j, alpha):
        cloud = PointCloud(np.vstack([np.zeros((1, 3)), np.array(pts)]))
        V = build_distance_lyapunov([cloud], heavy_set=[j], heavy_closure=True)
        x = np.array(x)
        y = x.copy()
        y[j] += alpha
        assert V(y) <= V(x) + 1e-12
        assert V(x) <= float(cloud.distance(x)) + 1e-12


class TestVerify:
    def test_identity_on_heavy_target_fails_monotonicity(self, pair_net):
        V = user_candidate(lambda x: float(x[2]), heavy_set=[2], epsilon=EPS)
        rep = verify_special(V, pair_net, LAM2, EPS, 2, samples=400, box=5.0)
        assert not rep[4].passed
        assert rep[4].counterexamples

    def test_zero_function_fails_positivity_only(self, pair_net):
        V = user_candidate(lambda x: 0.0, heavy_set=[0, 1], epsilon=EPS)
        rep = verify_special(V, pair_net, LAM2, EPS, 2, samples=400, box=5.0)
        assert [rep[k].passed for k in (1, 2, 3, 4)] == [True, True, False, True]
        assert not rep.passed

    def test_counterexamples_recheck(self, pair_net):
        V = user_candidate(lambda x: 0.0, heavy_set=[0], epsilon=EPS)
        rep = verify_special(V, pair_net, LAM2, EPS, 2, samples=200, box=5.0)
        for ex in rep[3].counterexamples:
            assert ex["x"][2] > 0 and V(np.array(ex["x"])) <= 0

    def test_distance_candidate_is_lipschitz(self, pair_net, one_heavy_clouds):
        V = build_distance_lyapunov(one_heavy_clouds, [0], EPS)
        assert verify_special(V, pair_net, LAM2, EPS, 2, samples=1000)[1].passed

    def test_closed_candidate_single_heavy_queue_passes(self, pair_net, one_heavy_clouds):
        V = build_distance_lyapunov(one_heavy_clouds, [0], EPS, heavy_closure=True)
        rep = verify_special(V, pair_net, LAM2, EPS, 2, samples=2000)
        assert rep.passed, rep.to_json()

    def test_tol_monotone(self, pair_net, one_heavy_clouds):
        V = build_distance_lyapunov(one_heavy_clouds, [0], EPS)
        a = verify_special(V, pair_net, LAM2, EPS, 2, samples=500, tol=0.1 * EPS)
        b = verify_special(V, pair_net, LAM2, EPS, 2, samples=500, tol=0.5 * EPS)
        assert b[2].worst_margin == pytest.approx(a[2].worst_margin + 0.4 * EPS)
        for k in (1, 2, 3, 4):
            assert b[k].passed or not a[k].passed

    def test_report_json(self, pair_net):
        V = user_candidate(lambda x: float(np.linalg.norm(x)), epsilon=EPS)
        rep = verify_special(V, pair_net, LAM2, EPS, 2, samples=200, box=3.0)
        d = rep.to_dict()
        assert [p["property"] for p in d["properties"]] == ["lipschitz", "drift", "positivity", "heavy_monotone"]
        assert d["overall"] == all(p["passed"] for p in d["properties"])

    def test_sample_floor(self, pair_net):
        with pytest.raises(ValueError):
            verify_special(user_candidate(lambda x: 0.0), pair_net, LAM2, EPS, 2, samples=10)


def test_heavy_lattice():
    got = [tuple(n) for n in heavy_lattice([0, 1], 3, 2)]
    assert sorted(got) == sorted([(0, 0, 0), (0, 1, 0), (0, 2, 0), (1, 0, 0), (1, 1, 0), (2, 0, 0)])
