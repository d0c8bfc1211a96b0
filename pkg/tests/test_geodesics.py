import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from quasinv import geodesics as geo
from quasinv import heisenberg as hz
from quasinv.errors import InfeasibleError, InputError

H3 = hz.HeisenbergLikeGroup.heisenberg3()
finite = dict(allow_nan=False, allow_infinity=False)
coords = st.floats(-3, 3, **finite)


def random_path(group, nodes, seed):
    rng = np.random.default_rng(seed)
    w = np.cumsum(rng.standard_normal((nodes + 1, group.w_dim)) * 0.2, axis=0)
    c = np.cumsum(rng.standard_normal((nodes + 1, group.c_dim)) * 0.2, axis=0)
    w[0], c[0] = 0.0, 0.0
    return geo.DiscretePath(group, w, c)


# --- lengths ----------------------------------------------------------------------


def test_constant_path_has_zero_length():
    path = geo.DiscretePath(H3, np.zeros((11, 2)), np.zeros((11, 1)))
    assert geo.path_length(path) == 0.0


def test_straight_horizontal_segment():
    target = H3.element([1.2, -0.7], [0.0])
    path = geo.DiscretePath.straight(H3, target, 100)
    assert geo.path_length(path) == pytest.approx(math.hypot(1.2, 0.7), abs=1e-6)
    assert geo.is_horizontal(path).horizontal


@pytest.mark.parametrize("nodes", [16, 37, 100])
def test_pure_center_segment(nodes):
    metric = geo.MetricSpec(c_weight=2.5)
    path = geo.DiscretePath.straight(H3, H3.element([0, 0], [-1.7]), nodes)
    assert geo.path_length(path, metric) == pytest.approx(1.7 * math.sqrt(2.5), rel=1e-14)
    check = geo.is_horizontal(path)
    assert not check.horizontal
    assert check.max_violation == pytest.approx(1.7 / nodes)


@settings(max_examples=30, deadline=None)
@given(
    seed=st.integers(0, 2**32),
    kw=st.lists(coords, min_size=2, max_size=2),
    kc=coords,
    cw=st.floats(0.1, 5, **finite),
)
def test_length_left_invariant(seed, kw, kc, cw):
    path = random_path(H3, 40, seed)
    metric = geo.MetricSpec(c_weight=cw)
    moved = path.translate(H3.element(kw, [kc]))
    assert abs(geo.path_length(moved, metric) - geo.path_length(path, metric)) < 1e-10


def test_node_doubling_is_second_order():
    # smooth path sampled at N, 2N, 4N: errors shrink by about 4 each time
    def smooth(n):
        s = np.linspace(0, 1, n + 1)
        w = np.stack([np.sin(2 * s), s**2], axis=1)
        c = (0.3 * np.cos(3 * s) - 0.3)[:, None]
        return geo.path_length(geo.DiscretePath(H3, w, c))

    l1, l2, l4 = smooth(32), smooth(64), smooth(128)
    ratio = (l2 - l1) / (l4 - l2)
    assert 3.0 < ratio < 5.0
    assert abs(l4 - l2) < 5e-4


def test_lifted_circle_is_horizontal():
    # the smooth lift misses each chord's circular segment, h^2 / 12 relative to |dw|
    path = geo.lifted_circle(400)
    assert geo.is_horizontal(path, tol=(2 * math.pi / 400) ** 2 / 12 * 1.01).horizontal
    assert geo.path_length(path) == pytest.approx(2 * math.pi, rel=1e-4)
    assert path.end.c[0] == pytest.approx(math.pi)


def test_lifted_circle_violation_is_discretisation_error():
    # per-segment violation of the midpoint rule shrinks like N^-3
    v = [geo.is_horizontal(geo.lifted_circle(n)).max_violation for n in (100, 200, 400)]
    assert 7.0 < v[0] / v[1] < 9.0
    assert 7.0 < v[1] / v[2] < 9.0


def test_path_csv(tmp_path):
    path = geo.DiscretePath.straight(H3, H3.element([1, 0], [0]), 16)
    path.to_csv(tmp_path / "p.csv")
    lines = (tmp_path / "p.csv").read_text().splitlines()
    assert lines[0] == "node,t,w_0,w_1,c_0"
    assert len(lines) == 18


# --- Riemannian distance ---------------------------------------------------------------


def test_riemannian_identity():
    res = geo.riemannian_distance(H3, H3.identity())
    assert res.distance == 0.0


def test_riemannian_horizontal_target():
    res = geo.riemannian_distance(H3, H3.element([0.6, 0.8], [0.0]), nodes=32)
    assert res.distance == pytest.approx(1.0, abs=1e-4)
    assert res.distance >= 1.0 - 1e-9


def test_riemannian_small_center_target():
    res = geo.riemannian_distance(H3, H3.element([0, 0], [0.3]), nodes=32)
    assert 0 <= res.distance <= 0.3 + 1e-9


def test_riemannian_never_worse_than_candidates():
    cand = geo.lifted_circle(32, radius=0.5, group=H3)
    res = geo.riemannian_distance(H3, cand.end, nodes=32, candidates=[cand])
    assert res.distance <= geo.path_length(cand) + 1e-12


def test_riemannian_rejects_few_nodes():
    with pytest.raises(InputError):
        geo.riemannian_distance(H3, H3.element([1, 0], [0]), nodes=8)
    with pytest.raises(InputError):
        geo.riemannian_distance(H3, H3.element([1, 0], [0]), starts=3)


def test_riemannian_reproducible():
    t = H3.element([0.3, -0.2], [0.9])
    a = geo.riemannian_distance(H3, t, nodes=24, seed=4)
    b = geo.riemannian_distance(H3, t, nodes=24, seed=4)
    assert a.distance == b.distance
    np.testing.assert_array_equal(a.path.w, b.path.w)


# --- horizontal distance -------------------------------------------------------------------


def test_cc_horizontal_target_is_straight():
    res = geo.cc_distance(H3, H3.element([-1.0, 2.0], [0.0]), nodes=32)
    assert res.distance == pytest.approx(math.sqrt(5), abs=1e-4)
    assert geo.is_horizontal(res.path).horizontal


def test_cc_center_target_path_is_horizontal_and_reaches_target():
    res = geo.cc_distance(H3, H3.element([0, 0], [0.5]), nodes=48)
    assert geo.is_horizontal(res.path).horizontal
    assert res.constraint_residual < 1e-8
    assert res.distance == pytest.approx(2 * math.sqrt(math.pi * 0.5), rel=0.02)


@settings(max_examples=5, deadline=None)
@given(w=st.lists(st.floats(-1, 1, **finite), min_size=2, max_size=2), c=st.floats(-1, 1, **finite))
def test_cc_dominates_riemannian(w, c):
    target = H3.element(w, [c])
    cc = geo.cc_distance(H3, target, nodes=32).distance
    rm = geo.riemannian_distance(H3, target, nodes=32).distance
    assert cc >= rm - 1e-6


def test_triangle_inequality_random_group():
    G = hz.HeisenbergLikeGroup.random(4, 2, 3)
    rng = np.random.default_rng(5)
    for _ in range(2):
        g1 = G.element(rng.normal(size=4) * 0.5, rng.normal(size=2) * 0.5)
        g2 = G.element(rng.normal(size=4) * 0.5, rng.normal(size=2) * 0.5)
        d = lambda g: geo.riemannian_distance(G, g, nodes=24).distance  # noqa: E731
        assert d(G.multiply(g1, g2)) <= d(g1) + d(g2) + 2e-6


def test_cc_unreachable_is_infeasible():
    # one start, one round and almost no iterations cannot close the constraint
    cfg = geo.OptimizerConfig(max_iter=1, rounds=1)
    with pytest.raises(InfeasibleError):
        geo.cc_distance(H3, H3.element([0, 0], [5.0]), nodes=16, config=cfg)


def test_distance_csv(tmp_path):
    res = geo.cc_distance(H3, H3.element([1.0, 0.0], [0.0]), nodes=16)
    geo.write_distance_csv([res], H3, tmp_path / "d.csv")
    header = (tmp_path / "d.csv").read_text().splitlines()[0]
    assert header == ",".join(geo.distance_header(H3))
