import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from quasinv import heisenberg as hz
from quasinv.errors import DegenerateEstimateError, InputError

H3 = hz.HeisenbergLikeGroup.heisenberg3()
finite = dict(allow_nan=False, allow_infinity=False)


def vec(n):
    return st.lists(st.floats(-5, 5, **finite), min_size=n, max_size=n).map(np.array)


@st.composite
def elements(draw, group=H3):
    return group.element(draw(vec(group.w_dim)), draw(vec(group.c_dim)))


def close(a, b, tol=1e-12):
    return np.allclose(a.as_vector(), b.as_vector(), rtol=0, atol=tol * max(1.0, np.abs(a.as_vector()).max()))


# --- group structure ----------------------------------------------------------


def test_identity_and_inverse_examples():
    g = H3.element([1.5, -2.0], [0.3])
    e = H3.identity()
    assert close(H3.multiply(e, g), g)
    assert close(H3.multiply(g, H3.inverse(g)), e)
    np.testing.assert_array_equal(H3.inverse(g).as_vector(), -g.as_vector())


def test_product_of_generators():
    g = H3.multiply(H3.element([1, 0], [0]), H3.element([0, 1], [0]))
    np.testing.assert_allclose(g.w, [1, 1])
    np.testing.assert_allclose(g.c, [0.5])


def test_bracket_of_generators():
    b = H3.bracket(H3.element([1, 0], [0]), H3.element([0, 1], [0]))
    np.testing.assert_array_equal(b.w, [0, 0])
    np.testing.assert_array_equal(b.c, [1.0])


@given(a=elements(), b=elements(), c=elements())
def test_associativity(a, b, c):
    assert close(H3.multiply(H3.multiply(a, b), c), H3.multiply(a, H3.multiply(b, c)))


@settings(max_examples=50)
@given(seed=st.integers(0, 2**32), data=st.data())
def test_random_group_axioms(seed, data):
    G = hz.HeisenbergLikeGroup.random(4, 2, seed)
    a, b, c = (data.draw(elements(G)) for _ in range(3))
    assert close(G.multiply(G.multiply(a, b), c), G.multiply(a, G.multiply(b, c)))
    assert close(G.multiply(a, G.inverse(a)), G.identity())
    assert np.all(G.bracket(a, a).as_vector() == 0)
    assert np.all(G.bracket(a, G.bracket(b, c)).as_vector() == 0)


@given(a=elements(), b=elements(), lam=st.floats(0.1, 4, **finite))
def test_dilation_is_automorphism(a, b, lam):
    lhs = H3.dilate(H3.multiply(a, b), lam)
    rhs = H3.multiply(H3.dilate(a, lam), H3.dilate(b, lam))
    assert close(lhs, rhs, 1e-11)


def test_rejects_non_skew_form():
    with pytest.raises(InputError):
        hz.HeisenbergLikeGroup(np.ones((2, 2, 1)))


def test_rejects_degenerate_form():
    # bracket generates nothing: fails the Hormander condition
    with pytest.raises(InputError):
        hz.HeisenbergLikeGroup(np.zeros((2, 2, 1)))


def test_random_groups_are_seeded():
    a = hz.HeisenbergLikeGroup.random(3, 2, 5).omega_tensor
    b = hz.HeisenbergLikeGroup.random(3, 2, 5).omega_tensor
    np.testing.assert_array_equal(a, b)


# --- Brownian motion ------------------------------------------------------------------


def test_bm_at_time_zero_is_identity():
    s = hz.sample_bm(H3, 0.0, 100, 1)
    assert np.all(s.terminal.as_vector() == 0)


def test_bm_needs_enough_steps():
    with pytest.raises(InputError):
        hz.sample_bm(H3, 1.0, 50, 1)


def test_bm_reproducible():
    a = hz.sample_bm(H3, 1.0, 200, 9, horizontal=True).terminal
    b = hz.sample_bm(H3, 1.0, 200, 9, horizontal=True).terminal
    np.testing.assert_array_equal(a.as_vector(), b.as_vector())


def test_horizontal_pool_levy_area_variance():
    pool = hz.heat_kernel_mc(H3, 1.0, 20_000, 200, 4, horizontal=True)
    assert pool.c_variance(0).within(0.25)
    for j in range(2):
        assert pool.w_variance(j).within(1.0)


def test_full_pool_center_variance_and_symmetry():
    pool = hz.heat_kernel_mc(H3, 1.0, 20_000, 200, 5)
    assert pool.c_variance(0).within(1.25)
    assert pool.c_skewness(0).within(0.0)


def test_pool_small_time_concentrates():
    t = 1e-4
    pool = hz.heat_kernel_mc(H3, t, 10_000, 100, 6)
    assert np.abs(pool.points).max() < 5 * math.sqrt(t * 3)


def test_general_group_center_variance():
    G = hz.HeisenbergLikeGroup.random(3, 2, 11)
    t = 0.8
    pool = hz.heat_kernel_mc(G, t, 20_000, 200, 12, horizontal=True)
    omega = G.omega_tensor
    for k in range(G.c_dim):
        expected = t * t / 8 * float(np.sum(omega[:, :, k] ** 2))
        assert pool.c_variance(k).within(expected)


def test_step_refinement():
    coarse = hz.heat_kernel_mc(H3, 1.0, 20_000, 100, 13, horizontal=True).c_variance(0)
    fine = hz.heat_kernel_mc(H3, 1.0, 20_000, 200, 14, horizontal=True).c_variance(0)
    assert abs(coarse.value - fine.value) < 2 * math.hypot(coarse.std_error, fine.std_error)


def test_pool_csv(tmp_path):
    pool = hz.heat_kernel_mc(H3, 0.5, 10_000, 100, 1)
    pool.to_csv(tmp_path / "pool.csv")
    lines = (tmp_path / "pool.csv").read_text().splitlines()
    assert lines[0] == "sample,w_0,w_1,c_0"
    assert len(lines) == 10_001


def test_pool_needs_enough_samples():
    with pytest.raises(InputError):
        hz.heat_kernel_mc(H3, 1.0, 9_999, 100, 1)


# --- density estimation ------------------------------------------------------------------


def test_kde_matches_direct_sum():
    # standardised coordinates, bandwidth h: average of N(x; x_i, diag(h s)^2) up to a constant
    rng = np.random.default_rng(2)
    ref = rng.standard_normal((300, 2)) * [1.0, 3.0]
    kde = hz.ProductGaussianKde(ref, bandwidth=0.4)
    width = 0.4 * ref.std(axis=0)
    pts = rng.standard_normal((20, 2))
    diff = (pts[:, None, :] - ref[None, :, :]) / width
    direct = np.log(np.mean(np.exp(-0.5 * np.sum(diff**2, axis=-1)), axis=1))
    offset = kde.log_density(pts) - direct
    np.testing.assert_allclose(offset, offset[0], atol=1e-12)


def test_default_bandwidth_oversmooths_silverman():
    assert hz.default_bandwidth(1000, 3) == pytest.approx(2 * hz.silverman_bandwidth(1000, 3))


@pytest.fixture(scope="module")
def ratio_estimator():
    pool = hz.heat_kernel_mc(H3, 1.0, 20_000, 200, 31)
    return hz.RatioEstimator(H3, pool, None)


def test_identity_shift_ratio_is_one(ratio_estimator):
    est = ratio_estimator.estimate(H3.identity(), 2.0)
    assert est.lp_estimate.value == 1.0


def test_ratio_respects_jensen(ratio_estimator):
    for s in (0.25, 0.5, 1.0):
        est = ratio_estimator.estimate(H3.element([s, 0.0], [0.0]), 2.0).lp_estimate
        assert est.value >= 1 - 3 * est.std_error


def test_ratio_degenerate_far_shift(ratio_estimator):
    with pytest.raises(DegenerateEstimateError):
        ratio_estimator.estimate(H3.element([12.0, 0.0], [0.0]), 3.0)


def test_ratio_monotone_in_median():
    meds = []
    values = np.zeros((10, 3))
    for i, seed in enumerate(hz.replica_seeds(8, 10)):
        pool = hz.heat_kernel_mc(H3, 1.0, 10_000, 100, seed)
        est = hz.RatioEstimator(H3, pool, None)
        for j, s in enumerate((0.25, 0.5, 1.0)):
            values[i, j] = est.estimate(H3.element([s, 0.0], [0.0]), 2.0).lp_estimate.value
    meds = np.median(values, axis=0)
    assert np.all(np.diff(meds) >= 0)


def test_rn_ratio_rejects_small_p():
    with pytest.raises(InputError):
        hz.rn_ratio_lp(H3, 1.0, H3.element([1, 0], [0]), 1.0, samples=10_000, steps=100)


# --- bound-shape fit ---------------------------------------------------------------------


def test_fit_rejects_identity_shifts():
    with pytest.raises(InputError):
        hz.bound_shape_fit(H3, 1.0, 2.0, [H3.identity()] * 6, samples=10_000, steps=100)


def test_fit_needs_six_shifts():
    shifts = [H3.element([s, 0], [0]) for s in (0.5, 1.0, 1.5)]
    with pytest.raises(InputError):
        hz.bound_shape_fit(H3, 1.0, 2.0, shifts, samples=10_000, steps=100)


def test_fit_positive_slope():
    s = np.linspace(0.25, 2.0, 6)
    shifts = [H3.element([v, 0.0], [0.0]) for v in s]
    rep = hz.bound_shape_fit(H3, 1.0, 2.0, shifts, samples=20_000, seed=3, distances=s)
    assert rep.slope > 0
    assert rep.r2 >= 0.9


@pytest.mark.slow
def test_halving_time_roughly_doubles_slope():
    # shifts stay within the estimator's reach at t = 0.5 (scaling maps s to sqrt(2) s at t = 1)
    s = np.linspace(0.25, 1.4, 6)
    shifts = [H3.element([v, 0.0], [0.0]) for v in s]
    ratios = []
    for seed in hz.replica_seeds(5, 10):
        try:
            slow = hz.bound_shape_fit(H3, 1.0, 2.0, shifts, samples=20_000, seed=seed, distances=s)
            fast = hz.bound_shape_fit(H3, 0.5, 2.0, shifts, samples=20_000, seed=seed, distances=s)
        except DegenerateEstimateError:
            continue
        ratios.append(fast.slope / slow.slope)
    assert len(ratios) >= 8
    assert 1.5 <= float(np.median(ratios)) <= 2.5
