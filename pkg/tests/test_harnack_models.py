import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from quasinv import harnack_models as hm
from quasinv import kernel_duality as kd
from quasinv.errors import InputError

finite = dict(allow_nan=False, allow_infinity=False)


# --- c(t) ---------------------------------------------------------------------


def test_c_of_values():
    assert hm.c_of(0.0) == 1.0
    assert hm.c_of(1.0) == pytest.approx(1 / (math.e - 1), rel=1e-15)
    assert hm.c_of(1.0) == pytest.approx(0.581976707, abs=1e-9)
    assert hm.c_of(-1.0) == pytest.approx(1.581976707, abs=1e-9)


@given(t=st.floats(-30, 30, **finite))
def test_c_of_reflection_identity(t):
    assert hm.c_of(-t) - hm.c_of(t) == pytest.approx(t, abs=1e-12 * max(1.0, abs(t)))


@given(t=st.floats(-20, 20, **finite), dt=st.floats(1e-3, 5, **finite))
def test_c_of_strictly_decreasing(t, dt):
    assert hm.c_of(t + dt) < hm.c_of(t)


def test_c_of_continuous_at_zero():
    assert hm.c_of(1e-9) == pytest.approx(1.0, abs=1e-9)
    assert hm.c_of(-1e-9) == pytest.approx(1.0, abs=1e-9)


# --- kernels --------------------------------------------------------------------------


@pytest.mark.parametrize("dim", [1, 2, 3])
def test_euclidean_kernel_mass(dim):
    assert hm.EuclideanHeatKernel(dim).mass(0.7) == pytest.approx(1.0, abs=1e-6)


def test_torus_kernel_mass_and_symmetry():
    K = hm.TorusHeatKernel(1, (2 * math.pi,))
    assert K.mass(0.3) == pytest.approx(1.0, abs=1e-12)
    x = np.linspace(0, 2 * math.pi, 7)[:, None]
    np.testing.assert_allclose(K.density(0.5, x, [1.0]), K.density(0.5, [1.0], x), rtol=1e-14)


def test_large_torus_matches_plane():
    torus = hm.TorusHeatKernel(1, (50.0,))
    plane = hm.EuclideanHeatKernel(1)
    x = np.linspace(-3, 3, 61)[:, None]
    diff = np.abs(torus.density(1.0, x, [0.0]) - plane.density(1.0, x, [0.0]))
    assert diff.max() < 1e-10


def test_torus_distance_wraps():
    K = hm.TorusHeatKernel(2, (2 * math.pi, 4.0))
    assert K.distance([0.1, 0.0], [2 * math.pi - 0.1, 3.5]) == pytest.approx(math.hypot(0.2, 0.5))


# --- integrated Harnack ---------------------------------------------------------------------


def test_lhs_examples():
    K1, K3 = hm.EuclideanHeatKernel(1), hm.EuclideanHeatKernel(3)
    assert hm.integrated_harnack_lhs(K1, [0.3], [0.3], 1.0, 2.0) == 1.0
    assert hm.integrated_harnack_lhs(K1, [0.0], [1.0], 1.0, 2.0) == pytest.approx(1.648721, abs=1e-6)
    assert hm.integrated_harnack_lhs(K3, [0, 0, 0], [2, 0, 0], 0.5, 3.0) == pytest.approx(math.exp(8), rel=1e-12)


def test_lhs_quadrature_one_dimension():
    K = hm.EuclideanHeatKernel(1)
    q = hm.integrated_harnack_lhs(K, [0.0], [1.0], 1.0, 2.0, method="quadrature")
    assert q == pytest.approx(math.exp(0.5), rel=1e-8)


@settings(max_examples=60, deadline=None)
@given(
    dim=st.integers(1, 4),
    t=st.floats(0.1, 10, **finite),
    p=st.floats(1.0, 5.0, **finite),
    data=st.data(),
)
def test_euclidean_equality_case(dim, t, p, data):
    direction = np.array(data.draw(st.lists(st.floats(-1, 1, **finite), min_size=dim, max_size=dim)))
    dist = data.draw(st.floats(0, 4, **finite))
    norm = np.linalg.norm(direction)
    z = direction / norm * dist if norm > 1e-3 else np.zeros(dim)
    y = np.zeros(dim)
    K = hm.EuclideanHeatKernel(dim)
    exact = math.exp((p - 1) * float(z @ z) / (2 * t))
    assert hm.integrated_harnack_lhs(K, y, z, t, p) == pytest.approx(exact, rel=1e-9)
    rep = hm.check_integrated_harnack(K, y, z, t, p)
    assert abs(rep.margin) <= 1e-9 * max(1.0, rep.rhs)


@settings(max_examples=20, deadline=None)
@given(
    dim=st.integers(1, 2),
    t=st.floats(0.1, 10, **finite),
    p=st.floats(1.05, 5.0, **finite),
    dist=st.floats(0.05, 4, **finite),
)
def test_euclidean_quadrature_matches_closed_form(dim, t, p, dist):
    K = hm.EuclideanHeatKernel(dim)
    z = np.full(dim, dist / math.sqrt(dim))
    closed = hm.integrated_harnack_lhs(K, np.zeros(dim), z, t, p, method="closed")
    quad = hm.integrated_harnack_lhs(K, np.zeros(dim), z, t, p, method="quadrature")
    assert quad == pytest.approx(closed, rel=1e-4)


def test_lhs_rejects_bad_input():
    K = hm.EuclideanHeatKernel(1)
    with pytest.raises(InputError):
        hm.integrated_harnack_lhs(K, [0.0], [1.0], 0.0, 2.0)
    with pytest.raises(InputError):
        hm.integrated_harnack_lhs(K, [0.0], [1.0], 1.0, 0.5)
    with pytest.raises(InputError):
        hm.integrated_harnack_lhs(hm.TorusHeatKernel(1, (1.0,)), [0.0], [0.5], 1.0, 2.0, method="closed")


def test_torus_example_has_positive_margin():
    K = hm.TorusHeatKernel(1, (2 * math.pi,))
    rep = hm.check_integrated_harnack(K, [0.0], [math.pi], 1.0, 2.0)
    assert rep.margin >= 0
    assert rep.lhs > 1.0


@settings(max_examples=25, deadline=None)
@given(
    t=st.floats(0.1, 5, **finite),
    p=st.floats(1.1, 5, **finite),
    y=st.floats(0, 2 * math.pi, **finite),
    z=st.floats(0, 2 * math.pi, **finite),
)
def test_torus_margin_nonnegative(t, p, y, z):
    K = hm.TorusHeatKernel(1, (2 * math.pi,))
    assert hm.check_integrated_harnack(K, [y], [z], t, p).margin >= -1e-9


def test_same_point_report():
    rep = hm.check_integrated_harnack(hm.TorusHeatKernel(2, (3.0, 3.0)), [1, 1], [1, 1], 0.4, 3.0)
    assert rep.lhs == rep.rhs == 1.0


@pytest.mark.parametrize("t,p", [(0.5, 2.0), (1.0, 3.0)])
def test_discretised_torus_reproduces_quadrature(t, p):
    K = hm.TorusHeatKernel(1, (2 * math.pi,))
    fk, grid = hm.discretize_torus(K, t, 256)
    iz = int(np.argmin(np.abs(grid - math.pi)))
    disc = kd.integrated_harnack_norm(fk, 0, iz, p)
    quad = hm.integrated_harnack_lhs(K, [0.0], [grid[iz]], t, p)
    assert disc == pytest.approx(quad, rel=1e-6)


# --- Wang's inequality ----------------------------------------------------------------


def bump(center, width=0.5):
    return lambda x: np.exp(-np.sum((x - center) ** 2, axis=-1) / (2 * width**2))


def test_wang_constant_function():
    rep = hm.check_wang(hm.EuclideanHeatKernel(1), lambda x: np.ones(x.shape[:-1]), [0.0], [1.0], 1.0, 2.0)
    assert rep.lhs == pytest.approx(1.0, abs=1e-9)
    assert rep.rhs == pytest.approx(math.exp(2.0))


def test_wang_gaussian_bump():
    rep = hm.check_wang(hm.EuclideanHeatKernel(1), bump(np.zeros(1)), [0.0], [1.0], 1.0, 2.0)
    assert rep.margin >= 0


@settings(max_examples=15, deadline=None)
@given(
    y=st.floats(-2, 2, **finite),
    t=st.floats(0.2, 3, **finite),
    p=st.floats(1.2, 4, **finite),
    width=st.floats(0.2, 2, **finite),
)
def test_wang_same_point_is_jensen(y, t, p, width):
    rep = hm.check_wang(hm.EuclideanHeatKernel(1), bump(np.array([0.5]), width), [y], [y], t, p)
    assert rep.lhs <= rep.rhs * (1 + 1e-9)


@settings(max_examples=10, deadline=None)
@given(
    t=st.floats(0.2, 3, **finite),
    p=st.floats(1.2, 4, **finite),
    y=st.floats(0, 2 * math.pi, **finite),
    z=st.floats(0, 2 * math.pi, **finite),
)
def test_wang_on_torus(t, p, y, z):
    K = hm.TorusHeatKernel(1, (2 * math.pi,))
    f = lambda x: 1.5 + np.cos(x[..., 0])  # noqa: E731
    assert hm.check_wang(K, f, [y], [z], t, p).ok


# --- Li-Yau ---------------------------------------------------------------------------


def test_li_yau_closed_form_example():
    rep = hm.check_li_yau(hm.EuclideanHeatKernel(1), 2.0, 1.0, 1.0, [0.0], [0.0], [0.0])
    assert rep.lhs == pytest.approx(math.sqrt(2), rel=1e-14)
    assert rep.rhs == pytest.approx(2.0, rel=1e-14)


def test_li_yau_grid_sweep_same_point():
    K = hm.EuclideanHeatKernel(1)
    for x in np.linspace(-6, 6, 121):
        rep = hm.check_li_yau(K, 2.0, 1.0, 1.0, [x], [0.0], [0.0])
        assert rep.lhs <= 2.0 + 1e-12


@pytest.mark.parametrize("dim", [1, 2, 3])
def test_li_yau_random_draws(dim):
    reports = hm.li_yau_battery(dim, 2000, 17 + dim)
    assert min(r.margin for r in reports) >= -1e-9


def test_li_yau_rejects_alpha_one():
    with pytest.raises(InputError):
        hm.check_li_yau(hm.EuclideanHeatKernel(1), 1.0, 1.0, 1.0, [0.0], [0.0], [0.0])
