import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kuratowski.errors import DomainError, UsageError
from kuratowski.manifold import (
    POLAR,
    ChartPoint,
    ManifoldSpec,
    TangentVector,
    angle_between,
    as_batch,
    christoffel_at,
    christoffel_batch,
    christoffel_fd_batch,
    grid,
    inner,
    metric_at,
    metric_batch,
    sample_points_batch,
    shortest_lattice_vector,
    sphere_xyz,
    to_chart,
    wrap,
    wrap_batch,
)

unit = st.floats(0.0, 1.0, exclude_max=True)
colat = st.floats(0.25, np.pi - 0.25)
lon = st.floats(0.0, 2 * np.pi, exclude_max=True)


def vec(spec, p, v):
    return TangentVector(p, v)


# metric


def test_flat_metric_is_identity(flat):
    assert np.array_equal(metric_at(flat, ChartPoint((0.3, 0.7))).g, np.eye(2))


def test_sphere_metric_on_equator(sphere):
    g = metric_at(sphere, ChartPoint((np.pi / 2, 0.0))).g
    np.testing.assert_allclose(g, np.eye(2), atol=1e-15)


def test_conformal_metric_value(conformal):
    g = metric_at(conformal, ChartPoint((0.25, 0.25))).g
    np.testing.assert_allclose(g, np.exp(0.2) * np.eye(2), rtol=1e-14)


@pytest.mark.parametrize("name", ["flat", "sphere", "conformal"])
def test_metric_symmetric_positive_definite(name, request):
    spec = request.getfixturevalue(name)
    X, c = sample_points_batch(spec, np.random.default_rng(1), 200)
    g = metric_batch(spec, X, c)
    np.testing.assert_array_equal(g, np.transpose(g, (0, 2, 1)))
    assert np.all(np.linalg.eigvalsh(g) > 0)


def test_sphere_chart_edge_is_domain_error(sphere):
    with pytest.raises(DomainError):
        metric_at(sphere, ChartPoint((0.0, 1.0)))


# christoffel symbols


def test_flat_christoffel_zero(flat):
    assert np.all(christoffel_at(flat, ChartPoint((0.4, 0.1))) == 0)


def test_sphere_christoffel_values(sphere):
    G = christoffel_at(sphere, ChartPoint((np.pi / 3, 0.0)))
    th = np.pi / 3
    assert G[0][1][1] == pytest.approx(-np.sin(th) * np.cos(th), abs=1e-14)
    assert G[1][0][1] == pytest.approx(1 / np.tan(th), abs=1e-14)
    assert G[1][1][0] == pytest.approx(1 / np.tan(th), abs=1e-14)


def test_sphere_christoffel_matches_finite_differences(sphere):
    X, c = sample_points_batch(sphere, np.random.default_rng(2), 50)
    np.testing.assert_allclose(christoffel_batch(sphere, X, c), christoffel_fd_batch(sphere, X, c),
                               atol=1e-6)


def test_flat_conformal_christoffel_zero():
    spec = ManifoldSpec("conformal_torus", amplitude=0.0)
    assert np.allclose(christoffel_at(spec, ChartPoint((0.3, 0.6))), 0.0, atol=1e-12)


def conformal_gamma(a, w, x, y):
    """Closed form for g = exp(2 phi) I with phi = a sin(w x) sin(w y)."""
    dphi = a * w * np.array([np.cos(w * x) * np.sin(w * y), np.sin(w * x) * np.cos(w * y)])
    d = np.eye(2)
    return (np.einsum("kj,i->kij", d, dphi) + np.einsum("ki,j->kij", d, dphi)
            - np.einsum("ij,k->kij", d, dphi))


@settings(max_examples=50, deadline=None)
@given(unit, unit)
def test_conformal_christoffel_matches_closed_form(x, y):
    spec = ManifoldSpec("conformal_torus", amplitude=0.1, frequency=2)
    G = christoffel_at(spec, ChartPoint((x, y)))
    np.testing.assert_allclose(G, conformal_gamma(0.1, 4 * np.pi, x, y), atol=1e-6)


# inner products and angles


def test_inner_examples(flat, sphere):
    p = ChartPoint((0.2, 0.3))
    assert inner(flat, p, vec(flat, p, (1, 0)), vec(flat, p, (0, 1))) == 0.0
    assert inner(flat, p, vec(flat, p, (3, 4)), vec(flat, p, (3, 4))) == 25.0
    q = ChartPoint((np.pi / 6, 1.0))
    assert inner(sphere, q, vec(sphere, q, (0, 1)), vec(sphere, q, (0, 1))) == pytest.approx(0.25)


def test_inner_rejects_foreign_vector(flat):
    p, q = ChartPoint((0.2, 0.3)), ChartPoint((0.1, 0.1))
    with pytest.raises(UsageError):
        inner(flat, p, vec(flat, q, (1, 0)), vec(flat, p, (1, 0)))


def test_angle_examples(flat, sphere):
    p = ChartPoint((0.5, 0.5))
    assert angle_between(flat, p, vec(flat, p, (1, 0)), vec(flat, p, (0, 1))) == pytest.approx(np.pi / 2)
    v = vec(flat, p, (0.3, -2.0))
    assert angle_between(flat, p, v, v) == 0.0
    q = ChartPoint((np.pi / 4, 0.0))
    a = angle_between(sphere, q, vec(sphere, q, (1, 0)), vec(sphere, q, (1, 1)))
    assert a == pytest.approx(np.arccos(1 / np.sqrt(1.5)), abs=1e-13)


@settings(max_examples=100, deadline=None)
@given(colat, lon, st.floats(-np.pi, np.pi), st.floats(-np.pi, np.pi))
def test_angle_symmetric_and_bounded(th, ph, a, b):
    spec = ManifoldSpec("sphere")
    p = ChartPoint((th, ph))
    v = vec(spec, p, (np.cos(a), np.sin(a)))
    w = vec(spec, p, (np.cos(b), np.sin(b)))
    ab = angle_between(spec, p, v, w)
    assert ab == angle_between(spec, p, w, v)
    assert 0.0 <= ab <= np.pi


# wrapping and charts


def test_wrap_examples(flat, sphere):
    assert wrap(flat, ChartPoint((1.3, -0.2))).coords == pytest.approx((0.3, 0.8))
    assert wrap(flat, ChartPoint((0.5, 0.5))).coords == (0.5, 0.5)
    w = wrap(sphere, ChartPoint((0.1, 2.0)))
    assert w.chart == POLAR
    P = sphere_xyz(sphere, *as_batch(ChartPoint((0.1, 2.0))))
    Q = sphere_xyz(sphere, *as_batch(w))
    np.testing.assert_allclose(P, Q, atol=1e-15)


@settings(max_examples=500, deadline=None)
@given(st.floats(-5, 5), st.floats(-5, 5))
def test_torus_wrap_idempotent(x, y):
    square = ManifoldSpec("flat_torus")
    once = wrap(square, ChartPoint((x, y)))
    assert wrap(square, once) == once
    assert all(0.0 <= c < 1.0 for c in once.coords)
    # skew lattice: exact up to rounding at the domain edges
    skew = ManifoldSpec("flat_torus", lattice_basis=((1.0, 0.3), (0.0, 0.9)))
    once = wrap(skew, ChartPoint((x, y)))
    np.testing.assert_allclose(wrap(skew, once).coords, once.coords, rtol=0, atol=1e-15)


def test_wrap_leaves_interior_points_untouched():
    skew = ManifoldSpec("flat_torus", lattice_basis=((1.0, 0.3), (0.0, 0.9)))
    p = ChartPoint((0.7, 0.1))
    assert wrap(skew, p) == p


@settings(max_examples=100, deadline=None)
@given(colat, lon)
def test_sphere_chart_round_trip(th, ph):
    spec = ManifoldSpec("sphere", radius=2.0)
    p = ChartPoint((th, ph))
    back = to_chart(spec, to_chart(spec, p, POLAR), 0)
    P = sphere_xyz(spec, *as_batch(p))
    Q = sphere_xyz(spec, *as_batch(back))
    np.testing.assert_allclose(P, Q, atol=1e-12)


def test_wrap_transports_velocity(sphere):
    X = np.array([[0.1, 0.5]])
    V = np.array([[0.3, -1.2]])
    Xw, cw, Vw = wrap_batch(sphere, X, [0], V)
    # g-norm is chart independent
    n0 = np.sqrt(V[0] @ metric_batch(sphere, X, [0])[0] @ V[0])
    n1 = np.sqrt(Vw[0] @ metric_batch(sphere, Xw, cw)[0] @ Vw[0])
    assert n1 == pytest.approx(n0, rel=1e-12)


# spec validation


def test_spec_rejects_bad_inputs():
    with pytest.raises(UsageError):
        ManifoldSpec("klein_bottle")
    with pytest.raises(UsageError):
        ManifoldSpec("flat_torus", lattice_basis=((1.0, 2.0), (0.0, 0.0)))
    with pytest.raises(UsageError):
        ManifoldSpec("flat_torus", lattice_basis=((1.0, 0.9), (0.0, 0.1)))  # not reduced
    with pytest.raises(UsageError):
        ManifoldSpec("conformal_torus", amplitude=0.5)
    with pytest.raises(UsageError):
        ManifoldSpec("sphere", injrad_bound=1.0)


def test_injectivity_bounds():
    assert ManifoldSpec("flat_torus").injrad_bound == 0.5
    assert ManifoldSpec("sphere", radius=2.0).injrad_bound == pytest.approx(2 * np.pi)
    skew = ((1.0, 0.5), (0.0, np.sqrt(3) / 2))
    assert shortest_lattice_vector(np.array(skew)) == pytest.approx(1.0)
    c = ManifoldSpec("conformal_torus", amplitude=0.1)
    assert c.injrad_bound < 0.5


def test_spec_hash_distinguishes_specs():
    assert ManifoldSpec("sphere").spec_hash != ManifoldSpec("sphere", radius=2.0).spec_hash
    assert ManifoldSpec("flat_torus").spec_hash == ManifoldSpec("flat_torus").spec_hash


def test_grid_counts(flat, sphere):
    X, c = grid(flat, 0.1)
    assert len(X) == 100 and tuple(X[0]) == (0.0, 0.0)
    S, cs = grid(sphere, 0.1)
    assert cs[0] == POLAR
    P = sphere_xyz(sphere, S, cs)
    np.testing.assert_allclose(P[0], [0, 0, 1], atol=1e-15)
