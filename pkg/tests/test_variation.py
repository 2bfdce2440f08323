import numpy as np
import pytest

from kuratowski.distance import GRAPH, DistanceMethod, prepare
from kuratowski.errors import OutOfRangeError, UndefinedDirectionError, UsageError
from kuratowski.geodesic import exp_map
from kuratowski.manifold import ChartPoint, ManifoldSpec, TangentVector, as_batch, inner, unit_vectors_batch
from kuratowski.variation import (
    ALONG,
    BlowupPoint,
    F_blowup,
    F_off_diagonal,
    continuity_probe,
    first_variation_batch,
    first_variation_table,
    local_method,
    sample_admissible,
    transverse_unit,
    u_of_s,
)

FLAT = ManifoldSpec("flat_torus")
SPHERE = ManifoldSpec("sphere")
CONFORMAL = ManifoldSpec("conformal_torus", amplitude=0.1)


def tv(p, c):
    return TangentVector(p, c, unit=True)


def sphere_north():
    from kuratowski.manifold import sphere_from_xyz

    return ChartPoint(sphere_from_xyz(SPHERE, np.array([[0.0, 0.0, 1.0]]), [1])[0], 1)


def test_u_of_s_examples():
    p = ChartPoint((0.0, 0.0))
    v = tv(p, (1.0, 0.0))
    z = ChartPoint((0.25, 0.0))
    assert u_of_s(FLAT, p, v, z, 0.0) == pytest.approx(0.25)
    assert u_of_s(FLAT, p, v, z, 0.1) == pytest.approx(0.15)
    with pytest.raises(OutOfRangeError):
        u_of_s(FLAT, p, v, ChartPoint((0.3, 0.0)), 0.1)
    q = ChartPoint((np.pi / 2, 0.0))
    w = tv(q, (0.0, 1.0))
    for s in (1e-3, 0.05, 0.2):
        assert u_of_s(SPHERE, q, w, sphere_north(), s) == pytest.approx(np.pi / 2, abs=1e-9)


def test_u_of_s_region_gates():
    p = ChartPoint((0.0, 0.0))
    v = tv(p, (1.0, 0.0))
    with pytest.raises(OutOfRangeError):
        u_of_s(FLAT, p, v, ChartPoint((0.3, 0.0)), 0.2)
    with pytest.raises(OutOfRangeError):
        u_of_s(FLAT, p, v, ChartPoint((0.3, 0.1)), 0.01)


def test_first_variation_collinear_is_exact():
    p = ChartPoint((0.0, 0.0))
    recs = first_variation_table(FLAT, p, tv(p, (1.0, 0.0)), ChartPoint((0.2, 0.0)), [1e-2, 1e-3])
    for r in recs:
        assert r.analytic_slope == -1.0
        assert r.fd_slope == pytest.approx(-1.0, abs=1e-12)
    assert recs[0].csv().count(",") == 3


def test_first_variation_perpendicular():
    q = ChartPoint((np.pi / 2, 0.0))
    recs = first_variation_table(SPHERE, q, tv(q, (0.0, 1.0)), sphere_north(), [1e-2, 1e-3, 1e-4])
    for r in recs:
        assert abs(r.analytic_slope) <= 1e-12
        assert abs(r.fd_slope) <= 0.5102 * r.delta_s


def test_first_variation_undefined():
    p = ChartPoint((0.1, 0.1))
    with pytest.raises(UndefinedDirectionError):
        first_variation_table(FLAT, p, tv(p, (1.0, 0.0)), p, [1e-3])


def test_conformal_error_is_first_order():
    rng = np.random.default_rng(21)
    triples = sample_admissible(CONFORMAL, rng, 12)
    X, cx = as_batch([t[0] for t in triples])
    V = np.array([t[1].array for t in triples])
    Z, cz = as_batch([t[2] for t in triples])
    errs = []
    for ds in (1e-2, 1e-3, 1e-4):
        fd, an, _ = first_variation_batch(CONFORMAL, X, cx, V, Z, cz, ds)
        errs.append(np.median(np.abs(fd - an)))
    rate = np.polyfit(np.log([1e-2, 1e-3, 1e-4]), np.log(errs), 1)[0]
    assert 0.8 <= rate <= 1.2


def test_graph_method_uses_shooting_locally():
    m = prepare(CONFORMAL, DistanceMethod(GRAPH))
    assert local_method(m).kind == "shooting"
    triples = sample_admissible(CONFORMAL, np.random.default_rng(22), 5)
    X, cx = as_batch([t[0] for t in triples])
    V = np.array([t[1].array for t in triples])
    Z, cz = as_batch([t[2] for t in triples])
    fd, an, u0 = first_variation_batch(CONFORMAL, X, cx, V, Z, cz, 1e-4, m)
    assert np.max(np.abs(fd - an)) <= 5e-3


def test_F_off_diagonal_examples():
    x, y, z = ChartPoint((0.0, 0.0)), ChartPoint((0.1, 0.0)), ChartPoint((0.2, 0.0))
    assert F_off_diagonal(FLAT, x, y, z) == pytest.approx(1.0)
    assert F_off_diagonal(FLAT, ChartPoint((0.1, 0.1)), ChartPoint((0.3, 0.1)), ChartPoint((0.2, 0.2))) == pytest.approx(
        0.0, abs=1e-15)
    with pytest.raises(UsageError):
        F_off_diagonal(FLAT, x, x, z)


def test_F_off_diagonal_range_and_symmetry():
    rng = np.random.default_rng(23)
    for p, v, z in sample_admissible(SPHERE, rng, 40):
        y = exp_map(SPHERE, p, v.scaled(0.03))
        a = F_off_diagonal(SPHERE, p, y, z)
        assert 0.0 <= a <= 1 + 1e-9
        assert F_off_diagonal(SPHERE, y, p, z) == pytest.approx(a, abs=1e-15)


def test_F_blowup_examples():
    p = ChartPoint((0.2, 0.6))
    v = tv(p, (0.6, 0.8))
    assert F_blowup(FLAT, p, v, exp_map(FLAT, p, v.scaled(0.25))) == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(OutOfRangeError):
        F_blowup(FLAT, p, v, exp_map(FLAT, p, v.scaled(0.3)))
    assert F_blowup(FLAT, p, v, ChartPoint((0.2 - 0.16, 0.6 + 0.12))) == pytest.approx(0.0, abs=1e-12)
    q = ChartPoint((1.0, 0.4))
    X, c = as_batch(q)
    u = tv(q, unit_vectors_batch(SPHERE, X, c, np.array([0.2]))[0])
    w = unit_vectors_batch(SPHERE, X, c, np.array([0.2 + np.pi / 3]))[0]
    z = exp_map(SPHERE, q, TangentVector(q, w).scaled(0.8))
    assert F_blowup(SPHERE, q, u, z) == pytest.approx(0.5, abs=1e-7)
    with pytest.raises(UndefinedDirectionError):
        F_blowup(FLAT, p, v, p)


def test_blowup_point_validation():
    p = ChartPoint((0.1, 0.1))
    BlowupPoint(base=p, direction=tv(p, (1, 0)))
    with pytest.raises(UsageError):
        BlowupPoint(pair=(p, p))
    with pytest.raises(UsageError):
        BlowupPoint(base=p, direction=tv(p, (1, 0)), pair=(p, ChartPoint((0.2, 0.1))))


def test_transverse_unit():
    q = ChartPoint((1.0, 0.4))
    v = tv(q, (0.3, 0.5))
    w = transverse_unit(SPHERE, q, v)
    assert abs(inner(SPHERE, q, v, w)) < 1e-12 and w.components[1] >= 0


def test_continuity_probe_flat_collinear():
    p = ChartPoint((0.1, 0.2))
    v = tv(p, (1.0, 0.0))
    z = exp_map(FLAT, p, v.scaled(0.25))
    probe = continuity_probe(FLAT, (p, v), z, 8, offset=ALONG)
    assert all(e <= 1e-12 for _, e in probe)
    assert [d for d, _ in probe] == [2.0 ** -k * 0.05 for k in range(1, 9)]


def test_continuity_probe_sphere():
    q = ChartPoint((1.2, 0.4))
    X, c = as_batch(q)
    v = tv(q, unit_vectors_batch(SPHERE, X, c, np.array([0.3]))[0])
    w = unit_vectors_batch(SPHERE, X, c, np.array([1.3]))[0]
    z = exp_map(SPHERE, q, TangentVector(q, w).scaled(0.5 * np.pi))
    errors = [e for _, e in continuity_probe(SPHERE, (q, v), z, 8)]
    assert all(b < a for a, b in zip(errors[1:], errors[2:]))
    assert errors[-1] <= 1e-3


def test_continuity_probe_errors():
    p = ChartPoint((0.1, 0.2))
    v = tv(p, (1.0, 0.0))
    with pytest.raises(OutOfRangeError):
        continuity_probe(FLAT, (p, v), ChartPoint((0.4, 0.2)), 8)
    with pytest.raises(UsageError):
        continuity_probe(FLAT, (p, v), ChartPoint((0.2, 0.2)), 2)
