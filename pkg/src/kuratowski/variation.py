"""First variation of distance and the blow-up function F.

For a unit-speed geodesic ``gamma`` from ``p`` with direction ``v`` and a point
``z``, ``u(s) = d(gamma(s), z)`` has ``u'(0) = -cos(alpha)``, where ``alpha`` is
the angle at ``p`` between ``v`` and the minimizing direction to ``z``.

``F(x, y, z) = |d(x, z) - d(y, z)| / d(x, y)`` off the diagonal extends to
``F((x, v), z) = |u'(0)|`` on lines through ``x``.

Every quantity here lives within half the injectivity radius, where shooting
is exact to its tolerance. A graph method is therefore swapped for shooting
(the graph over-estimates by O(h), far more than the differences resolved
here); the graph value of ``u(0)`` is still checked against the shooting one.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .distance import GRAPH, SHOOTING, default_method, distance, distance_pairs, geodesic_to_batch
from .errors import OutOfRangeError, UndefinedDirectionError, UsageError
from .geodesic import DEFAULT_CONTROL, exp_batch, exp_map, flow_batch, geodesic_flow
from .manifold import (
    ChartPoint,
    TangentVector,
    as_batch,
    inner,
    metric_at,
    metric_batch,
    normalize,
    sample_points_batch,
    to_chart_batch,
    unit_vectors_batch,
)

REGION_SLACK = 1e-9
GRAPH_AGREEMENT = 0.02
CSV_HEADER = "delta,fd_slope,analytic_slope,error"
PROBE_HEADER = "offset,error"
TRANSVERSE = "transverse"
ALONG = "along"


@dataclass(frozen=True)
class VariationRecord:
    delta_s: float
    fd_slope: float
    analytic_slope: float

    @property
    def abs_error(self):
        return abs(self.fd_slope - self.analytic_slope)

    def csv(self):
        return f"{self.delta_s!r},{self.fd_slope!r},{self.analytic_slope!r},{self.abs_error!r}"


@dataclass(frozen=True)
class BlowupPoint:
    """Either a line ``(base, direction)`` or an off-diagonal ``pair``."""

    base: Optional[ChartPoint] = None
    direction: Optional[TangentVector] = None
    pair: Optional[tuple] = None

    def __post_init__(self):
        line = self.base is not None and self.direction is not None
        if line == (self.pair is not None):
            raise UsageError("a blow-up point is either a line or a pair, not both")
        if self.pair is not None and self.pair[0] == self.pair[1]:
            raise UsageError("pair points must be distinct")


def local_method(method):
    """The method actually used for the local distances in this module."""
    if method.kind == GRAPH:
        return replace(method, kind=SHOOTING, graph=None)
    return method


def _gate(spec, d):
    bad = d > 0.5 * spec.injrad_bound * (1 + REGION_SLACK)
    if np.any(bad):
        raise OutOfRangeError(f"d(p, z) = {float(np.max(d)):.6g} exceeds half the injectivity "
                              f"radius ({0.5 * spec.injrad_bound:.6g})")


def _region(spec, p, z, method):
    d = distance(spec, p, z, local_method(method))
    _gate(spec, np.array([d]))
    return d


def _point_along(spec, p, v, s, ctl=DEFAULT_CONTROL):
    if s >= 0:
        return geodesic_flow(spec, p, v, s, ctl).position
    return geodesic_flow(spec, p, v.scaled(-1.0), -s, ctl).position


def u_of_s(spec, p, v, z, s, method=None):
    method = method or default_method(spec)
    d0 = _region(spec, p, z, method)
    if abs(s) > 0.25 * spec.injrad_bound * (1 + REGION_SLACK):
        raise OutOfRangeError("|s| must not exceed a quarter of the injectivity radius")
    if s == 0:
        return d0
    return distance(spec, _point_along(spec, p, v, s), z, local_method(method))


def _cos_alpha(spec, X, cx, V, W):
    """g-cosine between the rows of V and W (both at X)."""
    g = metric_batch(spec, X, cx)
    vw = np.einsum("ni,nij,nj->n", V, g, W)
    vv = np.einsum("ni,nij,nj->n", V, g, V)
    ww = np.einsum("ni,nij,nj->n", W, g, W)
    return np.clip(vw / np.sqrt(vv * ww), -1.0, 1.0)


def first_variation_batch(spec, X, cx, V, Z, cz, delta, method=None):
    """Vectorized ``(fd_slope, -cos(alpha), u0)`` for triples ``(X[i], V[i], Z[i])``."""
    method = method or default_method(spec)
    lm = local_method(method)
    X = np.asarray(X, dtype=float).reshape(-1, 2)
    cx = np.asarray(cx, dtype=int)
    u0, W = geodesic_to_batch(spec, X, cx, Z, cz, lm)
    _gate(spec, u0)
    if method.kind == GRAPH and method.graph is not None:
        g0 = method.graph.distance_pairs(X, cx, Z, cz)
        bad = np.abs(g0 - u0) > GRAPH_AGREEMENT * u0
        if np.any(bad):
            raise AssertionError(f"graph and shooting disagree on u(0) for {int(bad.sum())} triples")
    speed = np.sqrt(np.einsum("ni,nij,nj->n", V, metric_batch(spec, X, cx), V))
    E, ce, _ = flow_batch(spec, X, cx, V / speed[:, None], np.full(len(X), float(delta)))
    u = distance_pairs(spec, E, ce, Z, cz, lm)
    return (u - u0) / delta, -_cos_alpha(spec, X, cx, V, W), u0


def first_variation_table(spec, p, v, z, deltas, method=None):
    """Forward-difference slopes of ``u`` against ``-cos(alpha)``."""
    if p == z:
        raise UndefinedDirectionError("first variation undefined for z = p")
    method = method or default_method(spec)
    X, cx = as_batch(p)
    Z, cz = as_batch(z)
    out = []
    for ds in deltas:
        fd, an, _ = first_variation_batch(spec, X, cx, v.array[None], Z, cz, ds, method)
        out.append(VariationRecord(float(ds), float(fd[0]), float(an[0])))
    return out


def F_off_diagonal(spec, x, y, z, method=None):
    method = method or default_method(spec)
    lm = local_method(method)
    X, cx = as_batch([x, x, y])
    Y, cy = as_batch([y, z, z])
    dxy, dxz, dyz = distance_pairs(spec, X, cx, Y, cy, lm)
    _gate(spec, np.array([dxz]))
    if dxy <= 10 * lm.tolerance:
        raise UsageError("F is undefined for coincident x, y")
    return float(abs(dxz - dyz) / dxy)


def F_blowup_batch(spec, X, cx, V, Z, cz, method=None):
    method = method or default_method(spec)
    X = np.asarray(X, dtype=float).reshape(-1, 2)
    cx = np.asarray(cx, dtype=int)
    d, W = geodesic_to_batch(spec, X, cx, Z, cz, local_method(method))
    _gate(spec, d)
    return np.abs(_cos_alpha(spec, X, cx, np.asarray(V, dtype=float), W))


def F_blowup(spec, x, v, z, method=None):
    if x == z:
        raise UndefinedDirectionError("F on the blow-up is undefined for z = x")
    X, cx = as_batch(x)
    Z, cz = as_batch(z)
    return float(F_blowup_batch(spec, X, cx, v.array[None], Z, cz, method)[0])


def transverse_unit(spec, p, v):
    """Unit vector g-orthogonal to ``v`` at ``p`` with positive second component."""
    g = metric_at(spec, p).g
    a = v.array
    w = np.array([-(g[1, 0] * a[0] + g[1, 1] * a[1]), g[0, 0] * a[0] + g[0, 1] * a[1]])
    if w[1] < 0 or (w[1] == 0 and w[0] < 0):
        w = -w
    w = normalize(spec, TangentVector(p, w))
    assert abs(inner(spec, p, v, w)) < 1e-12
    return w


def continuity_probe(spec, target, z, n_steps, method=None, offset=TRANSVERSE):
    """``[(delta_k, |F(x_k, y_k, z) - F((p, v), z)|)]`` for ``delta_k = 2^-k injrad / 10``.

    ``offset="transverse"`` moves the base point off the line: ``x_k = exp_p(delta_k w)``
    with ``w`` orthogonal to ``v``, and ``v`` is copied in chart coordinates
    and renormalized at ``x_k``. ``offset="along"`` keeps ``x_k = exp_p(delta_k v)``
    on the line, which makes the collinear case exact.
    """
    method = method or default_method(spec)
    if n_steps < 3:
        raise UsageError("n_steps must be >= 3")
    if offset not in (TRANSVERSE, ALONG):
        raise UsageError(f"unknown probe offset {offset!r}")
    p, v = target
    limit = F_blowup(spec, p, v, z, method)
    w = transverse_unit(spec, p, v) if offset == TRANSVERSE else v
    out = []
    for k in range(1, n_steps + 1):
        delta = 2.0 ** (-k) * spec.injrad_bound / 10.0
        xk = exp_map(spec, p, w.scaled(delta))
        vk = TangentVector(xk, to_chart_vector(spec, p, v, xk))
        vk = normalize(spec, vk)
        yk = exp_map(spec, xk, vk.scaled(delta))
        out.append((delta, abs(F_off_diagonal(spec, xk, yk, z, method) - limit)))
    return out


def to_chart_vector(spec, p, v, q):
    """Components of ``v`` copied to ``q``'s chart (via ``p``'s chart when they differ)."""
    if q.chart == p.chart:
        return v.array
    # express q in p's chart, copy the components there, then carry them over
    Xq, cq = as_batch(q)
    Xp, _, = to_chart_batch(spec, Xq, cq, p.chart)
    _, _, V = to_chart_batch(spec, Xp, [p.chart], cq, v.array[None])
    return V[0]


def sample_admissible(spec, rng, n, lo=0.25, hi=0.49):
    """Random ``(p, v, z)`` with ``z = exp_p(r w)``, ``r/injrad`` uniform in ``[lo, hi]``."""
    X, c = sample_points_batch(spec, rng, n)
    V = unit_vectors_batch(spec, X, c, rng.uniform(0, 2 * np.pi, n))
    W = unit_vectors_batch(spec, X, c, rng.uniform(0, 2 * np.pi, n))
    r = rng.uniform(lo, hi, n) * spec.injrad_bound
    Z, cz = exp_batch(spec, X, c, r[:, None] * W)
    out = []
    for i in range(n):
        p = ChartPoint(X[i], c[i])
        out.append((p, TangentVector(p, V[i], unit=True), ChartPoint(Z[i], cz[i])))
    return out

