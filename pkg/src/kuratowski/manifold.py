"""Compact Riemannian 2-manifolds: metric tensors, Christoffel symbols, charts.

Three families are supported:

``flat_torus``
    R^2 modulo the lattice spanned by the columns of ``lattice_basis``, with
    the Euclidean metric. Charts are Cartesian coordinates.
``sphere``
    The round sphere of radius ``radius``. Two charts, both spherical
    coordinates (colatitude, longitude): the equatorial chart (flag 0) in the
    standard frame and the pole chart (flag 1) in a rotated frame that puts
    both poles on its own equator. Points within ``POLE_BAND`` of a pole are
    represented in the pole chart.
``conformal_torus``
    The same quotient as the flat torus with metric
    ``exp(2 a sin(2 pi f u1) sin(2 pi f u2)) * I`` where ``u = B^{-1} x`` are
    fractional lattice coordinates, so the factor is lattice periodic.

Every public scalar function has a ``*_batch`` counterpart operating on
``(n, 2)`` coordinate arrays plus an ``(n,)`` chart-flag array; the rest of
the package is built on the batched forms.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DomainError, UsageError

FLAT_TORUS = "flat_torus"
SPHERE = "sphere"
CONFORMAL_TORUS = "conformal_torus"
FAMILIES = (FLAT_TORUS, SPHERE, CONFORMAL_TORUS)
TORUS_FAMILIES = (FLAT_TORUS, CONFORMAL_TORUS)

EQUATORIAL = 0
POLAR = 1

POLE_BAND = 0.2
AMPLITUDE_CAP = 0.2
FD_STEP = 1e-5

# Rotation taking the standard frame to the pole-chart frame: e_z -> e_x.
_Q = np.array([[0.0, 0.0, 1.0], [0.0, 1.0, 0.0], [-1.0, 0.0, 0.0]])
_TWO_PI = 2.0 * np.pi


def _lattice_vectors(basis, ring=2):
    ks = np.array([(i, j) for i in range(-ring, ring + 1) for j in range(-ring, ring + 1)
                   if (i, j) != (0, 0)], dtype=float)
    return ks, ks @ basis.T


def shortest_lattice_vector(basis):
    """Length of the shortest nonzero vector of the lattice ``basis @ Z^2``."""
    _, vecs = _lattice_vectors(np.asarray(basis, dtype=float))
    return float(np.min(np.linalg.norm(vecs, axis=1)))


@dataclass(frozen=True)
class ManifoldSpec:
    """A concrete compact surface. ``lattice_basis`` columns are the generators."""

    family: str
    lattice_basis: tuple = ((1.0, 0.0), (0.0, 1.0))
    radius: float = 1.0
    amplitude: float = 0.0
    frequency: int = 1
    injrad_bound: Optional[float] = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise UsageError(f"unknown manifold family {self.family!r}; expected one of {FAMILIES}")
        basis = np.asarray(self.lattice_basis, dtype=float)
        if basis.shape != (2, 2) or not np.all(np.isfinite(basis)):
            raise UsageError("lattice_basis must be a finite 2x2 matrix")
        object.__setattr__(self, "lattice_basis", tuple(tuple(float(v) for v in row) for row in basis))

        if self.family in TORUS_FAMILIES:
            b1, b2 = basis[:, 0], basis[:, 1]
            n1, n2 = np.linalg.norm(b1), np.linalg.norm(b2)
            if abs(np.linalg.det(basis)) <= 1e-9 * max(n1 * n2, 1e-300):
                raise UsageError("lattice_basis is singular")
            # Lagrange-reduced bases keep the 2-ring distance scan exact and the
            # systole among the classes (1,0), (0,1), (1,1), (1,-1).
            if abs(b1 @ b2) > 0.5 * min(n1, n2) ** 2 + 1e-12:
                raise UsageError("lattice_basis must be reduced: |b1.b2| <= min(|b1|,|b2|)^2 / 2")
        if self.family == SPHERE and not self.radius > 0:
            raise UsageError("sphere radius must be positive")
        if self.family == CONFORMAL_TORUS:
            if abs(self.amplitude) > AMPLITUDE_CAP:
                raise UsageError(f"|amplitude| must be <= {AMPLITUDE_CAP}")
            if int(self.frequency) != self.frequency or self.frequency < 1:
                raise UsageError("frequency must be a positive integer")
            object.__setattr__(self, "frequency", int(self.frequency))

        analytic = self.default_injrad_bound()
        if self.injrad_bound is None:
            object.__setattr__(self, "injrad_bound", analytic)
        else:
            given = float(self.injrad_bound)
            if not given > 0:
                raise UsageError("injrad_bound must be positive")
            if self.family in (FLAT_TORUS, SPHERE) and abs(given - analytic) > 1e-12 * analytic:
                raise UsageError(f"injrad_bound for {self.family} is fixed at {analytic!r}")
            if self.family == CONFORMAL_TORUS and given > analytic * (1 + 1e-12):
                raise UsageError(f"configured injrad_bound exceeds the validated bound {analytic!r}")
            object.__setattr__(self, "injrad_bound", given)

    def default_injrad_bound(self):
        if self.family == SPHERE:
            return float(np.pi * self.radius)
        half = 0.5 * shortest_lattice_vector(self.basis)
        if self.family == FLAT_TORUS:
            return half
        return half * float(np.exp(-2 * AMPLITUDE_CAP))

    @property
    def basis(self):
        return np.array(self.lattice_basis, dtype=float)

    @property
    def basis_inv(self):
        return np.linalg.inv(self.basis)

    @property
    def is_torus(self):
        return self.family in TORUS_FAMILIES

    @property
    def has_analytic_distance(self):
        """True when closed-form distances exist (the conformal torus only when flat)."""
        return self.family != CONFORMAL_TORUS or self.amplitude == 0.0

    @property
    def spec_hash(self):
        key = "|".join(repr(v) for v in (self.family, self.lattice_basis, float(self.radius),
                                           float(self.amplitude), int(self.frequency),
                                           float(self.injrad_bound)))
        return hashlib.sha1(key.encode()).hexdigest()[:12]

    @property
    def diameter_bound(self):
        if self.family == SPHERE:
            return float(np.pi * self.radius)
        # Farthest point from the origin lies at a corner of the Voronoi cell.
        corners = self.basis @ np.array([[0.5, 0.5], [0.5, -0.5]]).T
        flat = float(np.max(np.linalg.norm(corners, axis=0)))
        if self.family == FLAT_TORUS:
            return flat
        return flat * float(np.exp(abs(self.amplitude)))


@dataclass(frozen=True)
class ChartPoint:
    """Chart coordinates of a point; ``chart`` selects the sphere chart."""

    coords: tuple
    chart: int = EQUATORIAL

    def __post_init__(self):
        c = tuple(float(v) for v in np.asarray(self.coords, dtype=float).ravel())
        if len(c) != 2:
            raise UsageError("ChartPoint needs exactly two coordinates")
        object.__setattr__(self, "coords", c)
        object.__setattr__(self, "chart", int(self.chart))

    @property
    def array(self):
        return np.array(self.coords)


@dataclass(frozen=True)
class TangentVector:
    base: ChartPoint
    components: tuple
    unit: bool = False

    def __post_init__(self):
        c = tuple(float(v) for v in np.asarray(self.components, dtype=float).ravel())
        if len(c) != 2:
            raise UsageError("TangentVector needs exactly two components")
        object.__setattr__(self, "components", c)

    @property
    def array(self):
        return np.array(self.components)

    def scaled(self, factor):
        return TangentVector(self.base, tuple(factor * c for c in self.components))


@dataclass(frozen=True)
class MetricSample:
    point: ChartPoint
    g: np.ndarray = field(repr=False)
    g_inv: np.ndarray = field(repr=False)


# --------------------------------------------------------------------------
# batched primitives


def as_batch(points):
    """Stack ChartPoints (or a single one) into ``(X, chart)`` arrays."""
    if isinstance(points, ChartPoint):
        points = [points]
    X = np.array([p.coords for p in points], dtype=float).reshape(-1, 2)
    chart = np.array([p.chart for p in points], dtype=int)
    return X, chart


def from_batch(X, chart):
    return [ChartPoint((float(x[0]), float(x[1])), int(c)) for x, c in zip(X, chart)]


def _check_charts(spec, X, chart):
    if spec.is_torus:
        if np.any(np.asarray(chart) != EQUATORIAL):
            raise DomainError("torus points must use chart 0")
        return
    theta = X[:, 0]
    bad = ~((theta > 0.0) & (theta < np.pi))
    if np.any(bad):
        i = int(np.argmax(bad))
        raise DomainError(f"colatitude {theta[i]!r} outside the open chart (0, pi)")


def conformal_exponent(spec, X):
    u = X @ spec.basis_inv.T
    w = _TWO_PI * spec.frequency
    return spec.amplitude * np.sin(w * u[:, 0]) * np.sin(w * u[:, 1])


def metric_batch(spec, X, chart):
    X = np.asarray(X, dtype=float).reshape(-1, 2)
    chart = np.broadcast_to(np.asarray(chart, dtype=int), (len(X),))
    _check_charts(spec, X, chart)
    g = np.zeros((len(X), 2, 2))
    if spec.family == FLAT_TORUS:
        g[:, 0, 0] = g[:, 1, 1] = 1.0
    elif spec.family == SPHERE:
        r2 = spec.radius ** 2
        g[:, 0, 0] = r2
        g[:, 1, 1] = r2 * np.sin(X[:, 0]) ** 2
    else:
        factor = np.exp(2.0 * conformal_exponent(spec, X))
        g[:, 0, 0] = g[:, 1, 1] = factor
    return g


def metric_inverse_batch(spec, X, chart):
    g = metric_batch(spec, X, chart)
    return g, np.linalg.inv(g)


def _inv2(g):
    det = g[:, 0, 0] * g[:, 1, 1] - g[:, 0, 1] * g[:, 1, 0]
    inv = np.empty_like(g)
    inv[:, 0, 0] = g[:, 1, 1] / det
    inv[:, 1, 1] = g[:, 0, 0] / det
    inv[:, 0, 1] = -g[:, 0, 1] / det
    inv[:, 1, 0] = -g[:, 1, 0] / det
    return inv


def christoffel_fd_batch(spec, X, chart, h=FD_STEP):
    """Christoffel symbols from central differences of the metric, indexed [n, k, i, j]."""
    X = np.asarray(X, dtype=float).reshape(-1, 2)
    chart = np.broadcast_to(np.asarray(chart, dtype=int), (len(X),))
    n = len(X)
    shifts = np.array([[0.0, 0.0], [h, 0.0], [-h, 0.0], [0.0, h], [0.0, -h]])
    g = metric_batch(spec, (X[None, :, :] + shifts[:, None, :]).reshape(-1, 2), np.tile(chart, 5))
    g = g.reshape(5, n, 2, 2)
    dg = np.stack([(g[1] - g[2]) / (2 * h), (g[3] - g[4]) / (2 * h)], axis=1)  # dg[n, l, i, j] = d_l g_ij
    g_inv = _inv2(g[0])
    lowered = dg.transpose(0, 2, 1, 3) + dg - dg.transpose(0, 2, 3, 1)  # [n, i, j, l]
    return 0.5 * np.einsum("nkl,nijl->nkij", g_inv, lowered)


def christoffel_batch(spec, X, chart):
    X = np.asarray(X, dtype=float).reshape(-1, 2)
    chart = np.broadcast_to(np.asarray(chart, dtype=int), (len(X),))
    if spec.family == CONFORMAL_TORUS:
        return christoffel_fd_batch(spec, X, chart)
    _check_charts(spec, X, chart)
    gamma = np.zeros((len(X), 2, 2, 2))
    if spec.family == SPHERE:
        s, c = np.sin(X[:, 0]), np.cos(X[:, 0])
        gamma[:, 0, 1, 1] = -s * c
        gamma[:, 1, 0, 1] = gamma[:, 1, 1, 0] = c / s
    return gamma


def sphere_xyz(spec, X, chart):
    """Embed sphere chart coordinates into R^3 (standard frame)."""
    th, ph = X[:, 0], X[:, 1]
    P = spec.radius * np.stack([np.sin(th) * np.cos(ph), np.sin(th) * np.sin(ph), np.cos(th)], axis=1)
    polar = np.asarray(chart) == POLAR
    if np.any(polar):
        P[polar] = P[polar] @ _Q  # row-vector form of Q^T p
    return P


def _sphere_frame(X):
    th, ph = X[:, 0], X[:, 1]
    e_th = np.stack([np.cos(th) * np.cos(ph), np.cos(th) * np.sin(ph), -np.sin(th)], axis=1)
    e_ph = np.stack([-np.sin(ph), np.cos(ph), np.zeros_like(ph)], axis=1)
    return e_th, e_ph


def sphere_push(spec, X, chart, V):
    """Chart velocity components -> R^3 tangent vectors in the standard frame."""
    e_th, e_ph = _sphere_frame(X)
    W = spec.radius * (V[:, :1] * e_th + (V[:, 1:] * np.sin(X[:, :1])) * e_ph)
    polar = np.asarray(chart) == POLAR
    if np.any(polar):
        W[polar] = W[polar] @ _Q
    return W


def sphere_from_xyz(spec, P, target, W=None):
    """Inverse of :func:`sphere_xyz` (and :func:`sphere_push` when ``W`` is given)."""
    P = np.array(P, dtype=float)
    target = np.broadcast_to(np.asarray(target, dtype=int), (len(P),))
    polar = target == POLAR
    if np.any(polar):
        P[polar] = P[polar] @ _Q.T
    th = np.arctan2(np.hypot(P[:, 0], P[:, 1]), P[:, 2])
    ph = np.mod(np.arctan2(P[:, 1], P[:, 0]), _TWO_PI)
    ph[ph >= _TWO_PI] = 0.0
    X = np.stack([th, ph], axis=1)
    if W is None:
        return X
    W = np.array(W, dtype=float)
    if np.any(polar):
        W[polar] = W[polar] @ _Q.T
    e_th, e_ph = _sphere_frame(X)
    V = np.stack([np.sum(W * e_th, axis=1) / spec.radius,
                  np.sum(W * e_ph, axis=1) / (spec.radius * np.sin(th))], axis=1)
    return X, V


def canonical_chart(spec, X, chart):
    """Chart flag each point should carry under the pole-band rule."""
    if spec.is_torus:
        return np.zeros(len(X), dtype=int)
    P = sphere_xyz(spec, X, chart)
    colat = np.arctan2(np.hypot(P[:, 0], P[:, 1]), P[:, 2])
    return np.where((colat < POLE_BAND) | (colat > np.pi - POLE_BAND), POLAR, EQUATORIAL)


def to_chart_batch(spec, X, chart, target, V=None):
    """Re-express points (and optionally velocities) in the ``target`` charts."""
    X = np.array(X, dtype=float).reshape(-1, 2)
    chart = np.broadcast_to(np.asarray(chart, dtype=int), (len(X),)).copy()
    target = np.broadcast_to(np.asarray(target, dtype=int), (len(X),)).copy()
    V = None if V is None else np.array(V, dtype=float).reshape(-1, 2)
    if spec.is_torus:
        return (X, target) if V is None else (X, target, V)
    move = chart != target
    if np.any(move):
        P = sphere_xyz(spec, X[move], chart[move])
        if V is None:
            X[move] = sphere_from_xyz(spec, P, target[move])
        else:
            W = sphere_push(spec, X[move], chart[move], V[move])
            X[move], V[move] = sphere_from_xyz(spec, P, target[move], W)
    return (X, target) if V is None else (X, target, V)


def wrap_batch(spec, X, chart, V=None):
    """Canonical representatives: fundamental domain (torus) or pole-band chart (sphere)."""
    X = np.array(X, dtype=float).reshape(-1, 2)
    chart = np.broadcast_to(np.asarray(chart, dtype=int), (len(X),)).copy()
    if spec.is_torus:
        # Shift by whole lattice vectors so points already inside are left bit-identical.
        B, Binv = spec.basis, spec.basis_inv
        for _ in range(3):
            k = np.floor(X @ Binv.T)
            if not k.any():
                break
            X = X - k @ B.T
        frac = X @ Binv.T
        bad = np.any((frac < 0.0) | (frac >= 1.0), axis=1)
        if bad.any():
            f = frac[bad] - np.floor(frac[bad])
            f[f >= 1.0] = 0.0
            X[bad] = f @ B.T
        return (X, chart) if V is None else (X, chart, np.array(V, dtype=float).reshape(-1, 2))
    target = canonical_chart(spec, X, chart)
    out = to_chart_batch(spec, X, chart, target, V)
    X = out[0]
    X[:, 1] = np.mod(X[:, 1], _TWO_PI)
    X[X[:, 1] >= _TWO_PI, 1] = 0.0
    return out


def displacement_batch(spec, X, cx, Y, cy):
    """Chart displacement from X to the nearest image of Y, in X's chart."""
    X = np.asarray(X, dtype=float).reshape(-1, 2)
    Y = np.asarray(Y, dtype=float).reshape(-1, 2)
    if spec.is_torus:
        d = Y - X
        frac = d @ spec.basis_inv.T
        frac -= np.round(frac)
        d = frac @ spec.basis.T
        # A reduced basis needs at most the first ring to find the minimal image.
        best = d.copy()
        bestn = np.sum(d ** 2, axis=1)
        for k in ((1, 0), (0, 1), (1, 1), (1, -1), (-1, 0), (0, -1), (-1, -1), (-1, 1)):
            cand = d + spec.basis @ np.array(k, dtype=float)
            n = np.sum(cand ** 2, axis=1)
            better = n < bestn
            best[better], bestn[better] = cand[better], n[better]
        return best
    Yx, _ = to_chart_batch(spec, Y, cy, cx)
    d = Yx - X
    d[:, 1] = np.mod(d[:, 1] + np.pi, _TWO_PI) - np.pi
    return d


def sample_points_batch(spec, rng, n):
    """``n`` points drawn from the normalized Riemannian volume (flat and sphere exactly;
    the conformal torus is sampled uniformly in the chart)."""
    if spec.is_torus:
        return rng.random((n, 2)) @ spec.basis.T, np.zeros(n, dtype=int)
    P = rng.standard_normal((n, 3))
    P = spec.radius * P / np.linalg.norm(P, axis=1, keepdims=True)
    target = np.where(np.abs(P[:, 2]) > spec.radius * np.cos(POLE_BAND), POLAR, EQUATORIAL)
    return sphere_from_xyz(spec, P, target), target


def orthonormal_frame_batch(spec, X, chart):
    """Columns of ``F[n]`` form a g-orthonormal basis at each point."""
    g = metric_batch(spec, X, chart)
    L = np.linalg.cholesky(g)
    return np.linalg.inv(L).transpose(0, 2, 1)


def unit_vectors_batch(spec, X, chart, angles):
    F = orthonormal_frame_batch(spec, X, chart)
    u = np.stack([np.cos(angles), np.sin(angles)], axis=-1)
    return np.einsum("nij,nj->ni", F, u)


def norm_batch(spec, X, chart, V):
    g = metric_batch(spec, X, chart)
    return np.sqrt(np.einsum("ni,nij,nj->n", V, g, V))


def grid(spec, spacing):
    """Deterministic point grid of metric spacing ~``spacing`` covering the manifold.

    Torus: ``ceil(|b_i| / spacing)`` fractions per generator, row-major, origin first.
    Sphere: latitude rings with both poles as single points, north pole first.
    """
    if not spacing > 0:
        raise UsageError("grid spacing must be positive")
    if spec.is_torus:
        N = [max(1, int(np.ceil(np.linalg.norm(b) / spacing - 1e-9))) for b in spec.basis.T]
        i, j = np.meshgrid(np.arange(N[0]) / N[0], np.arange(N[1]) / N[1], indexing="ij")
        frac = np.stack([i.ravel(), j.ravel()], axis=1)
        return frac @ spec.basis.T, np.zeros(len(frac), dtype=int)
    R = spec.radius
    m = max(2, int(np.ceil(np.pi * R / spacing - 1e-9)))
    pts = []
    for i in range(m + 1):
        th = np.pi * i / m
        n_i = 1 if i in (0, m) else max(1, int(np.ceil(_TWO_PI * R * np.sin(th) / spacing - 1e-9)))
        shift = 0.5 if i % 2 else 0.0
        for j in range(n_i):
            pts.append((th, _TWO_PI * (j + shift) / n_i))
    th = np.array(pts)
    P = R * np.stack([np.sin(th[:, 0]) * np.cos(th[:, 1]), np.sin(th[:, 0]) * np.sin(th[:, 1]),
                      np.cos(th[:, 0])], axis=1)
    target = np.where(np.abs(P[:, 2]) > R * np.cos(POLE_BAND), POLAR, EQUATORIAL)
    return sphere_from_xyz(spec, P, target), target


# --------------------------------------------------------------------------
# public scalar API


def _require_base(p, *vectors):
    for v in vectors:
        if v.base != p:
            raise UsageError("tangent vector is not based at the given point")


def metric_at(spec, p):
    X, c = as_batch(p)
    g = metric_batch(spec, X, c)[0]
    return MetricSample(p, g, np.linalg.inv(g))


def christoffel_at(spec, p):
    """Gamma[k][i][j] at ``p`` (analytic for flat/sphere, finite differences otherwise)."""
    X, c = as_batch(p)
    return christoffel_batch(spec, X, c)[0]


def inner(spec, p, v, w):
    _require_base(p, v, w)
    g = metric_at(spec, p).g
    a, b = v.components, w.components
    # written so that swapping v and w is exact in floating point
    return float(g[0, 0] * (a[0] * b[0]) + g[1, 1] * (a[1] * b[1]) + g[0, 1] * (a[0] * b[1] + a[1] * b[0]))


def norm(spec, v):
    return float(np.sqrt(inner(spec, v.base, v, v)))


def normalize(spec, v):
    n = norm(spec, v)
    if n == 0.0:
        raise UsageError("cannot normalize the zero vector")
    return TangentVector(v.base, tuple(c / n for c in v.components), unit=True)


def check_unit(spec, v, tol=1e-10):
    if v.unit and abs(norm(spec, v) - 1.0) > tol:
        raise UsageError("vector flagged unit does not have unit g-norm")
    return v


def angle_between(spec, p, v, w):
    _require_base(p, v, w)
    nv, nw = norm(spec, v), norm(spec, w)
    if nv == 0.0 or nw == 0.0:
        raise UsageError("angle with a zero vector is undefined")
    cos = inner(spec, p, v, w) / (nv * nw)
    return float(np.arccos(np.clip(cos, -1.0, 1.0)))


def wrap(spec, p):
    X, c = as_batch(p)
    X, c = wrap_batch(spec, X, c)
    return ChartPoint(X[0], c[0])


def to_chart(spec, p, chart):
    X, c = as_batch(p)
    X, c = to_chart_batch(spec, X, c, chart)
    return ChartPoint(X[0], c[0])


def chart_distance(spec, p, q):
    """Euclidean length of the chart displacement p -> q (nearest image, p's chart)."""
    X, cx = as_batch(p)
    Y, cy = as_batch(q)
    return float(np.linalg.norm(displacement_batch(spec, X, cx, Y, cy)[0]))


def ambient_distance(spec, p, q):
    """Chart-free closeness measure: R^3 chord on the sphere, chart displacement on tori."""
    if spec.is_torus:
        return chart_distance(spec, p, q)
    X, cx = as_batch(p)
    Y, cy = as_batch(q)
    return float(np.linalg.norm(sphere_xyz(spec, X, cx)[0] - sphere_xyz(spec, Y, cy)[0]))
