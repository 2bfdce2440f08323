"""Riemannian distance and minimizing directions by three independent routes.

``analytic``
    Closed forms: nearest lattice image on the flat torus, great-circle angle
    on the sphere.
``shooting``
    Multi-start shooting of geodesics from ``x`` (64 initial angles), a
    bisection on the sign of the cross-track miss between the bracketing
    angles, then a Gauss-Newton polish of (angle, length) on the miss vector.
``graph``
    Dijkstra shortest paths over a grid graph whose edge weights are Gauss-
    Legendre quadratures of the metric along chart segments. Query points are
    linked to all graph nodes within the link radius.

The graph route only ever over-estimates distances (paths are restricted to
chart segments), which is what makes it usable as a one-sided oracle.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra
from scipy.spatial import cKDTree

from .errors import OutOfRangeError, ResourceError, UndefinedDirectionError, UsageError
from .geodesic import DEFAULT_CONTROL, flow_batch
from .manifold import (
    POLAR,
    SPHERE,
    ChartPoint,
    TangentVector,
    as_batch,
    displacement_batch,
    grid,
    metric_batch,
    orthonormal_frame_batch,
    sphere_xyz,
    to_chart_batch,
    wrap_batch,
)

ANALYTIC, SHOOTING, GRAPH = "analytic", "shooting", "graph"
KINDS = (ANALYTIC, SHOOTING, GRAPH)

N_STARTS = 64
N_CANDIDATES = 2
LINK_FACTOR = 3.2
NODE_CAP = 2_000_000
QUADRATURE_SLACK = 1e-6

_GL_T, _GL_W = np.polynomial.legendre.leggauss(8)
_GL_T = 0.5 * (_GL_T + 1.0)
_GL_W = 0.5 * _GL_W


@dataclass(frozen=True)
class DistanceMethod:
    kind: str = ANALYTIC
    graph_density: Optional[float] = None
    shooting_tol: float = 1e-9
    graph: Optional["DistanceGraph"] = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise UsageError(f"unknown distance method {self.kind!r}")

    def density(self, spec):
        return self.graph_density if self.graph_density is not None else spec.injrad_bound / 50.0

    def validate(self, spec):
        if self.kind == ANALYTIC and not spec.has_analytic_distance:
            raise UsageError(f"no analytic distance for {spec.family} with amplitude {spec.amplitude}")
        if self.density(spec) > spec.injrad_bound / 5.0 * (1 + 1e-12):
            raise UsageError("graph_density must be <= injrad_bound / 5")
        return self

    @property
    def tolerance(self):
        return {ANALYTIC: 1e-12, SHOOTING: self.shooting_tol, GRAPH: QUADRATURE_SLACK}[self.kind]


def default_method(spec):
    """Analytic where a closed form exists, graph otherwise."""
    return DistanceMethod(ANALYTIC if spec.has_analytic_distance else GRAPH)


def prepare(spec, method, cache_dir=None):
    """Return ``method`` with its graph attached (building or loading it if needed)."""
    method.validate(spec)
    if method.kind != GRAPH or method.graph is not None:
        return method
    density = method.density(spec)
    graph = cached_graph(spec, density, cache_dir) if cache_dir else build_graph(spec, density)
    return replace(method, graph_density=density, graph=graph)


# --------------------------------------------------------------------------
# analytic


def analytic_pairs(spec, X, cx, Y, cy):
    """Elementwise closed-form distances."""
    if spec.family == SPHERE:
        P, Q = sphere_xyz(spec, X, cx), sphere_xyz(spec, Y, cy)
        cross = np.linalg.norm(np.cross(P, Q), axis=-1)
        return spec.radius * np.arctan2(cross, np.sum(P * Q, axis=-1))
    if not spec.has_analytic_distance:
        raise UsageError("analytic distance unavailable for a curved conformal torus")
    return np.linalg.norm(displacement_batch(spec, X, cx, Y, cy), axis=1)


def analytic_matrix(spec, X, cx, Y, cy, chunk=2_000_000):
    X = np.asarray(X, dtype=float).reshape(-1, 2)
    Y = np.asarray(Y, dtype=float).reshape(-1, 2)
    cx = np.broadcast_to(np.asarray(cx, dtype=int), (len(X),))
    cy = np.broadcast_to(np.asarray(cy, dtype=int), (len(Y),))
    out = np.empty((len(X), len(Y)))
    if spec.family == SPHERE:
        P, Q = sphere_xyz(spec, X, cx), sphere_xyz(spec, Y, cy)
    rows = max(1, chunk // max(len(Y), 1))
    for a in range(0, len(X), rows):
        b = min(a + rows, len(X))
        if spec.family == SPHERE:
            cross = np.linalg.norm(np.cross(P[a:b, None, :], Q[None, :, :]), axis=-1)
            out[a:b] = spec.radius * np.arctan2(cross, P[a:b] @ Q.T)
        else:
            k = b - a
            Xa = np.repeat(X[a:b], len(Y), axis=0)
            Yb = np.tile(Y, (k, 1))
            out[a:b] = np.linalg.norm(displacement_batch(spec, Xa, None, Yb, None), axis=1).reshape(k, -1)
    return out


def _sphere_pull(spec, X, chart, W):
    W = np.array(W, dtype=float)
    polar = np.asarray(chart) == POLAR
    if np.any(polar):
        W[polar] = W[polar] @ np.array([[0.0, 0.0, 1.0], [0.0, 1.0, 0.0], [-1.0, 0.0, 0.0]]).T
    th, ph = X[:, 0], X[:, 1]
    e_th = np.stack([np.cos(th) * np.cos(ph), np.cos(th) * np.sin(ph), -np.sin(th)], axis=1)
    e_ph = np.stack([-np.sin(ph), np.cos(ph), np.zeros_like(ph)], axis=1)
    return np.stack([np.sum(W * e_th, axis=1) / spec.radius,
                     np.sum(W * e_ph, axis=1) / (spec.radius * np.sin(th))], axis=1)


def analytic_direction_batch(spec, X, cx, Y, cy):
    """Unit initial velocities at X of the minimizing geodesics to Y."""
    if spec.family == SPHERE:
        P = sphere_xyz(spec, X, cx) / spec.radius
        Q = sphere_xyz(spec, Y, cy) / spec.radius
        W = Q - np.sum(P * Q, axis=1, keepdims=True) * P
        n = np.linalg.norm(W, axis=1, keepdims=True)
        if np.any(n[:, 0] == 0):
            raise UndefinedDirectionError("direction between coincident or antipodal points")
        return _sphere_pull(spec, X, cx, W / n)
    D = displacement_batch(spec, X, cx, Y, cy)
    n = np.linalg.norm(D, axis=1, keepdims=True)
    if np.any(n[:, 0] == 0):
        raise UndefinedDirectionError("direction between coincident points")
    return D / n


# --------------------------------------------------------------------------
# shooting


def _shoot_residual(spec, E, ce, Y, cy):
    if spec.family == SPHERE:
        return sphere_xyz(spec, Y, cy) - sphere_xyz(spec, E, ce)
    return displacement_batch(spec, E, ce, Y, cy)


def _cross_sign(V, D):
    return np.sign(V[..., 0] * D[..., 1] - V[..., 1] * D[..., 0])


def _closest(spec, X, cx, V, Y, cy, Lmax, max_step):
    """Closest approach of each recorded ray polyline to its target.

    Returns (distance, arclength, cross sign). Projecting onto the segments
    between nodes rather than picking the nearest node keeps the score
    accurate to O(h^2) even with coarse steps.
    """
    Xs, Cs, Vs, arc = flow_batch(spec, X, cx, V, np.full(len(X), Lmax), max_step, record=True)
    T, n = arc.shape
    D = displacement_batch(spec, Xs.reshape(-1, 2), Cs.ravel(), np.tile(Y, (T, 1)), np.tile(cy, T))
    D = D.reshape(T, n, 2)[:-1]
    S = displacement_batch(spec, Xs[:-1].reshape(-1, 2), Cs[:-1].ravel(),
                           Xs[1:].reshape(-1, 2), Cs[1:].ravel()).reshape(T - 1, n, 2)
    ss = np.einsum("tni,tni->tn", S, S)
    t = np.clip(np.einsum("tni,tni->tn", D, S) / np.where(ss > 0, ss, 1.0), 0.0, 1.0)
    R = D - t[..., None] * S
    dist = np.linalg.norm(R, axis=2)
    k = np.argmin(dist, axis=0)
    r = np.arange(n)
    s_arc = arc[k, r] + t[k, r] * (arc[k + 1, r] - arc[k, r])
    # Segments of zero length (finished rows) fall back to the node velocity.
    dirn = np.where(ss[k, r][:, None] > 0, S[k, r], Vs[k, r])
    return dist[k, r], s_arc, _cross_sign(dirn, D[k, r])


def shoot_batch(spec, X, cx, Y, cy, tol=1e-9, max_step=DEFAULT_CONTROL.max_step, chunk=128):
    """Shooting distances and unit initial directions for each pair (X[i], Y[i])."""
    X, cx = wrap_batch(spec, X, cx)
    Y, cy = wrap_batch(spec, Y, cy)
    n = len(X)
    L = np.zeros(n)
    V = np.full((n, 2), np.nan)
    for a in range(0, n, chunk):
        b = min(a + chunk, n)
        L[a:b], V[a:b] = _shoot_chunk(spec, X[a:b], cx[a:b], Y[a:b], cy[a:b], tol, max_step)
    return L, V


def _shoot_chunk(spec, X, cx, Y, cy, tol, max_step):
    n = len(X)
    Lmax = 1.05 * spec.injrad_bound
    coarse = max(max_step, 0.05 * spec.injrad_bound)
    same = np.linalg.norm(displacement_batch(spec, X, cx, Y, cy), axis=1) < 1e-14
    F = orthonormal_frame_batch(spec, X, cx)

    # multi-start
    width = 2 * np.pi / N_STARTS
    starts = width * np.arange(N_STARTS)
    Xr, cr = np.repeat(X, N_STARTS, axis=0), np.repeat(cx, N_STARTS)
    Yr, cyr = np.repeat(Y, N_STARTS, axis=0), np.repeat(cy, N_STARTS)
    th = np.tile(starts, n)
    Fr = np.repeat(F, N_STARTS, axis=0)
    Vr = np.einsum("nij,nj->ni", Fr, np.stack([np.cos(th), np.sin(th)], axis=-1))
    dist, _, sign = _closest(spec, Xr, cr, Vr, Yr, cyr, Lmax, coarse)
    dist, sign = dist.reshape(n, N_STARTS), sign.reshape(n, N_STARTS)
    nxt = np.roll(np.arange(N_STARTS), -1)
    flip = (sign != sign[:, nxt]) & (sign != 0)
    score = np.where(flip, dist + dist[:, nxt], np.inf)
    # Near the cut locus a second, longer geodesic can bracket just as tightly,
    # so the best two brackets are both refined and the shorter one wins.
    top = np.argsort(score, axis=1, kind="stable")[:, :N_CANDIDATES]
    row = np.repeat(np.arange(n), N_CANDIDATES)
    j = top.ravel()
    found = np.isfinite(score[row, j]) | same[row]
    lo = starts[j].copy()
    L, V, miss = _refine(spec, X[row], cx[row], Y[row], cy[row], F[row], lo, sign[row, j],
                         width, Lmax, coarse, tol, max_step)
    ok = found & (miss < 1e-8)
    L = np.where(ok, L, np.inf).reshape(n, N_CANDIDATES)
    best = np.argmin(L, axis=1)
    pick = np.arange(n) * N_CANDIDATES + best
    L = L[np.arange(n), best]
    V = V[pick]
    L[~np.isfinite(L)] = np.nan
    L = np.where(same, 0.0, L)
    V = np.where(same[:, None], np.nan, V)
    return L, V


def _refine(spec, X, cx, Y, cy, F, lo, s_lo, width, Lmax, coarse, tol, max_step):
    def rays(theta):
        return np.einsum("nij,nj->ni", F, np.stack([np.cos(theta), np.sin(theta)], axis=-1))

    # Bisection on the cross-track sign down to ~1e-4 rad, then Gauss-Newton.
    for _ in range(10):
        width *= 0.5
        mid = lo + width
        _, _, s_mid = _closest(spec, X, cx, rays(mid), Y, cy, Lmax, coarse)
        lo = np.where(s_mid == s_lo, mid, lo)
    theta = lo + 0.5 * width
    _, L, _ = _closest(spec, X, cx, rays(theta), Y, cy, Lmax, coarse)

    # Gauss-Newton on (angle, length) with a finite-difference Jacobian
    eta = 1e-7
    for _ in range(10):
        L = np.maximum(L, 1e-12)
        E, ce, _ = flow_batch(spec, X, cx, rays(theta), L, max_step)
        r = _shoot_residual(spec, E, ce, Y, cy)
        E1, c1, _ = flow_batch(spec, X, cx, rays(theta + eta), L, max_step)
        E2, c2, _ = flow_batch(spec, X, cx, rays(theta), L + eta, max_step)
        J = np.stack([(r - _shoot_residual(spec, E1, c1, Y, cy)) / eta,
                      (r - _shoot_residual(spec, E2, c2, Y, cy)) / eta], axis=-1)
        JtJ = np.einsum("nki,nkj->nij", J, J) + 1e-30 * np.eye(2)
        step = np.linalg.solve(JtJ, np.einsum("nki,nk->ni", J, r)[..., None])[..., 0]
        step = np.nan_to_num(step)
        theta += step[:, 0]
        L += step[:, 1]
        if np.all(np.abs(step) < tol):
            break
    L = np.maximum(L, 1e-12)
    E, ce, _ = flow_batch(spec, X, cx, rays(theta), L, max_step)
    miss = np.linalg.norm(_shoot_residual(spec, E, ce, Y, cy), axis=1)
    return L, rays(theta), miss


# --------------------------------------------------------------------------
# graph


def segment_length_batch(spec, A, ca, B, cb):
    """Metric length of the chart segment A -> B by 8-point Gauss-Legendre quadrature."""
    A = np.asarray(A, dtype=float).reshape(-1, 2)
    B = np.asarray(B, dtype=float).reshape(-1, 2)
    ca = np.broadcast_to(np.asarray(ca, dtype=int), (len(A),))
    cb = np.broadcast_to(np.asarray(cb, dtype=int), (len(B),))
    if spec.family == SPHERE:
        # Use whichever chart keeps both endpoints farthest from its own poles.
        best = None
        for c in (0, 1):
            Ac, _ = to_chart_batch(spec, A, ca, c)
            Bc, _ = to_chart_batch(spec, B, cb, c)
            m = np.minimum(np.sin(Ac[:, 0]), np.sin(Bc[:, 0]))
            if best is None:
                best = (m, Ac, Bc, np.full(len(A), c))
            else:
                pick = m > best[0]
                best[1][pick], best[2][pick], best[3][pick] = Ac[pick], Bc[pick], c
                best = (np.maximum(m, best[0]), best[1], best[2], best[3])
        _, A, B, chart = best
        D = B - A
        D[:, 1] = np.mod(D[:, 1] + np.pi, 2 * np.pi) - np.pi
    else:
        chart = np.zeros(len(A), dtype=int)
        D = displacement_batch(spec, A, ca, B, cb)
    total = np.zeros(len(A))
    for t, w in zip(_GL_T, _GL_W):
        g = metric_batch(spec, A + t * D, chart)
        total += w * np.sqrt(np.einsum("ni,nij,nj->n", D, g, D))
    return total


def _proximity_coords(spec, X, chart):
    if spec.family == SPHERE:
        return sphere_xyz(spec, X, chart)
    return wrap_batch(spec, X, chart)[0]


class DistanceGraph:
    """Immutable grid graph used as the brute-force distance oracle."""

    def __init__(self, spec, node_coords, node_charts, edge_i, edge_j, lengths, spacing,
                 link_radius=None):
        self.spec = spec
        self.node_coords = np.asarray(node_coords, dtype=float)
        self.node_charts = np.asarray(node_charts, dtype=int)
        self.edge_i = np.asarray(edge_i, dtype=np.int64)
        self.edge_j = np.asarray(edge_j, dtype=np.int64)
        self.lengths = np.asarray(lengths, dtype=float)
        self.spacing = float(spacing)
        self.link_radius = float(link_radius if link_radius is not None else LINK_FACTOR * spacing)
        n = len(self.node_coords)
        rows = np.concatenate([self.edge_i, self.edge_j])
        cols = np.concatenate([self.edge_j, self.edge_i])
        data = np.concatenate([self.lengths, self.lengths])
        # One extra empty row is reserved for the virtual source used by `field`.
        order = np.lexsort((cols, rows))
        rows, cols, data = rows[order], cols[order], data[order]
        self._indptr = np.searchsorted(rows, np.arange(n + 1)).astype(np.int64)
        self._indices = cols.astype(np.int32)
        self._data = data
        P = _proximity_coords(spec, self.node_coords, self.node_charts)
        self._images = np.zeros(len(P), dtype=np.int64)
        if spec.is_torus:
            shifts = np.array([(i, j) for i in (-1, 0, 1) for j in (-1, 0, 1)], dtype=float) @ spec.basis.T
            P = (P[None, :, :] + shifts[:, None, :]).reshape(-1, 2)
            self._images = np.tile(np.arange(n), len(shifts))
        else:
            self._images = np.arange(n)
        self._tree = cKDTree(P)

    @property
    def n_nodes(self):
        return len(self.node_coords)

    @property
    def nodes(self):
        return [ChartPoint(x, c) for x, c in zip(self.node_coords, self.node_charts)]

    @property
    def edges(self):
        return list(zip(self.edge_i.tolist(), self.edge_j.tolist(), self.lengths.tolist()))

    def degrees(self):
        return np.diff(self._indptr)

    def attach(self, X, chart):
        """Graph nodes within the link radius of each query point, with segment lengths."""
        X, chart = wrap_batch(self.spec, X, chart)
        q = cKDTree(_proximity_coords(self.spec, X, chart))
        pairs = q.sparse_distance_matrix(self._tree, self.link_radius, output_type="ndarray")
        qi = pairs["i"].astype(np.int64)
        nj = self._images[pairs["j"]]
        if len(qi):
            key = np.unique(qi * self.n_nodes + nj)
            qi, nj = key // self.n_nodes, key % self.n_nodes
        missing = np.setdiff1d(np.arange(len(X)), qi)
        if len(missing):
            raise UsageError("query point has no graph node within the link radius")
        lens = segment_length_batch(self.spec, X[qi], chart[qi], self.node_coords[nj], self.node_charts[nj])
        return qi, nj, lens

    def field(self, X, chart, limit=np.inf):
        """Shortest-path distance from the nearest of the given points to every node.

        Nodes farther than ``limit`` are reported as ``inf``.
        """
        X = np.asarray(X, dtype=float).reshape(-1, 2)
        chart = np.broadcast_to(np.asarray(chart, dtype=int), (len(X),))
        _, nj, lens = self.attach(X, chart)
        best = np.full(self.n_nodes, np.inf)
        np.minimum.at(best, nj, lens)
        src = np.nonzero(np.isfinite(best))[0]
        n = self.n_nodes
        indptr = np.concatenate([self._indptr, [self._indptr[-1] + len(src)]])
        indices = np.concatenate([self._indices, src.astype(np.int32)])
        data = np.concatenate([self._data, best[src]])
        G = csr_matrix((data, indices, indptr), shape=(n + 1, n + 1))
        return dijkstra(G, directed=True, indices=n, limit=limit)[:n]

    def resolve(self, fld, X, chart):
        """Distance from the field's source set to each query point."""
        X = np.asarray(X, dtype=float).reshape(-1, 2)
        chart = np.broadcast_to(np.asarray(chart, dtype=int), (len(X),))
        qi, nj, lens = self.attach(X, chart)
        out = np.full(len(X), np.inf)
        np.minimum.at(out, qi, fld[nj] + lens)
        return out

    def distance_pairs(self, X, cx, Y, cy):
        X = np.asarray(X, dtype=float).reshape(-1, 2)
        Y = np.asarray(Y, dtype=float).reshape(-1, 2)
        cx = np.broadcast_to(np.asarray(cx, dtype=int), (len(X),))
        cy = np.broadcast_to(np.asarray(cy, dtype=int), (len(Y),))
        out = np.empty(len(X))
        for i in range(len(X)):
            out[i] = self.resolve(self.field(X[i:i + 1], cx[i:i + 1]), Y[i:i + 1], cy[i:i + 1])[0]
        return np.minimum(out, self.direct(X, cx, Y, cy))

    def direct(self, X, cx, Y, cy):
        """Straight chart-segment length where the pair is within the link radius, else inf."""
        P = _proximity_coords(self.spec, X, cx)
        Q = _proximity_coords(self.spec, Y, cy)
        if self.spec.is_torus:
            sep = np.linalg.norm(displacement_batch(self.spec, X, cx, Y, cy), axis=1)
        else:
            sep = np.linalg.norm(P - Q, axis=1)
        out = np.full(len(X), np.inf)
        near = sep <= self.link_radius
        if np.any(near):
            out[near] = segment_length_batch(self.spec, X[near], cx[near], Y[near], cy[near])
        return out

    def check_invariants(self):
        deg = self.degrees()
        if deg.min() < 3:
            raise AssertionError("graph node with fewer than 3 neighbours")
        if np.any(self.lengths <= 0):
            raise AssertionError("nonpositive edge length")
        return True

    # text serialization -------------------------------------------------

    def dumps(self):
        lines = ["# distance graph v1",
                 f"spec {self.spec.spec_hash}",
                 f"spacing {self.spacing!r}",
                 f"link_radius {self.link_radius!r}",
                 f"nodes {self.n_nodes}",
                 f"edges {len(self.lengths)}"]
        lines += [f"n {x!r} {y!r} {c}" for (x, y), c in zip(self.node_coords.tolist(), self.node_charts.tolist())]
        lines += [f"e {i} {j} {w!r}" for i, j, w in self.edges]
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, spec, text):
        head, nodes, edges = {}, [], []
        for line in text.splitlines():
            if not line or line.startswith("#"):
                continue
            tag, *rest = line.split()
            if tag == "n":
                nodes.append((float(rest[0]), float(rest[1]), int(rest[2])))
            elif tag == "e":
                edges.append((int(rest[0]), int(rest[1]), float(rest[2])))
            else:
                head[tag] = rest[0]
        if head.get("spec") != spec.spec_hash:
            raise UsageError("cached graph belongs to a different manifold")
        nodes = np.array(nodes, dtype=float).reshape(-1, 3)
        edges = np.array(edges, dtype=float).reshape(-1, 3)
        return cls(spec, nodes[:, :2], nodes[:, 2].astype(int), edges[:, 0].astype(np.int64),
                   edges[:, 1].astype(np.int64), edges[:, 2], float(head["spacing"]),
                   float(head["link_radius"]))


def build_graph(spec, density):
    """Grid graph at spacing ~``density``; nodes linked within ``LINK_FACTOR * density``."""
    if not density > 0:
        raise UsageError("graph density must be positive")
    if spec.is_torus:
        est = np.prod([np.ceil(np.linalg.norm(b) / density) for b in spec.basis.T])
    else:
        est = 4 * np.pi * spec.radius ** 2 / density ** 2
    if est > NODE_CAP:
        raise ResourceError(f"graph at density {density} needs ~{int(est)} nodes (cap {NODE_CAP})")
    X, chart = grid(spec, density)
    if spec.is_torus:
        # grid spacing along each generator can be slightly below `density`
        h = max(np.linalg.norm(b) / np.ceil(np.linalg.norm(b) / density - 1e-9) for b in spec.basis.T)
    else:
        h = density
    radius = LINK_FACTOR * h
    P = _proximity_coords(spec, X, chart)
    n = len(X)
    if spec.is_torus:
        shifts = np.array([(i, j) for i in (-1, 0, 1) for j in (-1, 0, 1)], dtype=float) @ spec.basis.T
        tiled = (P[None, :, :] + shifts[:, None, :]).reshape(-1, 2)
        images = np.tile(np.arange(n), len(shifts))
    else:
        tiled, images = P, np.arange(n)
    pairs = cKDTree(P).sparse_distance_matrix(cKDTree(tiled), radius, output_type="ndarray")
    i = pairs["i"].astype(np.int64)
    j = images[pairs["j"]]
    keep = i < j
    key = np.unique(i[keep] * n + j[keep])
    ei, ej = key // n, key % n
    lengths = segment_length_batch(spec, X[ei], chart[ei], X[ej], chart[ej])
    return DistanceGraph(spec, X, chart, ei, ej, lengths, h, radius)


def graph_cache_path(cache_dir, spec, density):
    return os.path.join(cache_dir, f"graph_{spec.spec_hash}_{density!r}.txt")


def cached_graph(spec, density, cache_dir):
    path = graph_cache_path(cache_dir, spec, density)
    if os.path.exists(path):
        with open(path) as fh:
            return DistanceGraph.loads(spec, fh.read())
    graph = build_graph(spec, density)
    try:
        os.makedirs(cache_dir, exist_ok=True)
        with open(path, "w") as fh:
            fh.write(graph.dumps())
    except OSError as exc:
        raise ResourceError(f"cannot write graph cache {path}: {exc}") from exc
    return graph


# --------------------------------------------------------------------------
# public API


def _need_graph(method):
    if method.graph is None:
        raise UsageError("graph method used before the graph was built; call prepare()")
    return method.graph


def distance_pairs(spec, X, cx, Y, cy, method):
    """Elementwise distances d(X[i], Y[i])."""
    X = np.asarray(X, dtype=float).reshape(-1, 2)
    Y = np.asarray(Y, dtype=float).reshape(-1, 2)
    cx = np.broadcast_to(np.asarray(cx, dtype=int), (len(X),))
    cy = np.broadcast_to(np.asarray(cy, dtype=int), (len(Y),))
    if method.kind == ANALYTIC:
        method.validate(spec)
        return analytic_pairs(spec, X, cx, Y, cy)
    if method.kind == GRAPH:
        return _need_graph(method).distance_pairs(X, cx, Y, cy)
    L, _ = shoot_batch(spec, X, cx, Y, cy, method.shooting_tol)
    if np.any(np.isnan(L)) or np.any(L >= spec.injrad_bound):
        raise OutOfRangeError("shooting distance requested beyond injrad_bound (or failed to converge)")
    return L


def distance_matrix(spec, X, cx, Y, cy, method):
    """All distances d(X[i], Y[j])."""
    X = np.asarray(X, dtype=float).reshape(-1, 2)
    Y = np.asarray(Y, dtype=float).reshape(-1, 2)
    cx = np.broadcast_to(np.asarray(cx, dtype=int), (len(X),))
    cy = np.broadcast_to(np.asarray(cy, dtype=int), (len(Y),))
    if method.kind == ANALYTIC:
        method.validate(spec)
        return analytic_matrix(spec, X, cx, Y, cy)
    if method.kind == GRAPH:
        graph = _need_graph(method)
        out = np.empty((len(X), len(Y)))
        for j in range(len(Y)):
            out[:, j] = graph.resolve(graph.field(Y[j:j + 1], cy[j:j + 1]), X, cx)
            out[:, j] = np.minimum(out[:, j], graph.direct(X, cx, np.repeat(Y[j:j + 1], len(X), 0),
                                                           np.repeat(cy[j:j + 1], len(X))))
        return out
    Xr, cxr = np.repeat(X, len(Y), axis=0), np.repeat(cx, len(Y))
    Yr, cyr = np.tile(Y, (len(X), 1)), np.tile(cy, len(X))
    return distance_pairs(spec, Xr, cxr, Yr, cyr, method).reshape(len(X), len(Y))


def distance(spec, x, y, method=None):
    """Riemannian distance between two points."""
    method = method or default_method(spec)
    X, cx = as_batch(x)
    Y, cy = as_batch(y)
    return float(distance_pairs(spec, X, cx, Y, cy, method)[0])


def geodesic_to_batch(spec, X, cx, Y, cy, method):
    """Distances and unit minimizing directions, the latter in the charts of ``X``.

    The graph method falls back to shooting here: it has no notion of direction.
    """
    X = np.asarray(X, dtype=float).reshape(-1, 2)
    cx = np.broadcast_to(np.asarray(cx, dtype=int), (len(X),))
    Xw, cw = wrap_batch(spec, X, cx)
    Yw, cyw = wrap_batch(spec, Y, cy)
    if method.kind == ANALYTIC and spec.has_analytic_distance:
        d = analytic_pairs(spec, Xw, cw, Yw, cyw)
        if np.any(d == 0):
            raise UndefinedDirectionError("minimizing direction between coincident points")
        # closed forms stay valid up to the cut locus, not just the injectivity radius
        if spec.is_torus and np.any(_on_torus_cut_locus(spec, Xw, Yw)):
            raise OutOfRangeError("target lies on the cut locus: two minimizing directions")
        V = analytic_direction_batch(spec, Xw, cw, Yw, cyw)
    else:
        d, V = shoot_batch(spec, Xw, cw, Yw, cyw, method.shooting_tol)
        if np.any(d == 0):
            raise UndefinedDirectionError("minimizing direction between coincident points")
        if np.any(np.isnan(d)) or np.any(d >= spec.injrad_bound):
            raise OutOfRangeError("minimizing direction requested beyond injrad_bound")
    moved = cw != cx
    if np.any(moved):
        _, _, V[moved] = to_chart_batch(spec, Xw[moved], cw[moved], cx[moved], V[moved])
    return d, V


def _on_torus_cut_locus(spec, X, Y, rel=1e-12):
    """True where a second lattice image of Y is as close to X as the nearest one."""
    D = displacement_batch(spec, X, None, Y, None)
    best = np.sum(D ** 2, axis=1)
    tie = np.zeros(len(X), dtype=bool)
    for k in ((1, 0), (0, 1), (1, 1), (1, -1), (-1, 0), (0, -1), (-1, -1), (-1, 1)):
        n = np.sum((D + spec.basis @ np.array(k, dtype=float)) ** 2, axis=1)
        tie |= n <= best * (1 + rel)
    return tie


def minimizing_direction(spec, x, y, method=None):
    method = method or default_method(spec)
    X, cx = as_batch(x)
    Y, cy = as_batch(y)
    _, V = geodesic_to_batch(spec, X, cx, Y, cy, method)
    return TangentVector(x, V[0], unit=True)
