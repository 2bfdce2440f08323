"""Maximal epsilon-separated nets by greedy farthest-point insertion.

Candidates are the points of ``grid(spec, epsilon / 4)``. Starting from the
candidate at index 0 (the chart origin on tori, the north pole on the sphere)
the candidate farthest from the current net is inserted while that distance is
at least epsilon. Passing ``base`` continues the insertion from an existing
coarser net, which gives nested nets.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .distance import (
    ANALYTIC,
    GRAPH,
    DistanceMethod,
    analytic_matrix,
    default_method,
    distance_matrix,
)
from .errors import ResourceError, UsageError
from .manifold import (
    SPHERE,
    ChartPoint,
    as_batch,
    displacement_batch,
    grid,
    sphere_xyz,
    wrap_batch,
)

CANDIDATE_FACTOR = 4
COMPLETION_FACTOR = 8
AUDIT_FACTOR = 10
SEPARATION_SLACK = 1e-9
COVERING_SLACK = 0.1
CANDIDATE_CAP = 2_000_000


@dataclass
class Net:
    coords: np.ndarray
    charts: np.ndarray
    epsilon: float
    spec_hash: str
    # Distance method used during construction; recorded as provenance.
    method: str = ANALYTIC
    family: str = ""
    base_size: int = field(default=0)

    @property
    def size(self):
        return len(self.coords)

    @property
    def points(self):
        return [ChartPoint(x, c) for x, c in zip(self.coords, self.charts)]

    @property
    def net_id(self):
        h = hashlib.sha1(self.spec_hash.encode())
        h.update(repr(float(self.epsilon)).encode())
        h.update(np.ascontiguousarray(self.coords).tobytes())
        h.update(np.ascontiguousarray(self.charts, dtype=np.int64).tobytes())
        return h.hexdigest()[:12]

    def dumps(self):
        lines = [f"# net spec={self.spec_hash} method={self.method} base_size={self.base_size}",
                 f"{self.family} {self.epsilon!r} {self.size}"]
        lines += [f"{x!r} {y!r} {c}" for (x, y), c in zip(self.coords.tolist(), self.charts.tolist())]
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text):
        meta, rows, head = {}, [], None
        for line in text.splitlines():
            if line.startswith("#"):
                meta.update(kv.split("=", 1) for kv in line[1:].split() if "=" in kv)
            elif line.strip():
                if head is None:
                    head = line.split()
                else:
                    x, y, c = line.split()
                    rows.append((float(x), float(y), int(c)))
        if head is None or len(rows) != int(head[2]):
            raise UsageError("malformed net file: count does not match the point lines")
        arr = np.array(rows, dtype=float).reshape(-1, 3)
        return cls(arr[:, :2].copy(), arr[:, 2].astype(int), float(head[1]), meta.get("spec", ""),
                   meta.get("method", ANALYTIC), head[0], int(meta.get("base_size", 0)))


@dataclass(frozen=True)
class NetReport:
    min_pairwise: float
    covering_radius: float
    epsilon: float
    size: int
    audit_points: int

    @property
    def separated(self):
        return self.min_pairwise >= self.epsilon - SEPARATION_SLACK

    @property
    def covering(self):
        return self.covering_radius <= self.epsilon * (1 + COVERING_SLACK)

    @property
    def passed(self):
        return self.separated and self.covering


class _Probe:
    """Distances from single points to a fixed set of targets.

    ``probe(x, c, limit)`` returns ``(indices, distances)`` covering at least
    every target closer than ``limit``.
    """

    def __init__(self, spec, method, X, chart):
        self.spec, self.method = spec, method
        self.X, self.chart = X, chart
        if method.kind == GRAPH:
            self._attach = method.graph.attach(X, chart)
        else:
            self._P = _ambient(spec, X, chart)
            self._tree, self._images = _tiled_tree(spec, self._P)

    def __call__(self, x, c, limit=np.inf):
        spec, X, chart = self.spec, self.X, self.chart
        if self.method.kind == GRAPH:
            graph = self.method.graph
            fld = graph.field(x[None], [c], limit=limit)
            qi, nj, lens = self._attach
            out = np.full(len(X), np.inf)
            np.minimum.at(out, qi, fld[nj] + lens)
            direct = graph.direct(np.repeat(x[None], len(X), 0), np.full(len(X), c), X, chart)
            return np.arange(len(X)), np.minimum(out, direct)
        p = _ambient(spec, x[None], [c])[0]
        if np.isfinite(limit):
            # ambient chord never exceeds the metric distance
            hits = self._tree.query_ball_point(p, min(limit, 1e300) * (1 + 1e-9) + 1e-12)
            idx = np.unique(self._images[np.asarray(hits, dtype=np.int64)])
        else:
            idx = np.arange(len(X))
        if spec.family == SPHERE:
            cross = np.linalg.norm(np.cross(self._P[idx], p), axis=1)
            return idx, spec.radius * np.arctan2(cross, self._P[idx] @ p)
        return idx, analytic_matrix(spec, x[None], [c], X[idx], chart[idx])[0]


def _greedy(probe, mind, epsilon, X, chart, chosen_X, chosen_c):
    """Insert the farthest target while it is at least ``epsilon`` from the net."""
    while True:
        k = int(np.argmax(mind))
        far = mind[k]
        if not far >= epsilon:
            return
        chosen_X.append(X[k])
        chosen_c.append(chart[k])
        # Only targets currently farther than the new point's distance can improve.
        idx, d = probe(X[k], chart[k], limit=far)
        mind[idx] = np.minimum(mind[idx], d)


def _method_for(spec, method):
    method = method or default_method(spec)
    if method.kind == GRAPH and method.graph is None:
        raise UsageError("graph net requested before the graph was built; call prepare()")
    if method.kind not in (ANALYTIC, GRAPH):
        raise UsageError("nets are built with analytic or graph distances")
    return method.validate(spec)


def _grid_checked(spec, spacing, what):
    if spec.is_torus:
        est = np.prod([np.ceil(np.linalg.norm(b) / spacing) for b in spec.basis.T])
    else:
        est = 4 * np.pi * spec.radius ** 2 / spacing ** 2
    if est > CANDIDATE_CAP:
        raise ResourceError(f"{what} at spacing {spacing} needs ~{int(est)} points (cap {CANDIDATE_CAP})")
    return grid(spec, spacing)


def build_net(spec, epsilon, method: DistanceMethod | None = None, base: Net | None = None):
    """Greedy maximal ``epsilon``-separated net (a superset of ``base`` when given)."""
    if not epsilon > 0:
        raise UsageError("epsilon must be positive")
    method = _method_for(spec, method)
    if base is not None:
        if base.spec_hash != spec.spec_hash:
            raise UsageError("base net belongs to a different manifold")
        if base.epsilon < epsilon:
            raise UsageError("base net must be at least as coarse as the refinement")
    if base is None:
        C, cc = _grid_checked(spec, epsilon / CANDIDATE_FACTOR, "candidate grid")
        chosen_X, chosen_c = [C[0]], [cc[0]]
    else:
        chosen_X, chosen_c = list(base.coords), list(base.charts)
    # Phase 1 runs on the epsilon/4 candidate grid. Phase 2 repeats the
    # insertion on a finer, completion grid (distinct from the audit grid) so that the audited
    # covering radius stays within the epsilon/10 slack.
    for factor in (CANDIDATE_FACTOR, COMPLETION_FACTOR):
        C, cc = _grid_checked(spec, epsilon / factor, "candidate grid")
        probe = _Probe(spec, method, C, cc)
        mind = _distance_to_set(spec, method, np.array(chosen_X), np.array(chosen_c), C, cc)
        _greedy(probe, mind, epsilon, C, cc, chosen_X, chosen_c)
    coords = np.array(chosen_X, dtype=float).reshape(-1, 2)
    charts = np.array(chosen_c, dtype=int)
    return Net(coords, charts, float(epsilon), spec.spec_hash, method.kind, spec.family,
               0 if base is None else base.size)


def _ambient(spec, X, chart):
    if spec.family == SPHERE:
        return sphere_xyz(spec, X, chart) / spec.radius
    return wrap_batch(spec, X, chart)[0]


def _tiled_tree(spec, P):
    if spec.family == SPHERE:
        return cKDTree(P), np.arange(len(P))
    shifts = np.array([(i, j) for i in (-1, 0, 1) for j in (-1, 0, 1)], dtype=float) @ spec.basis.T
    tiled = (P[None] + shifts[:, None]).reshape(-1, 2)
    return cKDTree(tiled), np.tile(np.arange(len(P)), len(shifts))


def _chord_to_arc(spec, c):
    if spec.family == SPHERE:
        return 2.0 * spec.radius * np.arcsin(np.clip(c / 2.0, 0.0, 1.0))
    return c


def net_pairwise_min(spec, net, method=None):
    """Smallest distance between two distinct net points (inf for one point)."""
    method = _method_for(spec, method)
    if net.size < 2:
        return np.inf
    if method.kind == ANALYTIC:
        # Closed-form metrics are monotone in the ambient (or unfolded planar)
        # distance, so a k-d tree finds the closest pair exactly.
        P = _ambient(spec, net.coords, net.charts)
        tree, images = _tiled_tree(spec, P)
        d, idx = tree.query(P, k=min(len(images), 10))
        d = np.where(images[idx] == np.arange(net.size)[:, None], np.inf, d)
        return float(_chord_to_arc(spec, d.min()))
    # Separation only matters near epsilon, so each field stops at 2 epsilon.
    probe = _Probe(spec, method, net.coords, net.charts)
    best = np.inf
    for i, (x, c) in enumerate(zip(net.coords, net.charts)):
        idx, d = probe(x, c, limit=2 * net.epsilon)
        d = np.where(idx == i, np.inf, d)
        best = min(best, float(d.min()))
    if not np.isfinite(best):
        D = distance_matrix(spec, net.coords, net.charts, net.coords, net.charts, method)
        np.fill_diagonal(D, np.inf)
        best = float(D.min())
    return best


def _distance_to_set(spec, method, S, cs, A, ca):
    """Distance from every point of A to its nearest point of S."""
    if method.kind == ANALYTIC:
        tree, _ = _tiled_tree(spec, _ambient(spec, S, cs))
        d, _ = tree.query(_ambient(spec, A, ca), k=1)
        return _chord_to_arc(spec, d)
    graph = method.graph
    return np.minimum(graph.resolve(graph.field(S, cs), A, ca), _direct_to_set(graph, S, cs, A, ca))


def _direct_to_set(graph, S, cs, A, ca):
    out = np.full(len(A), np.inf)
    for x, c in zip(S, cs):
        near = np.nonzero(np.linalg.norm(displacement_batch(graph.spec, np.repeat(x[None], len(A), 0),
                                                            np.full(len(A), c), A, ca), axis=1)
                          <= graph.link_radius)[0]
        if len(near):
            out[near] = np.minimum(out[near], graph.direct(np.repeat(x[None], len(near), 0),
                                                           np.full(len(near), c), A[near], ca[near]))
    return out


def covering_radius(spec, net, method=None, spacing=None):
    """Largest distance from an audit-grid point to its nearest net point."""
    method = _method_for(spec, method)
    spacing = spacing or net.epsilon / AUDIT_FACTOR
    A, ca = _grid_checked(spec, spacing, "audit grid")
    return float(_distance_to_set(spec, method, net.coords, net.charts, A, ca).max()), len(A)


def verify_net(spec, net, method=None):
    if net.size == 0:
        raise UsageError("empty net")
    cover, n_audit = covering_radius(spec, net, method)
    return NetReport(net_pairwise_min(spec, net, method), cover, net.epsilon, net.size, n_audit)


def nearest_net_point(spec, net, q, method=None):
    """(index, distance) of the net point nearest to ``q``; ties go to the lowest index."""
    method = _method_for(spec, method)
    X, c = as_batch(q)
    d = distance_matrix(spec, X, c, net.coords, net.charts, method)[0]
    k = int(np.argmin(d))
    return k, float(d[k])
