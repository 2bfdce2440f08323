"""Distance-function embedding of a manifold into sup-norm space over a net.

A point ``x`` maps to the vector ``(d(x, z_1), ..., d(x, z_N))`` over the net
points ``z_i``. The map is 1-Lipschitz for the sup norm; the distortion scan
measures how far below 1 the ratio ``|i(x) - i(y)|_inf / d(x, y)`` can go.

The reported constant is ``C = 1 - min_ratio``, the lower-bound form of the
bi-Lipschitz condition. The ``(1 + C)`` upper form differs only at O(C^2).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .distance import (
    GRAPH,
    analytic_pairs,
    default_method,
    distance_matrix,
    distance_pairs,
    segment_length_batch,
)
from .errors import UsageError
from .geodesic import exp_batch
from .manifold import (
    SPHERE,
    ChartPoint,
    as_batch,
    displacement_batch,
    sample_points_batch,
    sphere_xyz,
    unit_vectors_batch,
    wrap_batch,
)

HIST_BINS = 50
NEAR_SCALE = 1.0 / 100.0
NEAR_CUTOFF = 1.0 / 50.0
GRAPH_ERROR_BAR = 0.02
CSV_HEADER = "x1,x2,y1,y2,d,linf,ratio,is_near_diagonal"


@dataclass(frozen=True)
class EmbeddedPoint:
    coords: np.ndarray
    source: ChartPoint
    net_id: str


def embed_batch(spec, net, X, chart, method=None):
    """Embedded coordinates of many points: an (n, |net|) matrix of distances."""
    method = method or default_method(spec)
    X = np.asarray(X, dtype=float).reshape(-1, 2)
    chart = np.broadcast_to(np.asarray(chart, dtype=int), (len(X),))
    if method.kind != GRAPH:
        return distance_matrix(spec, X, chart, net.coords, net.charts, method)
    return _graph_fields(method.graph, net).evaluate(X, chart)


class _NetFields:
    """Shortest-path fields from every net point, computed once per (graph, net)."""

    def __init__(self, graph, net):
        self.graph, self.net = graph, net
        self.F = np.stack([graph.field(x[None], [c]) for x, c in zip(net.coords, net.charts)], axis=1)

    def evaluate(self, X, chart):
        g, net = self.graph, self.net
        qi, nj, lens = g.attach(X, chart)
        out = np.full((len(X), net.size), np.inf)
        np.minimum.at(out, qi, self.F[nj] + lens[:, None])
        for j, (z, c) in enumerate(zip(net.coords, net.charts)):
            near = _within(g.spec, X, chart, z, c, g.link_radius)
            if len(near):
                d = g.direct(X[near], chart[near], np.repeat(z[None], len(near), 0), np.full(len(near), c))
                out[near, j] = np.minimum(out[near, j], d)
        return out

    def linf_pairs(self, X, cx, Y, cy):
        """``max_j |f_j(x) - f_j(y)|`` for close pairs, with the pair's own chart
        segment added to the graph: ``f(x) <= f(y) + L(x, y)`` and vice versa.

        Both sides remain lengths of actual curves, so they are still upper
        bounds, and the difference is at most the segment length ``L(x, y)``.
        """
        ex, ey = self.evaluate(X, cx), self.evaluate(Y, cy)
        L = segment_length_batch(self.graph.spec, X, cx, Y, cy)[:, None]
        ex, ey = np.minimum(ex, ey + L), np.minimum(ey, ex + L)
        return np.max(np.abs(ex - ey), axis=1)


def _within(spec, X, chart, z, c, radius):
    if spec.family == SPHERE:
        sep = np.linalg.norm(sphere_xyz(spec, X, chart) - sphere_xyz(spec, z[None], [c]), axis=1)
    else:
        sep = np.linalg.norm(displacement_batch(spec, X, chart, np.repeat(z[None], len(X), 0),
                                                np.full(len(X), c)), axis=1)
    return np.nonzero(sep <= radius)[0]


_FIELD_CACHE: dict = {}


def _graph_fields(graph, net):
    key = (id(graph), net.net_id)
    hit = _FIELD_CACHE.get(key)
    if hit is None or hit.graph is not graph:
        if len(_FIELD_CACHE) > 8:
            _FIELD_CACHE.clear()
        hit = _FIELD_CACHE[key] = _NetFields(graph, net)
    return hit


def embed(spec, net, x, method=None):
    X, c = as_batch(x)
    return EmbeddedPoint(embed_batch(spec, net, X, c, method)[0], x, net.net_id)


def linf_distance(a, b):
    if a.net_id != b.net_id or len(a.coords) != len(b.coords):
        raise UsageError("embedded points come from different nets")
    return float(np.max(np.abs(np.asarray(a.coords) - np.asarray(b.coords)))) if len(a.coords) else 0.0


def pair_ratio(spec, net, x, y, method=None):
    method = method or default_method(spec)
    X, cx = as_batch(x)
    Y, cy = as_batch(y)
    d = float(distance_pairs(spec, X, cx, Y, cy, method)[0])
    if d <= 10 * method.tolerance:
        raise UsageError(f"pair too close for a meaningful ratio (d = {d!r})")
    return linf_distance(embed(spec, net, x, method), embed(spec, net, y, method)) / d


@dataclass(frozen=True)
class PairSample:
    """Sampled point pairs with their reference distances."""

    X: np.ndarray
    cx: np.ndarray
    Y: np.ndarray
    cy: np.ndarray
    d: np.ndarray
    near: np.ndarray

    def __len__(self):
        return len(self.d)


def sample_pairs(spec, n_pairs, near_fraction, delta, rng_seed, method=None):
    """Uniform pairs plus near-diagonal pairs ``y = exp_x(delta u)``.

    Near-pair distances are ``delta`` itself unless a closed form exists
    (delta is far below the injectivity radius, so the geodesic minimizes).
    Pairs with ``d <= 10 * tolerance`` are dropped.
    """
    if n_pairs < 1:
        raise UsageError("n_pairs must be >= 1")
    if not 0.0 <= near_fraction <= 1.0:
        raise UsageError("near_fraction must lie in [0, 1]")
    method = method or default_method(spec)
    rng = np.random.default_rng(rng_seed)
    n_near = int(round(near_fraction * n_pairs))
    n_far = n_pairs - n_near
    X1, c1 = sample_points_batch(spec, rng, n_far)
    Y1, d1c = sample_points_batch(spec, rng, n_far)
    X2, c2 = sample_points_batch(spec, rng, n_near)
    U = unit_vectors_batch(spec, X2, c2, rng.uniform(0.0, 2 * np.pi, n_near))
    Y2, d2c = exp_batch(spec, X2, c2, delta * U)
    d1 = distance_pairs(spec, X1, c1, Y1, d1c, method) if n_far else np.zeros(0)
    if spec.has_analytic_distance:
        d2 = analytic_pairs(spec, X2, c2, Y2, d2c)
    else:
        d2 = np.full(n_near, float(delta))
    X = np.concatenate([X1, X2])
    Y = np.concatenate([Y1, Y2])
    cx = np.concatenate([c1, c2]).astype(int)
    cy = np.concatenate([d1c, d2c]).astype(int)
    d = np.concatenate([d1, d2])
    near = np.concatenate([np.zeros(n_far, bool), np.ones(n_near, bool)])
    keep = d > 10 * method.tolerance
    return PairSample(X[keep], cx[keep], Y[keep], cy[keep], d[keep], near[keep])


@dataclass(frozen=True)
class DistortionReport:
    epsilon: float
    pair_count: int
    min_ratio: float
    argmin_pair: tuple
    histogram: tuple
    near_diagonal_min_ratio: float
    near_count: int
    method: str
    error_bar: float
    net_size: int

    @property
    def C(self):
        return 1.0 - self.min_ratio

    @property
    def near_diagonal_C(self):
        return 1.0 - self.near_diagonal_min_ratio

    def records(self):
        """Flat (key, value) statistics, one line each in the summary."""
        x, y = self.argmin_pair
        return [
            ("epsilon", self.epsilon),
            ("net_size", self.net_size),
            ("pair_count", self.pair_count),
            ("near_count", self.near_count),
            ("method", self.method),
            ("min_ratio", self.min_ratio),
            ("C", self.C),
            ("near_diagonal_min_ratio", self.near_diagonal_min_ratio),
            ("near_diagonal_C", self.near_diagonal_C),
            ("ratio_error_bar", self.error_bar),
            ("argmin_x", f"{x.coords[0]!r} {x.coords[1]!r} {x.chart}"),
            ("argmin_y", f"{y.coords[0]!r} {y.coords[1]!r} {y.chart}"),
            ("histogram", " ".join(str(h) for h in self.histogram)),
        ]


@dataclass(frozen=True)
class ScanResult:
    report: DistortionReport
    pairs: PairSample
    linf: np.ndarray
    ratio: np.ndarray

    def csv_lines(self):
        p = self.pairs
        lines = [CSV_HEADER]
        for i in range(len(p)):
            lines.append(",".join([repr(float(p.X[i, 0])), repr(float(p.X[i, 1])),
                                   repr(float(p.Y[i, 0])), repr(float(p.Y[i, 1])),
                                   repr(float(p.d[i])), repr(float(self.linf[i])),
                                   repr(float(self.ratio[i])), str(int(p.near[i]))]))
        return lines


def pair_ratios(spec, net, pairs, method=None):
    """(linf, ratio) for each sampled pair under ``net``."""
    method = method or default_method(spec)
    E = embed_batch(spec, net, np.concatenate([pairs.X, pairs.Y]),
                    np.concatenate([pairs.cx, pairs.cy]), method)
    n = len(pairs)
    linf = np.max(np.abs(E[:n] - E[n:]), axis=1) if net.size else np.zeros(n)
    if method.kind == GRAPH and net.size:
        close = np.nonzero(pairs.d <= method.graph.link_radius)[0]
        if len(close):
            linf[close] = _graph_fields(method.graph, net).linf_pairs(
                pairs.X[close], pairs.cx[close], pairs.Y[close], pairs.cy[close])
    return linf, linf / pairs.d


def summarize(spec, net, pairs, linf, ratio, method):
    if len(pairs) == 0:
        raise UsageError("no usable pairs after the tolerance cut")
    k = int(np.argmin(ratio))
    near_ratio = ratio[pairs.d <= net.epsilon * NEAR_CUTOFF]
    hist, _ = np.histogram(np.clip(ratio, 0.0, 1.0), bins=HIST_BINS, range=(0.0, 1.0))
    argmin = (ChartPoint(pairs.X[k], pairs.cx[k]), ChartPoint(pairs.Y[k], pairs.cy[k]))
    return DistortionReport(
        epsilon=float(net.epsilon),
        pair_count=len(pairs),
        min_ratio=float(ratio[k]),
        argmin_pair=argmin,
        histogram=tuple(int(h) for h in hist),
        near_diagonal_min_ratio=float(near_ratio.min()) if len(near_ratio) else float("nan"),
        near_count=int(np.count_nonzero(pairs.near)),
        method=method.kind,
        error_bar=GRAPH_ERROR_BAR if method.kind == GRAPH else 0.0,
        net_size=net.size,
    )


def distortion_scan(spec, net, n_pairs, near_fraction, rng_seed, method=None, pairs=None):
    """Sample pairs (or reuse ``pairs``) and report the distortion statistics."""
    method = method or default_method(spec)
    if pairs is None:
        pairs = sample_pairs(spec, n_pairs, near_fraction, net.epsilon * NEAR_SCALE, rng_seed, method)
    linf, ratio = pair_ratios(spec, net, pairs, method)
    return ScanResult(summarize(spec, net, pairs, linf, ratio, method), pairs, linf, ratio)


def loop_pullback_length(spec, net, loop, method=None):
    """Sup-norm length of the embedded closed polyline through ``loop``'s vertices."""
    method = method or default_method(spec)
    if len(loop) < 9:
        raise UsageError("loop needs at least 8 segments")
    X, c = as_batch(loop)
    Xw, cw = wrap_batch(spec, X, c)
    gap = np.linalg.norm(displacement_batch(spec, Xw[:1], cw[:1], Xw[-1:], cw[-1:]))
    if gap > 1e-12:
        raise UsageError("loop is not closed (first and last vertex differ)")
    E = embed_batch(spec, net, X, c, method)
    return float(np.sum(np.max(np.abs(np.diff(E, axis=0)), axis=1)))


def polyline_length(spec, loop, method=None):
    """Riemannian length of the polyline whose segments are minimizing geodesics."""
    method = method or default_method(spec)
    X, c = as_batch(loop)
    return float(np.sum(distance_pairs(spec, X[:-1], c[:-1], X[1:], c[1:], method)))
