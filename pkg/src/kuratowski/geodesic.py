"""Geodesic integration and the exponential map.

The geodesic ODE ``x'' + Gamma(x)(x', x') = 0`` is integrated with classical
fourth-order Runge-Kutta on uniform steps, re-wrapping the state into its
canonical chart after every step. Each row of a batch picks its own step
count ``ceil(s |v|_g / max_step)``, so a row's result does not depend on what
else is in the batch.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, UsageError
from .manifold import (
    CONFORMAL_TORUS,
    ChartPoint,
    TangentVector,
    as_batch,
    christoffel_batch,
    displacement_batch,
    norm_batch,
    sample_points_batch,
    sphere_xyz,
    to_chart,
    unit_vectors_batch,
    wrap_batch,
)


@dataclass(frozen=True)
class StepControl:
    max_step: float = 0.005
    tolerance: float = 1e-10

    def validate(self, spec):
        if not (self.max_step > 0 and self.tolerance > 0):
            raise UsageError("max_step and tolerance must be positive")
        if self.max_step > 0.05 * spec.injrad_bound:
            raise UsageError(f"max_step {self.max_step} exceeds 0.05 * injrad_bound "
                             f"= {0.05 * spec.injrad_bound}")
        return self


DEFAULT_CONTROL = StepControl()


@dataclass(frozen=True)
class GeodesicState:
    position: ChartPoint
    velocity: TangentVector
    arclength: float


def _accel(spec, X, chart, V):
    gamma = christoffel_batch(spec, X, chart)
    return -np.einsum("nkij,ni,nj->nk", gamma, V, V)


def _rk4(spec, X, chart, V, h):
    h = h[:, None]
    a1 = _accel(spec, X, chart, V)
    x2, v2 = X + 0.5 * h * V, V + 0.5 * h * a1
    a2 = _accel(spec, x2, chart, v2)
    x3, v3 = X + 0.5 * h * v2, V + 0.5 * h * a2
    a3 = _accel(spec, x3, chart, v3)
    x4, v4 = X + h * v3, V + h * a3
    a4 = _accel(spec, x4, chart, v4)
    Xn = X + h / 6.0 * (V + 2 * v2 + 2 * v3 + v4)
    Vn = V + h / 6.0 * (a1 + 2 * a2 + 2 * a3 + a4)
    return Xn, Vn


def flow_batch(spec, X, chart, V, s, max_step=DEFAULT_CONTROL.max_step, record=False):
    """Integrate a batch of geodesics for parameter lengths ``s`` (all >= 0).

    Returns ``(X, chart, V)`` at the end, or with ``record=True`` the full
    trajectories ``(Xs, charts, Vs, arclengths)`` of shape ``(steps + 1, n, ...)``
    where rows that finished early repeat their final state.
    """
    X = np.array(X, dtype=float).reshape(-1, 2)
    V = np.array(V, dtype=float).reshape(-1, 2)
    chart = np.broadcast_to(np.asarray(chart, dtype=int), (len(X),)).copy()
    s = np.broadcast_to(np.asarray(s, dtype=float), (len(X),)).copy()
    if np.any(s < 0):
        raise UsageError("geodesic flow length must be nonnegative")
    X, chart, V = wrap_batch(spec, X, chart, V)
    speed = norm_batch(spec, X, chart, V)
    length = s * speed
    n = np.where(length > 0, np.ceil(length / max_step - 1e-12), 0).astype(int)
    h = np.where(n > 0, s / np.maximum(n, 1), 0.0)
    steps = int(n.max()) if len(n) else 0
    if record:
        Xs, Cs, Vs = [X.copy()], [chart.copy()], [V.copy()]
    for k in range(steps):
        act = np.nonzero(k < n)[0]
        try:
            Xa, Va = _rk4(spec, X[act], chart[act], V[act], h[act])
        except DomainError as exc:
            raise DomainError(str(exc), arclength=float(np.min(k * h[act] * speed[act]))) from exc
        X[act], chart[act], V[act] = wrap_batch(spec, Xa, chart[act], Va)
        if record:
            Xs.append(X.copy())
            Cs.append(chart.copy())
            Vs.append(V.copy())
    if record:
        k = np.arange(steps + 1)[:, None]
        arc = np.minimum(k, n[None, :]) * (h * speed)[None, :]
        return np.array(Xs), np.array(Cs), np.array(Vs), arc
    return X, chart, V


def geodesic_flow(spec, p, v, s, ctl=DEFAULT_CONTROL):
    """State of the geodesic with gamma(0) = p, gamma'(0) = v at parameter ``s``."""
    if v.base != p:
        raise UsageError("initial velocity is not based at p")
    if s < 0:
        raise UsageError("s must be nonnegative; flip the velocity to flow backwards")
    ctl.validate(spec)
    X, c = as_batch(p)
    Xn, cn, Vn = flow_batch(spec, X, c, v.array[None], [s], ctl.max_step)
    pos = ChartPoint(Xn[0], cn[0])
    speed = float(norm_batch(spec, X, c, v.array[None])[0])
    return GeodesicState(pos, TangentVector(pos, Vn[0]), s * speed)


def exp_map(spec, p, v, ctl=DEFAULT_CONTROL):
    X, c = as_batch(p)
    speed = float(norm_batch(spec, X, c, v.array[None])[0])
    if speed == 0.0:
        if v.base != p:
            raise UsageError("tangent vector is not based at p")
        return p
    return geodesic_flow(spec, p, v.scaled(1.0 / speed), speed, ctl).position


def exp_batch(spec, X, chart, V, max_step=DEFAULT_CONTROL.max_step):
    """Batched exponential map; zero vectors return their base point."""
    X, chart, V = flow_batch(spec, X, chart, V, np.ones(len(np.atleast_2d(X))), max_step)
    return X, chart


def homogeneity_residual(spec, p, v, t, s, ctl=DEFAULT_CONTROL):
    """Chart distance between gamma(p, t v, s) and gamma(p, v, t s)."""
    X, c = as_batch(p)
    speed = float(norm_batch(spec, X, c, v.array[None])[0])
    if abs(t) * s * speed > spec.injrad_bound * (1 + 1e-12):
        raise UsageError("homogeneity check needs |t| s |v| <= injrad_bound")
    if s < 0:
        raise UsageError("s must be nonnegative")
    a = geodesic_flow(spec, p, v.scaled(t), s, ctl).position
    if t >= 0:
        b = geodesic_flow(spec, p, v, t * s, ctl).position
    else:
        b = geodesic_flow(spec, p, v.scaled(-1.0), -t * s, ctl).position
    b = to_chart(spec, b, a.chart)
    X, ca = as_batch(a)
    Y, cb = as_batch(b)
    return float(np.linalg.norm(displacement_batch(spec, X, ca, Y, cb)[0]))


def injectivity_probe(spec, ctl=DEFAULT_CONTROL, n_bases=6, n_dirs=64, seed=0):
    """Smallest separation between ``exp_x(r u_i)`` over distinct sampled unit ``u_i``,
    at ``r = injrad_bound``. A value near 0 means the bound is too optimistic."""
    rng = np.random.default_rng(seed)
    X, c = sample_points_batch(spec, rng, n_bases)
    Xb = np.repeat(X, n_dirs, axis=0)
    cb = np.repeat(c, n_dirs)
    ang = np.tile(2 * np.pi * np.arange(n_dirs) / n_dirs, n_bases)
    U = unit_vectors_batch(spec, Xb, cb, ang)
    E, ce, _ = flow_batch(spec, Xb, cb, U, np.full(len(Xb), spec.injrad_bound), ctl.max_step)
    gap = np.inf
    for b in range(n_bases):
        sl = slice(b * n_dirs, (b + 1) * n_dirs)
        Eb, cbb = E[sl], ce[sl]
        if spec.is_torus:
            i, j = np.triu_indices(n_dirs, 1)
            d = np.linalg.norm(displacement_batch(spec, Eb[i], cbb[i], Eb[j], cbb[j]), axis=1)
        else:
            P = sphere_xyz(spec, Eb, cbb)
            i, j = np.triu_indices(n_dirs, 1)
            d = np.linalg.norm(P[i] - P[j], axis=1)
        gap = min(gap, float(d.min()))
    return gap


def validate_injectivity(spec, ctl=DEFAULT_CONTROL, threshold=1e-4):
    """Startup sanity check of a configured injectivity bound (conformal torus only)."""
    if spec.family != CONFORMAL_TORUS:
        return None
    gap = injectivity_probe(spec, ctl)
    if gap < threshold:
        raise DomainError(f"injectivity probe failed: distinct directions meet within {gap:.3g} "
                          f"at radius injrad_bound={spec.injrad_bound}")
    return gap

