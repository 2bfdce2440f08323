"""The six experiments behind the command line."""

from __future__ import annotations

import logging
import os
from dataclasses import dataclass
from importlib import resources

import numpy as np

from ..distance import (
    ANALYTIC,
    GRAPH,
    SHOOTING,
    DistanceMethod,
    analytic_pairs,
    prepare,
    shoot_batch,
)
from ..embedding import (
    NEAR_SCALE,
    distortion_scan,
    loop_pullback_length,
    pair_ratios,
    polyline_length,
    sample_pairs,
)
from ..errors import UsageError
from ..geodesic import exp_batch, exp_map
from ..manifold import (
    FLAT_TORUS,
    ChartPoint,
    TangentVector,
    as_batch,
    sample_points_batch,
    shortest_lattice_vector,
    unit_vectors_batch,
)
from ..nets import build_net, verify_net
from ..variation import (
    ALONG,
    PROBE_HEADER,
    CSV_HEADER as FIRSTVAR_HEADER,
    continuity_probe,
    first_variation_batch,
    sample_admissible,
)
from .report import Result

log = logging.getLogger(__name__)

SWEEP_FACTOR = 2.0
FIRSTVAR_LIMIT_ANALYTIC = 1e-3
FIRSTVAR_LIMIT_GRAPH = 5e-3
PROBE_FINAL = 1e-3
PROBE_EXACT = 1e-12
PROBE_RATE = (0.8, 2.2)
ORACLE_BAND = 0.02
ORACLE_SLACK = 1e-6
SYSTOLE_CLASSES = ((1, 0), (0, 1), (1, 1), (1, -1))
LOOP_SEGMENTS = 64
SYSTOLE_TOL = 1e-6


# --------------------------------------------------------------------------
# baselines


@dataclass(frozen=True)
class Baseline:
    key: str
    op: str
    value: float
    tol: float = 0.0

    def holds(self, x):
        if self.op == ">=":
            return x >= self.value
        if self.op == "<=":
            return x <= self.value
        return abs(x - self.value) <= self.tol


def load_baselines(path=None):
    if path is None:
        text = resources.files("kuratowski.harness").joinpath("baselines.txt").read_text()
    else:
        with open(path) as fh:
            text = fh.read()
    out = {}
    for n, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        for op in (">=", "<=", "="):
            if op in line:
                key, rest = (t.strip() for t in line.split(op, 1))
                parts = rest.split()
                try:
                    value = float(parts[0])
                    tol = float(parts[1]) if op == "=" else 0.0
                except (IndexError, ValueError) as exc:
                    raise UsageError(f"baselines:{n}: malformed entry {line!r}") from exc
                out[key] = Baseline(key, op, value, tol)
                break
    return out


def _against(result, baselines, key, value, name):
    b = baselines.get(key)
    if b is None:
        result.log.append(f"[info] no baseline for {key} = {value!r}")
        return
    detail = f"{value!r} {b.op} {b.value!r}" + (f" (tol {b.tol!r})" if b.op == "=" else "")
    result.check(f"baseline.{name}", b.holds(value), detail)


def _key(cfg, stat):
    return f"{cfg.experiment}.{cfg.digest}.{stat}"


def _eps_tag(e):
    return repr(float(e))


def _method(cfg):
    return prepare(cfg.manifold, cfg.method, cfg.graph_cache)


# --------------------------------------------------------------------------
# experiments


def run_net(cfg, baselines):
    spec = cfg.manifold
    method = _method(cfg)
    res = Result("net")
    rows = ["epsilon,size,min_pairwise,covering_radius,audit_points,passed"]
    for e in cfg.epsilons:
        net = build_net(spec, e, method)
        rep = verify_net(spec, net, method)
        tag = _eps_tag(e)
        rows.append(f"{tag},{net.size},{rep.min_pairwise!r},{rep.covering_radius!r},"
                    f"{rep.audit_points},{int(rep.passed)}")
        res.add(f"eps{tag}.net_size", net.size)
        res.add(f"eps{tag}.min_pairwise", rep.min_pairwise)
        res.add(f"eps{tag}.covering_radius", rep.covering_radius)
        res.check(f"separation_eps{tag}", rep.separated, f"min_pairwise {rep.min_pairwise!r}")
        res.check(f"covering_eps{tag}", rep.covering,
                  f"covering_radius {rep.covering_radius!r} <= 1.1 * {e!r}")
        res.files[f"net_eps{tag}.txt"] = net.dumps()
        res.add("net_size", net.size)
    res.tables["nets.csv"] = rows
    return res


def _nested_nets(spec, epsilons, method):
    nets, base = [], None
    for e in epsilons:
        base = build_net(spec, e, method, base=base)
        nets.append(base)
    return nets


def run_sweep(cfg, baselines):
    spec = cfg.manifold
    method = _method(cfg)
    res = Result("sweep")
    nets = _nested_nets(spec, cfg.epsilons, method)
    reports = []
    contraction_ok = True
    worst_excess = -np.inf
    for net in nets:
        rep_net = verify_net(spec, net, method)
        tag = _eps_tag(net.epsilon)
        res.check(f"net_eps{tag}", rep_net.passed,
                  f"min_pairwise {rep_net.min_pairwise!r}, covering {rep_net.covering_radius!r}")
        scan = distortion_scan(spec, net, cfg.n_pairs, cfg.near_fraction, cfg.rng_seed, method)
        rep = scan.report
        reports.append(rep)
        for k, v in rep.records():
            res.add(f"eps{tag}.{k}", v)
        res.tables[f"distortion_eps{tag}.csv"] = scan.csv_lines()
        if method.kind == GRAPH:
            bound = 1.0 + rep.error_bar
        else:
            bound = 1.0 + np.maximum(1e-9, 2 * method.tolerance / scan.pairs.d)
        excess = scan.ratio - bound
        worst_excess = max(worst_excess, float(np.max(excess)))
        contraction_ok &= bool(np.all(excess <= 0))
        _against(res, baselines, _key(cfg, f"C_eps{tag}"), rep.C, f"C_eps{tag}")
        _against(res, baselines, _key(cfg, f"near_C_eps{tag}"), rep.near_diagonal_C,
                 f"near_C_eps{tag}")
    res.check("contraction", contraction_ok, f"max(ratio - bound) = {worst_excess!r}")

    mins = [r.min_ratio for r in reports]
    res.check("min_ratio_nondecreasing", all(b >= a - 1e-12 for a, b in zip(mins, mins[1:])),
              " ".join(repr(m) for m in mins))
    for label, vals in (("C", [r.C for r in reports]), ("near_C", [r.near_diagonal_C for r in reports])):
        factors = [a / b if b > 0 else np.inf for a, b in zip(vals, vals[1:])]
        for (e0, e1), f in zip(zip(cfg.epsilons, cfg.epsilons[1:]), factors):
            res.add(f"factor.{label}.eps{_eps_tag(e0)}_to_eps{_eps_tag(e1)}", float(f))
        res.check(f"{label}_halves", all(f >= SWEEP_FACTOR for f in factors),
                  "factors " + " ".join(repr(float(f)) for f in factors))

    # Monotonicity under refinement, on one fixed sample of pairs.
    fixed = sample_pairs(spec, min(cfg.n_pairs, 2000), cfg.near_fraction,
                         cfg.epsilons[-1] * NEAR_SCALE, cfg.rng_seed + 1, method)
    linfs = [pair_ratios(spec, net, fixed, method)[0] for net in nets]
    slack = 2 * method.tolerance + 1e-12
    drop = max((float(np.max(a - b)) for a, b in zip(linfs, linfs[1:])), default=0.0)
    res.check("refinement_monotone", drop <= slack, f"largest decrease {drop!r}")
    return res


def run_firstvar(cfg, baselines):
    spec = cfg.manifold
    method = _method(cfg)
    res = Result("firstvar")
    rng = np.random.default_rng(cfg.rng_seed)
    triples = sample_admissible(spec, rng, cfg.firstvar_trials)
    X, cx = as_batch([t[0] for t in triples])
    V = np.array([t[1].array for t in triples])
    Z, cz = as_batch([t[2] for t in triples])
    rows = [FIRSTVAR_HEADER]
    errs = {}
    for ds in cfg.firstvar_deltas:
        fd, an, _ = first_variation_batch(spec, X, cx, V, Z, cz, ds, method)
        err = np.abs(fd - an)
        errs[ds] = err
        rows += [f"{ds!r},{float(a)!r},{float(b)!r},{float(e)!r}" for a, b, e in zip(fd, an, err)]
        res.add(f"delta{ds!r}.max_error", float(err.max()))
        res.add(f"delta{ds!r}.median_error", float(np.median(err)))
    res.tables["firstvar.csv"] = rows
    smallest = min(cfg.firstvar_deltas)
    limit = FIRSTVAR_LIMIT_ANALYTIC if spec.has_analytic_distance else FIRSTVAR_LIMIT_GRAPH
    res.check("slope_error", float(errs[smallest].max()) <= limit,
              f"max |fd + cos alpha| at delta {smallest!r} = {float(errs[smallest].max())!r} <= {limit!r}")
    K = max(float((errs[ds] / ds).max()) for ds in cfg.firstvar_deltas)
    res.add("K_observed", K)
    _against(res, baselines, f"firstvar.K.{spec.family}", K, "K")
    if len(cfg.firstvar_deltas) >= 2:
        ds = np.array(sorted(cfg.firstvar_deltas))
        med = np.array([np.median(errs[d]) for d in ds])
        rate = float(np.polyfit(np.log(ds), np.log(med), 1)[0])
        res.add("error_rate", rate)
    return res


def _probe_target(cfg):
    spec = cfg.manifold
    if cfg.continuity_base is not None:
        p = ChartPoint(cfg.continuity_base, 0)
    else:
        p = ChartPoint((1.2, 0.4) if spec.family == "sphere" else (0.1, 0.2), 0)
    X, c = as_batch(p)
    heading = 0.3
    v = TangentVector(p, unit_vectors_batch(spec, X, c, np.array([heading]))[0], unit=True)
    u = unit_vectors_batch(spec, X, c, np.array([heading + cfg.continuity_angle]))[0]
    # z sits at arclength b = injrad / 2 from p
    z = exp_map(spec, p, TangentVector(p, u).scaled(0.5 * spec.injrad_bound))
    return p, v, z


def run_continuity(cfg, baselines):
    spec = cfg.manifold
    method = _method(cfg)
    res = Result("continuity")
    p, v, z = _probe_target(cfg)
    probe = continuity_probe(spec, (p, v), z, cfg.continuity_n_steps, method, cfg.continuity_offset)
    res.tables["continuity.csv"] = [PROBE_HEADER] + [f"{d!r},{e!r}" for d, e in probe]
    errors = np.array([e for _, e in probe])
    deltas = np.array([d for d, _ in probe])
    res.add("final_error", float(errors[-1]))
    res.add("offset_mode", cfg.continuity_offset)
    exact = cfg.continuity_offset == ALONG and cfg.continuity_angle == 0.0
    if exact:
        res.check("collinear_exact", bool(np.all(errors <= PROBE_EXACT)),
                  f"max error {float(errors.max())!r} <= {PROBE_EXACT!r}")
        return res
    res.check("decreasing", bool(np.all(np.diff(errors) < 0)), " ".join(repr(float(e)) for e in errors))
    if spec.has_analytic_distance or method.kind == ANALYTIC:
        res.check("final_error", float(errors[-1]) <= PROBE_FINAL,
                  f"{float(errors[-1])!r} <= {PROBE_FINAL!r}")
    good = errors > PROBE_EXACT
    if good.sum() >= 3:
        rate = float(np.polyfit(np.log(deltas[good]), np.log(errors[good]), 1)[0])
        res.add("error_rate", rate)
        res.check("rate", PROBE_RATE[0] <= rate <= PROBE_RATE[1], f"log-log slope {rate!r}")
    return res


def systole_loops(spec, p, q, segments=LOOP_SEGMENTS):
    L = p * spec.basis[:, 0] + q * spec.basis[:, 1]
    t = np.arange(segments + 1) / segments
    return [ChartPoint(tuple(s * L), 0) for s in t]


def run_systole(cfg, baselines):
    spec = cfg.manifold
    if spec.family != FLAT_TORUS:
        raise UsageError("the systole experiment is only defined for the flat torus")
    sys_len = shortest_lattice_vector(spec.basis)
    if not min(cfg.epsilons) < sys_len / 10:
        raise UsageError(f"systole check needs min(epsilons) < systole / 10 = {sys_len / 10!r}")
    method = _method(cfg)
    res = Result("systole")
    nets = _nested_nets(spec, cfg.epsilons, method)
    rows = ["epsilon,p,q,geodesic_length,pullback_length"]
    for net in nets:
        pulls = []
        for p, q in SYSTOLE_CLASSES:
            loop = systole_loops(spec, p, q)
            pull = loop_pullback_length(spec, net, loop, method)
            length = polyline_length(spec, loop, method)
            pulls.append(pull)
            rows.append(f"{_eps_tag(net.epsilon)},{p},{q},{length!r},{pull!r}")
        res.add(f"eps{_eps_tag(net.epsilon)}.min_pullback", min(pulls))
    final = pulls
    k = int(np.argmin(final))
    min_pull = float(final[k])
    res.tables["systole.csv"] = rows
    res.add("analytic_systole", sys_len)
    res.add("homotopy_classes", " ".join(f"{p},{q}" for p, q in SYSTOLE_CLASSES))
    res.add("pullback_lengths", " ".join(repr(float(x)) for x in final))
    res.add("min_pullback", min_pull)
    res.add("min_pullback_class", f"{SYSTOLE_CLASSES[k][0]},{SYSTOLE_CLASSES[k][1]}")
    res.check("upper_bound", min_pull <= sys_len + SYSTOLE_TOL,
              f"{min_pull!r} <= {sys_len!r} + {SYSTOLE_TOL!r}")
    res.check("factor5", min_pull >= sys_len / 5, f"{min_pull!r} >= {sys_len / 5!r}")
    _against(res, baselines, _key(cfg, "min_pullback"), min_pull, "min_pullback")
    _against(res, baselines, _key(cfg, "min_pullback_floor"), min_pull,
             "min_pullback_floor")
    return res


def _reference(spec, X, cx, Y, cy, method):
    if spec.has_analytic_distance:
        return analytic_pairs(spec, X, cx, Y, cy), ANALYTIC
    return shoot_batch(spec, X, cx, Y, cy, method.shooting_tol)[0], SHOOTING


def run_oracle_check(cfg, baselines):
    spec = cfg.manifold
    graph_method = prepare(spec, DistanceMethod(GRAPH, cfg.method.graph_density,
                                                cfg.method.shooting_tol), cfg.graph_cache)
    res = Result("oracle_check")
    rng = np.random.default_rng(cfg.rng_seed)
    n = cfg.oracle_pairs
    X, cx = sample_points_batch(spec, rng, n)
    # area-uniform radius below the injectivity radius
    r = spec.injrad_bound * np.sqrt(rng.uniform(0.0, 1.0, n)) * 0.999
    U = unit_vectors_batch(spec, X, cx, rng.uniform(0, 2 * np.pi, n))
    Y, cy = exp_batch(spec, X, cx, r[:, None] * U)
    ref, kind = _reference(spec, X, cx, Y, cy, cfg.method)
    ok = np.isfinite(ref) & (ref < spec.injrad_bound) & (ref > 0)
    X, cx, Y, cy, ref = X[ok], cx[ok], Y[ok], cy[ok], ref[ok]
    g = graph_method.graph.distance_pairs(X, cx, Y, cy)
    rel = np.abs(g - ref) / ref
    rows = ["x1,x2,y1,y2,reference,graph,rel_diff"]
    rows += [f"{a!r},{b!r},{c!r},{d!r},{e!r},{f!r},{h!r}" for a, b, c, d, e, f, h in
             zip(X[:, 0].tolist(), X[:, 1].tolist(), Y[:, 0].tolist(), Y[:, 1].tolist(),
                 ref.tolist(), g.tolist(), rel.tolist())]
    res.tables["oracle_check.csv"] = rows
    res.add("reference", kind)
    res.add("graph_density", graph_method.density(spec))
    res.add("graph_nodes", graph_method.graph.n_nodes)
    res.add("pair_count", int(len(ref)))
    res.add("dropped_pairs", int((~ok).sum()))
    res.add("max_rel_diff", float(rel.max()))
    res.add("min_graph_minus_reference", float((g - ref).min()))
    res.check("agreement", float(rel.max()) <= ORACLE_BAND, f"max rel {float(rel.max())!r} <= {ORACLE_BAND}")
    res.check("one_sided", float((g - ref).min()) >= -ORACLE_SLACK,
              f"min(graph - reference) {float((g - ref).min())!r} >= -{ORACLE_SLACK}")
    res.check("pair_count", len(ref) >= 0.99 * n, f"{len(ref)} usable of {n}")
    return res


RUNNERS = {
    "net": run_net,
    "sweep": run_sweep,
    "firstvar": run_firstvar,
    "continuity": run_continuity,
    "systole": run_systole,
    "oracle_check": run_oracle_check,
}


def run(cfg, baselines=None):
    """Run the configured experiment; returns a :class:`Result`."""
    if baselines is None:
        baselines = load_baselines(cfg.baselines)
    log.info("running %s on %s (digest %s)", cfg.experiment, cfg.manifold.family, cfg.digest)
    res = RUNNERS[cfg.experiment](cfg, baselines)
    res.summary[:0] = [("family", cfg.manifold.family), ("spec_hash", cfg.manifold.spec_hash),
                       ("config_digest", cfg.digest), ("method", cfg.method.kind),
                       ("rng_seed", cfg.rng_seed)]
    return res


def output_dir(cfg, override=None):
    return os.path.abspath(override or cfg.output_dir)
