"""Flat ``key = value`` experiment configuration.

Lines starting with ``#`` are comments, as is anything after `` #`` on a line.
Keys carry section prefixes (``manifold.family``); list values are separated
by commas or whitespace. Example::

    experiment = sweep
    manifold.family = flat_torus
    manifold.lattice_basis = 1 0 0 1
    epsilons = 0.4, 0.2, 0.1, 0.05
    n_pairs = 10000
    near_fraction = 0.5
    rng_seed = 42

``manifold.lattice_basis`` lists the generators ``b1x b1y b2x b2y``.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Optional

from ..distance import DistanceMethod
from ..errors import ConfigError, UsageError
from ..manifold import FAMILIES, ManifoldSpec

EXPERIMENTS = ("sweep", "firstvar", "continuity", "systole", "oracle_check", "net")
CLI_NAMES = {"oracle-check": "oracle_check"}


def _floats(text):
    return [float(t) for t in text.replace(",", " ").split()]


@dataclass(frozen=True)
class ExperimentConfig:
    manifold: ManifoldSpec
    experiment: str
    epsilons: tuple = (0.4, 0.2, 0.1, 0.05)
    n_pairs: int = 10000
    near_fraction: float = 0.5
    rng_seed: int = 42
    method: DistanceMethod = field(default_factory=DistanceMethod)
    output_dir: str = "out"
    firstvar_deltas: tuple = (1e-2, 1e-3, 1e-4)
    firstvar_trials: int = 200
    continuity_n_steps: int = 8
    continuity_offset: str = "transverse"
    continuity_angle: float = 1.0
    continuity_base: Optional[tuple] = None
    oracle_pairs: int = 1000
    baselines: Optional[str] = None
    graph_cache: Optional[str] = None
    lines: tuple = ()

    def echo(self):
        return "\n".join(self.lines) + "\n"

    @property
    def digest(self):
        """Identifier of the run's content, ignoring where outputs and caches go."""
        skip = ("output_dir", "baselines", "method.graph_cache")
        pairs = sorted(tuple(t.strip() for t in ln.split("=", 1)) for ln in self.lines)
        body = "\n".join(f"{k} = {v}" for k, v in pairs if k not in skip)
        return hashlib.sha1(body.encode()).hexdigest()[:10]


_KEYS = {
    "manifold.family", "manifold.lattice_basis", "manifold.radius", "manifold.amplitude",
    "manifold.frequency", "manifold.injrad_bound", "experiment", "epsilons", "n_pairs",
    "near_fraction", "rng_seed", "method.kind", "method.graph_density", "method.shooting_tol",
    "output_dir", "firstvar.deltas", "firstvar.trials", "continuity.n_steps", "continuity.offset",
    "continuity.angle", "continuity.base", "oracle_check.pairs", "baselines", "method.graph_cache",
}


def _strip(line):
    if line.lstrip().startswith("#"):
        return ""
    cut = line.find(" #")
    return (line if cut < 0 else line[:cut]).rstrip()


def parse_lines(text, source="<config>"):
    """``{key: (value, lineno)}`` plus the comment-free lines in input order."""
    values, kept = {}, []
    for n, raw in enumerate(text.splitlines(), start=1):
        line = _strip(raw)
        if not line.strip():
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{n}: expected 'key = value', got {raw.strip()!r}")
        key, value = (t.strip() for t in line.split("=", 1))
        if key not in _KEYS:
            raise ConfigError(f"{source}:{n}: unknown key {key!r}")
        if key in values:
            raise ConfigError(f"{source}:{n}: duplicate key {key!r} (first set on line {values[key][1]})")
        values[key] = (value, n)
        kept.append(line)
    return values, kept


def _get(values, key, conv, default, source):
    if key not in values:
        return default
    value, n = values[key]
    try:
        return conv(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{source}:{n}: bad value for {key}: {value!r} ({exc})") from exc


def _int(s):
    f = float(s)
    if f != int(f):
        raise ValueError("not an integer")
    return int(f)


def load(text, source="<config>", overrides=None):
    """Parse and validate a config. ``overrides`` maps keys to replacement strings."""
    values, kept = parse_lines(text, source)
    for key, value in (overrides or {}).items():
        if key not in _KEYS:
            raise ConfigError(f"unknown override key {key!r}")
        if key in values:
            n = values[key][1]
            kept = [f"{key} = {value}" if ln.split("=", 1)[0].strip() == key else ln for ln in kept]
        else:
            n = 0
            kept.append(f"{key} = {value}")
        values[key] = (value, n)
    g = lambda k, conv, d: _get(values, k, conv, d, source)  # noqa: E731

    experiment = g("experiment", str, None)
    if experiment is None:
        raise ConfigError(f"{source}: missing required key 'experiment'")
    experiment = CLI_NAMES.get(experiment, experiment)
    if experiment not in EXPERIMENTS:
        raise ConfigError(f"{source}:{values['experiment'][1]}: experiment must be one of {EXPERIMENTS}")
    family = g("manifold.family", str, "flat_torus")
    if family not in FAMILIES:
        raise ConfigError(f"{source}: manifold.family must be one of {FAMILIES}")
    basis = g("manifold.lattice_basis", _floats, [1.0, 0.0, 0.0, 1.0])
    if len(basis) != 4:
        raise ConfigError(f"{source}: manifold.lattice_basis needs 4 numbers (b1x b1y b2x b2y)")
    try:
        spec = ManifoldSpec(
            family=family,
            lattice_basis=((basis[0], basis[2]), (basis[1], basis[3])),
            radius=g("manifold.radius", float, 1.0),
            amplitude=g("manifold.amplitude", float, 0.0),
            frequency=g("manifold.frequency", _int, 1),
            injrad_bound=g("manifold.injrad_bound", float, None),
        )
        method = DistanceMethod(
            kind=g("method.kind", str, "analytic" if spec.has_analytic_distance else "graph"),
            graph_density=g("method.graph_density", float, None),
            shooting_tol=g("method.shooting_tol", float, 1e-9),
        )
        method.validate(spec)
    except UsageError as exc:
        raise ConfigError(f"{source}: {exc}") from exc

    eps = tuple(g("epsilons", _floats, [0.4, 0.2, 0.1, 0.05]))
    if not eps or any(e <= 0 for e in eps):
        raise ConfigError(f"{source}: epsilons must be positive")
    if any(b >= a for a, b in zip(eps, eps[1:])):
        raise ConfigError(f"{source}: epsilons must be strictly decreasing")
    n_pairs = g("n_pairs", _int, 10000)
    near = g("near_fraction", float, 0.5)
    if experiment == "sweep":
        if n_pairs < 100:
            raise ConfigError(f"{source}: sweep needs n_pairs >= 100")
        if near < 0.25:
            raise ConfigError(f"{source}: sweep needs near_fraction >= 0.25 (near-diagonal cohort)")
    if not 0 <= near <= 1:
        raise ConfigError(f"{source}: near_fraction must lie in [0, 1]")
    base = g("continuity.base", _floats, None)
    if base is not None and len(base) != 2:
        raise ConfigError(f"{source}: continuity.base needs 2 coordinates")
    offset = g("continuity.offset", str, "transverse")
    if offset not in ("transverse", "along"):
        raise ConfigError(f"{source}: continuity.offset must be 'transverse' or 'along'")
    return ExperimentConfig(
        manifold=spec,
        experiment=experiment,
        epsilons=eps,
        n_pairs=n_pairs,
        near_fraction=near,
        rng_seed=g("rng_seed", _int, 42),
        method=method,
        output_dir=g("output_dir", str, "out"),
        firstvar_deltas=tuple(g("firstvar.deltas", _floats, [1e-2, 1e-3, 1e-4])),
        firstvar_trials=g("firstvar.trials", _int, 200),
        continuity_n_steps=g("continuity.n_steps", _int, 8),
        continuity_offset=offset,
        continuity_angle=g("continuity.angle", float, 1.0),
        continuity_base=None if base is None else tuple(base),
        oracle_pairs=g("oracle_check.pairs", _int, 1000),
        baselines=g("baselines", str, None),
        graph_cache=g("method.graph_cache", str, None),
        lines=tuple(kept),
    )


def load_file(path, overrides=None):
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return load(text, path, overrides)
