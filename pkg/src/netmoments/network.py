"""Directed networks of unit-interval domains and their flux coupling."""

from __future__ import annotations

import bisect
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .errors import ConfigError, IoFailure, UnknownVertex
from .gaussian_moments import MomentTriple

DEFAULT_KAPPA = 10.0


@dataclass(frozen=True)
class Constant:
    value: float

    def __call__(self, t: float) -> float:
        return self.value


@dataclass(frozen=True)
class PiecewiseLinear:
    """Linear interpolation in ``t`` with clamped extrapolation."""

    t: tuple
    v: tuple

    def __post_init__(self):
        if len(self.t) != len(self.v) or len(self.t) == 0:
            raise ConfigError("piecewise-linear table needs matching, nonempty t and value lists")
        if any(b <= a for a, b in zip(self.t, self.t[1:])):
            raise ConfigError("piecewise-linear table times must be strictly increasing")

    def __call__(self, t: float) -> float:
        ts, vs = self.t, self.v
        if t <= ts[0]:
            return vs[0]
        if t >= ts[-1]:
            return vs[-1]
        j = bisect.bisect_right(ts, t)
        w = (t - ts[j - 1]) / (ts[j] - ts[j - 1])
        return vs[j - 1] + w * (vs[j] - vs[j - 1])


def coefficient(spec) -> Callable[[float], float]:
    """Coefficient function from a number, ``{"t": [...], "value": [...]}``, or a callable."""
    if callable(spec):
        return spec
    if isinstance(spec, (int, float)) and not isinstance(spec, bool):
        return Constant(float(spec))
    if isinstance(spec, Mapping) and "t" in spec and "value" in spec:
        return PiecewiseLinear(tuple(float(x) for x in spec["t"]), tuple(float(x) for x in spec["value"]))
    raise ConfigError(f"cannot interpret coefficient {spec!r}")


@dataclass(frozen=True)
class CoefficientSampler:
    """Advection speed, diffusion and decay of one domain as functions of time."""

    nu: Callable[[float], float] = Constant(0.0)
    xi: Callable[[float], float] = Constant(0.0)
    mu: Callable[[float], float] = Constant(0.0)

    def at(self, t: float) -> tuple[float, float, float]:
        return self.nu(t), self.xi(t), self.mu(t)

    @classmethod
    def constant(cls, nu: float = 0.0, xi: float = 0.0, mu: float = 0.0) -> "CoefficientSampler":
        return cls(Constant(float(nu)), Constant(float(xi)), Constant(float(mu)))


@dataclass(frozen=True)
class Edge:
    src: str
    dst: str
    alpha: float = 1.0


# hook(t, moments, profiles) -> extra influx per vertex; ``profiles`` maps each
# vertex to the density the solver currently represents (a Gaussian for the
# moment methods, a grid density for the finite-volume oracle)
SourceHook = Callable[[float, Mapping[str, MomentTriple], Mapping[str, object]], Mapping[str, float]]


@dataclass(frozen=True)
class NetworkSpec:
    """Vertices with coefficients, weighted directed edges and external sources.

    ``source_hook(t, moments, profiles)`` lets an application add state-dependent
    influxes (the egg-laying kernel, for instance) on top of edge coupling.
    Edge pairs ``u->v``, ``v->u`` are reported by :func:`validate` unless
    ``allow_reverse_edges`` is set, as for the periodic two-domain test.
    """

    vertices: Mapping[str, CoefficientSampler]
    edges: tuple = ()
    sources: Mapping[str, Callable[[float], float]] = field(default_factory=dict)
    conservative: bool = False
    kappa: float = DEFAULT_KAPPA
    source_hook: SourceHook | None = None
    allow_reverse_edges: bool = False

    def __post_init__(self):
        object.__setattr__(self, "edges", tuple(self.edges))
        ids = list(self.vertices)
        for e in self.edges:
            for v in (e.src, e.dst):
                if v not in self.vertices:
                    raise UnknownVertex(v)
        for v in self.sources:
            if v not in self.vertices:
                raise UnknownVertex(v)
        index = {v: i for i, v in enumerate(ids)}
        object.__setattr__(self, "_index", index)
        object.__setattr__(self, "_in", {v: [(e.src, e.alpha) for e in self.edges if e.dst == v] for v in ids})
        object.__setattr__(self, "_out", {v: [(e.dst, e.alpha) for e in self.edges if e.src == v] for v in ids})

    @property
    def ids(self) -> list[str]:
        return list(self.vertices)

    def index(self, v: str) -> int:
        try:
            return self._index[v]
        except KeyError:
            raise UnknownVertex(v) from None

    def in_edges(self, v: str) -> list[tuple[str, float]]:
        self.index(v)
        return self._in[v]

    def out_edges(self, v: str) -> list[tuple[str, float]]:
        self.index(v)
        return self._out[v]

    def coupling_matrix(self) -> np.ndarray:
        """``W[w, v] = alpha_{v,w}`` so that ``f_in = W @ F_out``."""
        n = len(self.vertices)
        W = np.zeros((n, n))
        for e in self.edges:
            W[self._index[e.dst], self._index[e.src]] += e.alpha
        return W

    def is_pure_advection(self, t_samples) -> bool:
        return all(
            c.xi(t) == 0.0 and c.mu(t) == 0.0 for c in self.vertices.values() for t in t_samples
        )


@dataclass
class NetworkState:
    t: float
    moments: dict

    def __post_init__(self):
        for v, m in self.moments.items():
            if m.m0 < 0.0:
                raise ValueError(f"negative mass in vertex {v}")

    def total_mass(self) -> float:
        return sum(m.m0 for m in self.moments.values())


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.ok


def validate(spec: NetworkSpec, t_end: float = 1.0, n_samples: int = 101) -> ValidationReport:
    """Check the structural and coefficient assumptions; every violation is named."""
    out = []
    pairs = {}
    for e in spec.edges:
        if e.src == e.dst:
            out.append(f"self-loop on vertex {e.src}")
        key = (e.src, e.dst)
        if key in pairs:
            out.append(f"duplicate edge {e.src}->{e.dst}")
        pairs[key] = e
        if not e.alpha > 0.0:
            out.append(f"edge {e.src}->{e.dst} has nonpositive split ratio {e.alpha}")
    for (u, v) in pairs:
        if (v, u) in pairs and u < v and not spec.allow_reverse_edges:
            out.append(f"edges {u}->{v} and {v}->{u} flow in both directions")
    if spec.conservative:
        for v in spec.ids:
            outs = spec.out_edges(v)
            total = sum(a for _, a in outs)
            if outs and abs(total - 1.0) > 1e-12:
                out.append(f"split ratios out of {v} sum to {total}, not 1")
    for v in spec.sources:
        if spec.in_edges(v):
            out.append(f"source vertex {v} has incoming edges")
    ts = np.linspace(0.0, t_end, n_samples) if t_end > 0.0 else np.array([0.0])
    for v, c in spec.vertices.items():
        bad = {}
        for t in ts:
            nu, xi, mu = c.at(float(t))
            for name, val in (("nu", nu), ("xi", xi), ("mu", mu)):
                if not val >= 0.0 and name not in bad:
                    bad[name] = f"{name} of {v} is negative ({val}) at t={t:g}"
            if xi > spec.kappa * nu and "ratio" not in bad:
                bad["ratio"] = f"xi of {v} exceeds kappa*nu ({xi} > {spec.kappa}*{nu}) at t={t:g}"
        out.extend(bad.values())
    for v, f in spec.sources.items():
        for t in ts:
            if not f(float(t)) >= 0.0:
                out.append(f"external influx into {v} is negative at t={t:g}")
                break
    return ValidationReport(tuple(out))


def outflux(nu: float, rho1: float, m0: float, dt: float = math.inf) -> float:
    """Flux-limited outflux ``min(nu rho(1), m0 / dt)``."""
    raw = nu * rho1
    if dt == math.inf:
        return raw
    return min(raw, m0 / dt)


def coupling_influx(spec: NetworkSpec, outfluxes: Mapping[str, float], v: str, t: float = 0.0) -> float:
    """Influx into ``v``: weighted outfluxes of its in-neighbors plus any external source."""
    total = 0.0
    for u, alpha in spec.in_edges(v):
        total += alpha * outfluxes[u]
    src = spec.sources.get(v)
    if src is not None:
        total += src(t)
    return total


# ---------------------------------------------------------------------------
# JSON configuration
# ---------------------------------------------------------------------------


def _sampler(doc) -> CoefficientSampler:
    if not isinstance(doc, Mapping):
        raise ConfigError("vertex entry must be an object")
    return CoefficientSampler(*(coefficient(doc.get(k, 0.0)) for k in ("nu", "xi", "mu")))


def network_from_dict(doc: Mapping) -> NetworkSpec:
    """Build a spec from the JSON document layout described in the README."""
    try:
        vertices = {str(v["id"]): _sampler(v) for v in doc["vertices"]}
        edges = [Edge(str(e["from"]), str(e["to"]), float(e.get("alpha", 1.0))) for e in doc.get("edges", [])]
        sources = {str(s["vertex"]): coefficient(s["influx"]) for s in doc.get("sources", [])}
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"malformed network document: {exc}") from exc
    return NetworkSpec(
        vertices,
        edges,
        sources,
        conservative=bool(doc.get("conservative", False)),
        kappa=float(doc.get("kappa", DEFAULT_KAPPA)),
        allow_reverse_edges=bool(doc.get("allow_reverse_edges", False)),
    )


def read_json(path) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from exc


def load_network(path) -> NetworkSpec:
    return network_from_dict(read_json(path))


def two_domain_cycle(nu: float = 1.0) -> NetworkSpec:
    """Two domains feeding each other with unit split ratio and equal speed."""
    c = CoefficientSampler.constant(nu=nu)
    return NetworkSpec({"1": c, "2": c}, (Edge("1", "2"), Edge("2", "1")),
                       conservative=True, allow_reverse_edges=True)
