"""ODE moment method: closed moment equations advanced by flux-limited RK4."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping

import numpy as np

from .gaussian_moments import Gaussian, MomentTriple
from .lookup_table import LookupTable
from .network import NetworkSpec, NetworkState
from .realizability import project_moments


@dataclass(frozen=True)
class OdeRunConfig:
    dt: float
    t_end: float
    record_stride: int = 1
    limiter_enabled: bool = True

    def __post_init__(self):
        if not self.dt > 0.0:
            raise ValueError("dt must be positive")
        if not self.t_end >= 0.0:
            raise ValueError("t_end must be nonnegative")
        if self.record_stride < 1:
            raise ValueError("record_stride must be at least 1")

    @property
    def n_steps(self) -> int:
        return int(round(self.t_end / self.dt))


@dataclass
class Trajectory:
    """Recorded states; ``moments[k, i]`` is ``(m0, m1, m2)`` of vertex ``ids[i]`` at ``times[k]``."""

    ids: list
    times: np.ndarray
    moments: np.ndarray
    extra: dict | None = None

    def vertex(self, v: str) -> np.ndarray:
        return self.moments[:, self.ids.index(v), :]

    def stat(self) -> np.ndarray:
        """``(M, E, V)`` per record and vertex; ``E`` and ``V`` are NaN where the mass is zero."""
        m0, m1, m2 = (self.moments[..., k] for k in range(3))
        with np.errstate(invalid="ignore", divide="ignore"):
            E = np.where(m0 > 0.0, m1 / np.where(m0 > 0.0, m0, 1.0), np.nan)
            V = np.where(m0 > 0.0, m2 / np.where(m0 > 0.0, m0, 1.0) - E * E, np.nan)
        return np.stack([m0, E, V], axis=-1)

    def total_mass(self) -> np.ndarray:
        return self.moments[..., 0].sum(axis=1)

    def rows(self):
        """Rows ``(t, vertex, m0, m1, m2, M, E, V)``; extra per-record columns are appended."""
        st = self.stat()
        extra = self.extra or {}
        for k, t in enumerate(self.times):
            for i, v in enumerate(self.ids):
                m = self.moments[k, i]
                s = st[k, i]
                yield (float(t), v, *map(float, m), *map(float, s), *(extra[c][k] for c in extra))

    def columns(self) -> list[str]:
        return ["t", "vertex", "m0", "m1", "m2", "M", "E", "V", *(self.extra or {})]


class MomentSystem:
    """Right-hand side of the closed moment equations for one network."""

    def __init__(self, spec: NetworkSpec, table: LookupTable, limiter: bool = True):
        self.spec = spec
        self.table = table
        self.limiter = limiter
        self.ids = spec.ids
        self.coeffs = [spec.vertices[v] for v in self.ids]
        idx = {v: i for i, v in enumerate(self.ids)}
        self.inflow = [[(idx[u], a) for u, a in spec.in_edges(v)] for v in self.ids]
        self.sources = [spec.sources.get(v) for v in self.ids]
        self.hook = spec.source_hook

    def recover_all(self, vals):
        rec = self.table.recover_params
        return [rec(m0, m1, m2) for m0, m1, m2 in vals]

    def fluxes(self, t, vals, dt_cap=math.inf, coefs=None):
        """Per vertex ``(F_out, rho(0), rho(1) as used, (C, a0, sigma))``."""
        if coefs is None:
            coefs = [c.at(t) for c in self.coeffs]
        out = []
        for (m0, m1, m2), (nu, _, _), g in zip(vals, coefs, self.recover_all(vals)):
            C, a0, s = g
            if C > 0.0:
                inv = 0.5 / (s * s)
                r0 = C * math.exp(-a0 * a0 * inv)
                r1 = C * math.exp(-(1.0 - a0) * (1.0 - a0) * inv)
            else:
                r0 = r1 = 0.0
            F = nu * r1
            if self.limiter and dt_cap != math.inf:
                cap = max(m0, 0.0) / dt_cap
                if F > cap:
                    F = cap
                    # the limited flux stands in for nu rho(1) in all three equations
                    r1 = F / nu
            out.append((F, r0, r1, g))
        return out

    def derivative(self, t, vals, dt_cap=math.inf):
        coefs = [c.at(t) for c in self.coeffs]
        fl = self.fluxes(t, vals, dt_cap, coefs)
        extra = None
        if self.hook is not None:
            mom = {v: MomentTriple(*m) if m[0] > 0.0 else MomentTriple.zero() for v, m in zip(self.ids, vals)}
            extra = self.hook(t, mom, {v: Gaussian(*f[3]) for v, f in zip(self.ids, fl)})
        out = []
        for i, ((m0, m1, m2), (nu, xi, mu)) in enumerate(zip(vals, coefs)):
            F, r0, r1, _ = fl[i]
            f_in = 0.0
            for j, a in self.inflow[i]:
                f_in += a * fl[j][0]
            src = self.sources[i]
            if src is not None:
                f_in += src(t)
            if extra:
                f_in += extra.get(self.ids[i], 0.0)
            d0 = -F - mu * m0 + f_in
            d1 = -(nu + xi) * r1 + xi * r0 + nu * m0 - mu * m1
            d2 = -(nu + 2.0 * xi) * r1 + 2.0 * nu * m1 + 2.0 * xi * m0 - mu * m2
            out.append((d0, d1, d2))
        return out

    def project(self, vals):
        fs = self.table.feasible
        out = []
        for m in vals:
            p = project_moments(MomentTriple(*m) if m[0] > 0.0 else MomentTriple.zero(), fs)
            out.append((p.m0, p.m1, p.m2))
        return out

    def step(self, t, vals, dt):
        """Classical RK4 with the flux cap in every stage, then projection."""
        cap = dt if self.limiter else math.inf
        k1 = self.derivative(t, vals, cap)
        y2 = [tuple(y + 0.5 * dt * k for y, k in zip(m, d)) for m, d in zip(vals, k1)]
        k2 = self.derivative(t + 0.5 * dt, y2, cap)
        y3 = [tuple(y + 0.5 * dt * k for y, k in zip(m, d)) for m, d in zip(vals, k2)]
        k3 = self.derivative(t + 0.5 * dt, y3, cap)
        y4 = [tuple(y + dt * k for y, k in zip(m, d)) for m, d in zip(vals, k3)]
        k4 = self.derivative(t + dt, y4, cap)
        new = [
            tuple(y + dt / 6.0 * (a + 2.0 * b + 2.0 * c + d) for y, a, b, c, d in zip(m, *ks))
            for m, ks in zip(vals, zip(k1, k2, k3, k4))
        ]
        return self.project(new)


def _as_vals(spec: NetworkSpec, moments: Mapping[str, MomentTriple]):
    return [tuple(moments.get(v, MomentTriple.zero())) for v in spec.ids]


def rhs(state: NetworkState, spec: NetworkSpec, table: LookupTable, dt_for_cap: float = math.inf,
        limiter: bool = True) -> dict:
    """Time derivative of every vertex's moments at ``state``."""
    sys_ = MomentSystem(spec, table, limiter)
    d = sys_.derivative(state.t, _as_vals(spec, state.moments), dt_for_cap)
    return {v: MomentTriple(*x) for v, x in zip(spec.ids, d)}


def rk4_step(state: NetworkState, spec: NetworkSpec, table: LookupTable, dt: float,
             limiter: bool = True) -> NetworkState:
    if not dt > 0.0:
        raise ValueError("dt must be positive")
    sys_ = MomentSystem(spec, table, limiter)
    new = sys_.step(state.t, _as_vals(spec, state.moments), dt)
    return NetworkState(state.t + dt, {v: MomentTriple(*m) for v, m in zip(spec.ids, new)})


def simulate(spec: NetworkSpec, init: Mapping[str, MomentTriple], cfg: OdeRunConfig,
             table: LookupTable, t0: float = 0.0) -> Trajectory:
    """Project the initial moments, then advance ``cfg.n_steps`` RK4 steps."""
    sys_ = MomentSystem(spec, table, cfg.limiter_enabled)
    vals = sys_.project(_as_vals(spec, init))
    times = [t0]
    rec = [vals]
    n = cfg.n_steps
    for k in range(1, n + 1):
        vals = sys_.step(t0 + (k - 1) * cfg.dt, vals, cfg.dt)
        if k % cfg.record_stride == 0 or k == n:
            times.append(t0 + k * cfg.dt)
            rec.append(vals)
    return Trajectory(list(spec.ids), np.array(times), np.array(rec, dtype=float))
