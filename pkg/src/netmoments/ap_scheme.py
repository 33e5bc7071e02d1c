"""Asymptotic-preserving advection stepper for pure-advection networks.

Within a step every domain's profile is shifted by ``delta_a``; whatever is
pushed past ``a = 1`` is integrated exactly from the reconstructed Gaussian
and handed to the out-neighbors, rescaled by the speed ratio ``gamma`` so
that it occupies ``[0, gamma delta_a]`` there.  Narrow Gaussians therefore
cross domain boundaries correctly even when ``dt`` is much larger than the
peak passage time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Mapping

import numpy as np

from .errors import PreconditionViolation, StepTooLarge, ZeroSendingSpeed
from .gaussian_moments import Gaussian, MomentTriple, partial_moments
from .lookup_table import LookupTable
from .moment_ode import OdeRunConfig, Trajectory, _as_vals
from .network import NetworkSpec, NetworkState
from .realizability import project_moments


_GAUSS3 = ((0.5 - 0.5 * math.sqrt(0.6), 5.0 / 18.0), (0.5, 8.0 / 18.0), (0.5 + 0.5 * math.sqrt(0.6), 5.0 / 18.0))


def delta_a(nu: Callable[[float], float], t: float, dt: float, rule: str = "midpoint") -> float:
    """Advected length ``integral_t^{t+dt} nu`` by the midpoint or 3-point Gauss rule."""
    if not dt > 0.0:
        raise ValueError("dt must be positive")
    if rule == "midpoint":
        da = dt * nu(t + 0.5 * dt)
    elif rule == "gauss3":
        da = dt * sum(w * nu(t + x * dt) for x, w in _GAUSS3)
    else:
        raise ValueError(f"unknown quadrature rule {rule!r}")
    if da > 1.0:
        raise StepTooLarge(f"advected length {da:g} exceeds the unit domain; reduce dt")
    return da


def gamma(nu_recv: Callable[[float], float], nu_send: Callable[[float], float], t: float, dt: float) -> float:
    """Receiving-to-sending speed ratio at the step midpoint."""
    tm = t + 0.5 * dt
    send = nu_send(tm)
    if send == 0.0:
        raise ZeroSendingSpeed(f"sending speed vanishes at t={tm:g}")
    return nu_recv(tm) / send


@dataclass(frozen=True)
class ApStepPlan:
    delta_a: dict
    gamma: dict


def plan(spec: NetworkSpec, t: float, dt: float, rule: str = "midpoint") -> ApStepPlan:
    da = {v: delta_a(c.nu, t, dt, rule) for v, c in spec.vertices.items()}
    g = {}
    for e in spec.edges:
        if da[e.src] > 0.0:
            g[(e.src, e.dst)] = gamma(spec.vertices[e.dst].nu, spec.vertices[e.src].nu, t, dt)
    return ApStepPlan(da, g)


def check_pure_advection(spec: NetworkSpec, t: float, dt: float) -> None:
    for v, c in spec.vertices.items():
        for s in (t, t + 0.5 * dt, t + dt):
            if c.xi(s) != 0.0 or c.mu(s) != 0.0:
                raise PreconditionViolation(
                    f"the AP scheme handles pure advection only; vertex {v} has xi or mu nonzero at t={s:g}"
                )


_CLEARANCE = 13.0  # widths beyond which a Gaussian tail is below double precision
_ROUNDOFF = 1e-12  # relative size of a negative moment still attributed to cancellation


def _block(q: float, da: float) -> tuple[float, float, float]:
    """Moments of mass ``q`` spread uniformly over ``[0, da]``."""
    return q, 0.5 * q * da, q * da * da / 3.0


class ApStepper:
    """Two-phase stepper: all transfers are computed from the old state, then applied."""

    def __init__(self, spec: NetworkSpec, table: LookupTable, refine: bool = True, rule: str = "midpoint"):
        self.spec = spec
        self.rule = rule
        self.table = table
        self.refine = refine
        self.ids = spec.ids
        idx = {v: i for i, v in enumerate(self.ids)}
        self.out = [[(idx[w], a, w) for w, a in spec.out_edges(v)] for v in self.ids]
        self.sources = [spec.sources.get(v) for v in self.ids]
        self.clamp_events = 0

    def step(self, t: float, vals, dt: float):
        spec = self.spec
        check_pure_advection(spec, t, dt)
        p = plan(spec, t, dt, self.rule)
        tm = t + 0.5 * dt
        rec = self.table.recover_params
        gauss = [rec(*m) for m in vals]
        delta = [[0.0, 0.0, 0.0] for _ in vals]
        for i, (v, (m0, m1, m2)) in enumerate(zip(self.ids, vals)):
            da = p.delta_a[v]
            if da == 0.0 or not m0 > 0.0:
                continue
            C, a0, s = gauss[i]
            if a0 + _CLEARANCE * s < 1.0 - da:
                # nothing reaches the trailing interval: a pure shift
                delta[i][1] += da * m0
                delta[i][2] += 2.0 * da * m1 + da * da * m0
                continue
            if self.refine:
                C, a0, s = gauss[i] = rec(m0, m1, m2, refine=True)
            M0, M1, M2 = partial_moments(Gaussian(C, a0, s), da)
            d = delta[i]
            d[0] -= M0
            d[1] += da * m0 - (M0 + M1)
            d[2] += 2.0 * da * m1 + da * da * m0 - (M0 + 2.0 * M1 + M2)
            for j, alpha, w in self.out[i]:
                g = p.gamma[(v, w)]
                r = delta[j]
                r[0] += alpha * M0
                r[1] += g * alpha * M1
                r[2] += g * g * alpha * M2
        extra = None
        if spec.source_hook is not None:
            mom = {v: MomentTriple(*m) if m[0] > 0.0 else MomentTriple.zero() for v, m in zip(self.ids, vals)}
            extra = spec.source_hook(tm, mom, {v: Gaussian(*g) for v, g in zip(self.ids, gauss)})
        for i, v in enumerate(self.ids):
            q = 0.0
            if self.sources[i] is not None:
                q += self.sources[i](tm)
            if extra:
                q += extra.get(v, 0.0)
            if q != 0.0:
                b = _block(q * dt, p.delta_a[v])
                for k in range(3):
                    delta[i][k] += b[k]
        fs = self.table.feasible
        new = []
        for m, d in zip(vals, delta):
            x = [m[k] + d[k] for k in range(3)]
            for k in range(3):
                if x[k] < 0.0:
                    # a domain emptied in one step cancels to round-off; that is not a clamp
                    if -x[k] > _ROUNDOFF * (abs(m[k]) + abs(d[k])):
                        self.clamp_events += 1
                    x[k] = 0.0
            pm = project_moments(MomentTriple(*x) if x[0] > 0.0 else MomentTriple.zero(), fs)
            new.append((pm.m0, pm.m1, pm.m2))
        return new


def step(state: NetworkState, spec: NetworkSpec, table: LookupTable, t: float, dt: float,
         refine: bool = True, rule: str = "midpoint") -> NetworkState:
    st = ApStepper(spec, table, refine, rule)
    new = st.step(t, _as_vals(spec, state.moments), dt)
    return NetworkState(t + dt, {v: MomentTriple(*m) for v, m in zip(spec.ids, new)})


def simulate(spec: NetworkSpec, init: Mapping[str, MomentTriple], cfg: OdeRunConfig,
             table: LookupTable, t0: float = 0.0, refine: bool = True, rule: str = "midpoint") -> Trajectory:
    """AP trajectory; ``extra["clamp_events"]`` counts clamps up to each record."""
    st = ApStepper(spec, table, refine, rule)
    fs = table.feasible
    vals = [tuple(project_moments(MomentTriple(*m) if m[0] > 0.0 else MomentTriple.zero(), fs))
            for m in _as_vals(spec, init)]
    times, rec, clamps = [t0], [vals], [0]
    n = cfg.n_steps
    for k in range(1, n + 1):
        vals = st.step(t0 + (k - 1) * cfg.dt, vals, cfg.dt)
        if k % cfg.record_stride == 0 or k == n:
            times.append(t0 + k * cfg.dt)
            rec.append(vals)
            clamps.append(st.clamp_events)
    return Trajectory(list(spec.ids), np.array(times), np.array(rec, dtype=float),
                      {"clamp_events": clamps})
