"""The periodic two-domain advection problem and its exact cycle values."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .gaussian_moments import Gaussian, MomentTriple, moments_hybrid
from .lookup_table import LookupTable
from .moment_ode import OdeRunConfig, Trajectory
from .network import NetworkSpec, two_domain_cycle


@dataclass(frozen=True)
class TwoDomainProblem:
    """Unit mass in domain 1 shaped like a Gaussian at ``a0`` of width ``sigma0``; domain 2 empty.

    With ``nu = 1`` the exact density returns to its initial state every two
    time units, so the initial moments are the exact values at ``t = 2n``.
    """

    sigma0: float
    a0: float = 0.5
    nu: float = 1.0

    @property
    def spec(self) -> NetworkSpec:
        return two_domain_cycle(self.nu)

    @property
    def gaussian(self) -> Gaussian:
        g = Gaussian(1.0, self.a0, self.sigma0)
        return Gaussian(1.0 / moments_hybrid(g).m0, self.a0, self.sigma0)

    @property
    def period(self) -> float:
        return 2.0 / self.nu

    def initial(self) -> dict:
        return {"1": moments_hybrid(self.gaussian), "2": MomentTriple.zero()}

    def exact(self) -> np.ndarray:
        """Six cycle values ``(m0, m1, m2)`` of domains 1 and 2, shape ``(2, 3)``."""
        m = self.initial()
        return np.array([m["1"].as_array(), m["2"].as_array()])

    def run(self, method: str, dt: float, t_end: float, table: LookupTable, refine: bool = True) -> Trajectory:
        from . import ap_scheme, moment_ode

        stride = max(1, int(round(self.period / dt)))
        cfg = OdeRunConfig(dt, t_end, stride)
        if method == "ode":
            return moment_ode.simulate(self.spec, self.initial(), cfg, table)
        if method == "ap":
            return ap_scheme.simulate(self.spec, self.initial(), cfg, table, refine=refine)
        raise ValueError(f"unknown method {method!r}")


def cycle_errors(problem: TwoDomainProblem, traj: Trajectory, table: LookupTable) -> list[dict]:
    """Per cycle time: relative moment errors and the recovered width error in domain 1.

    Zero cycle values (domain 2) are compared relative to the total mass of
    the same moment order, which is the nonzero value it cycles with.
    """
    exact = problem.exact()
    scale = np.abs(exact).sum(axis=0)
    out = []
    for k, t in enumerate(traj.times):
        cyc = t / problem.period
        if abs(cyc - round(cyc)) > 1e-9:
            continue
        m = traj.moments[k]
        rel = np.abs(m - exact) / scale[None, :]
        m1 = MomentTriple(*m[0])
        sigma_rec = table.recover(m1).sigma if m1.m0 > 0.0 else float("nan")
        E = m1.m1 / m1.m0
        V = m1.m2 / m1.m0 - E * E
        V0 = exact[0, 2] / exact[0, 0] - (exact[0, 1] / exact[0, 0]) ** 2
        out.append({
            "t": float(t),
            "rel_errors": rel.ravel(),
            "max_rel_error": float(rel.max()),
            "sigma_rel_error": abs(sigma_rec / problem.sigma0 - 1.0),
            "sigma_moment_rel_error": abs(np.sqrt(max(V, 0.0) / V0) - 1.0),
        })
    return out
