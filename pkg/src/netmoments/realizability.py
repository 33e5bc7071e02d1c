"""Realizable (mean, variance) pairs of Gaussians restricted to (0, 1).

The upper boundary of the realizable set is traced by exponentials
``exp(-beta a)``; Gaussians centered far outside the interval approach it.
Because the lookup table only samples a bounded parameter set ``D`` of
``(a0, sigma)`` pairs, the set actually used at runtime is the image of ``D``.
:class:`FeasibleSet` stores that image's boundary as dense polylines and
:func:`project_stat` maps arbitrary pairs into it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .gaussian_moments import MomentTriple, forward_stat

SERIES_THRESHOLD = 1.0


def _exp_series(beta: float) -> tuple[float, float, float]:
    # sum_n (-beta)^n / n! / (n + k + 1)
    s0 = s1 = s2 = 0.0
    term = 1.0
    for n in range(60):
        s0 += term / (n + 1)
        s1 += term / (n + 2)
        s2 += term / (n + 3)
        term *= -beta / (n + 1)
        if abs(term) < 1e-18:
            break
    return s0, s1, s2


def exponential_moments(beta: float, series_threshold: float = SERIES_THRESHOLD) -> MomentTriple:
    """Moments of ``exp(-beta a)`` on (0, 1).

    For ``|beta| < series_threshold`` the Taylor series is summed; the closed
    forms cancel catastrophically there (the numerator of ``m2`` behaves like
    ``beta^3 / 3``).  Overflows to ``inf`` for very negative ``beta``; use
    :func:`exponential_stat` when only ``(E, V)`` is needed.
    """
    if beta == 0.0:
        return MomentTriple(1.0, 0.5, 1.0 / 3.0)
    if abs(beta) < series_threshold:
        return MomentTriple(*_exp_series(beta))
    e = math.exp(-beta)
    m0 = -math.expm1(-beta) / beta
    m1 = (1.0 - (1.0 + beta) * e) / beta**2
    m2 = 2.0 * (1.0 - (1.0 + beta + 0.5 * beta * beta) * e) / beta**3
    return MomentTriple(m0, m1, m2)


def exponential_stat(beta: float) -> tuple[float, float]:
    """``(E, V)`` of ``exp(-beta a)`` on (0, 1), finite for every real ``beta``."""
    if beta < 0.0:
        E, V = exponential_stat(-beta)
        return 1.0 - E, V
    if beta < SERIES_THRESHOLD:
        m = exponential_moments(beta)
        E = m.m1 / m.m0
        return E, m.m2 / m.m0 - E * E
    # beta >= 1: divide numerator and denominator by (1 - e^-beta)
    e = math.exp(-beta)
    q = e / -math.expm1(-beta)  # e^-b / (1 - e^-b)
    E = 1.0 / beta - q
    second = 2.0 / beta**2 - (1.0 + 2.0 / beta) * q  # m2/m0
    return E, second - E * E


@dataclass(frozen=True)
class BoundaryCurve:
    """Samples ``(beta, E(beta), V(beta))`` of the exponential upper boundary,
    ordered by increasing ``E`` (i.e. decreasing ``beta``)."""

    beta: np.ndarray
    E: np.ndarray
    V: np.ndarray

    def v_at(self, E: float) -> float:
        """Upper boundary ``V`` at mean ``E``, by root-finding on the closed form."""
        if not 0.0 < E < 1.0:
            raise ValueError("E must lie in (0, 1)")
        if E == 0.5:
            return 1.0 / 12.0
        if E < 0.5:
            return self.v_at(1.0 - E)
        # E > 1/2 corresponds to beta < 0; solve on -beta > 0 with E_pos = 1 - E
        target = 1.0 - E
        hi = 1.0
        while exponential_stat(hi)[0] > target:
            hi *= 2.0
        b = brentq(lambda x: exponential_stat(x)[0] - target, 0.0, hi, xtol=1e-15, rtol=1e-15)
        return exponential_stat(b)[1]


def default_beta_grid(n_per_sign: int = 400, lo: float = 1e-4, hi: float = 1e4) -> np.ndarray:
    mags = np.logspace(math.log10(lo), math.log10(hi), n_per_sign)
    return np.concatenate([-mags[::-1], [0.0], mags])


def boundary_curve(beta_grid=None) -> BoundaryCurve:
    if beta_grid is None:
        beta_grid = default_beta_grid()
    beta = np.unique(np.asarray(beta_grid, dtype=float))[::-1]
    ev = np.array([exponential_stat(float(b)) for b in beta])
    E, V = ev[:, 0], ev[:, 1]
    if not np.all(np.diff(E) > 0.0):
        raise ValueError("boundary curve is not strictly monotone in E; beta grid too dense")
    return BoundaryCurve(beta, E, V)


@dataclass(frozen=True)
class FeasibleSet:
    """Truncated realizable set: ``E_min <= E <= E_max``, ``V_min(E) <= V <= V_max(E)``.

    ``lower`` and ``upper`` are polylines ``(E, V)`` on ``E >= 1/2``; values for
    ``E < 1/2`` follow by the reflection ``E -> 1 - E``.
    """

    E_min: float
    E_max: float
    lower_E: np.ndarray
    lower_V: np.ndarray
    upper_E: np.ndarray
    upper_V: np.ndarray
    meta: dict = field(default_factory=dict, compare=False)

    def v_min(self, E: float) -> float:
        e = E if E >= 0.5 else 1.0 - E
        return float(np.interp(e, self.lower_E, self.lower_V))

    def v_max(self, E: float) -> float:
        e = E if E >= 0.5 else 1.0 - E
        return float(np.interp(e, self.upper_E, self.upper_V))

    def v_min_array(self, E) -> np.ndarray:
        E = np.asarray(E, dtype=float)
        return np.interp(np.where(E >= 0.5, E, 1.0 - E), self.lower_E, self.lower_V)

    def v_max_array(self, E) -> np.ndarray:
        E = np.asarray(E, dtype=float)
        return np.interp(np.where(E >= 0.5, E, 1.0 - E), self.upper_E, self.upper_V)

    def contains(self, E: float, V: float) -> bool:
        return self.E_min <= E <= self.E_max and self.v_min(E) <= V <= self.v_max(E)


def _monotone(E: np.ndarray, V: np.ndarray):
    order = np.argsort(E, kind="stable")
    E, V = E[order], V[order]
    keep = np.concatenate([[True], np.diff(E) > 0.0])
    return E[keep], V[keep]


def feasible_set_from_domain(sigma_min: float, sigma_max: float, c: float,
                             n_edge: int = 16000) -> FeasibleSet:
    """Boundary of the image of ``D = {sigma_min <= sigma <= sigma_max, 1/2 <= a0 <= 1 + c sigma}``.

    The lower boundary is the image of ``sigma = sigma_min``; the upper boundary
    is the image of the edge ``a0 = 1 + c sigma`` joined to the edge
    ``sigma = sigma_max``.  Both meet the lower boundary at the corner
    ``(1 + c sigma_min, sigma_min)``, which sets ``E_max``.
    """
    # bottom edge: exact for interior centers, dense where the right end truncates
    z = np.linspace(max(-12.0, -0.5 / sigma_min), c, n_edge)
    a0_bottom = np.concatenate([[0.5], 1.0 + sigma_min * z])
    a0_bottom = a0_bottom[a0_bottom >= 0.5]
    log_sig = np.linspace(math.log(sigma_min), math.log(sigma_max), n_edge)
    u = np.linspace(0.0, 1.0, n_edge)

    def edges(a0_b, log_s, u):
        s = np.exp(log_s)
        s[0], s[-1] = sigma_min, sigma_max
        a0_t = 0.5 + (0.5 + c * sigma_max) * u**2
        bottom = forward_stat(a0_b, np.full_like(a0_b, sigma_min))
        right = forward_stat(1.0 + c * s, s)
        top = forward_stat(a0_t, np.full_like(a0_t, sigma_max))
        return bottom, right, top

    (Eb, Vb), (Er, Vr), (Et, Vt) = edges(a0_bottom, log_sig, u)
    corner = (float(Er[0]), float(Vr[0]))
    lower_E, lower_V = _monotone(Eb, Vb)
    upper_E, upper_V = _monotone(np.concatenate([Et, Er]), np.concatenate([Vt, Vr]))
    # pin the shared corner so both envelopes end on the same point
    lower_E[-1], lower_V[-1] = corner
    upper_E[-1], upper_V[-1] = corner

    # the polylines are chords of curved edges; widen them by twice the
    # chord error seen at segment midpoints so every image of D is inside
    mid = lambda x: 0.5 * (x[1:] + x[:-1])
    (Ebm, Vbm), (Erm, Vrm), (Etm, Vtm) = edges(mid(a0_bottom), mid(log_sig), mid(u))
    Eu, Vu = np.concatenate([Erm, Etm]), np.concatenate([Vrm, Vtm])
    up = float(np.max(Vu / np.interp(Eu, upper_E, upper_V) - 1.0, initial=0.0))
    down = float(np.max(1.0 - Vbm / np.interp(Ebm, lower_E, lower_V), initial=0.0))
    upper_V = upper_V * (1.0 + 2.0 * up)
    lower_V = lower_V * (1.0 - 2.0 * down)
    E_max = corner[0]
    return FeasibleSet(
        E_min=1.0 - E_max,
        E_max=E_max,
        lower_E=lower_E,
        lower_V=lower_V,
        upper_E=upper_E,
        upper_V=upper_V,
        meta={"sigma_min": sigma_min, "sigma_max": sigma_max, "c": c,
              "upper_margin": 2.0 * up, "lower_margin": 2.0 * down},
    )


def project_stat(E: float, V: float, fs: FeasibleSet) -> tuple[float, float]:
    """Map any ``(E, V)`` into the feasible set (five-case projection)."""
    if E < fs.E_min:
        return fs.E_min, fs.v_min(fs.E_min)
    if E > fs.E_max:
        return fs.E_max, fs.v_max(fs.E_max)
    lo = fs.v_min(E)
    if V < lo:
        return E, lo
    hi = fs.v_max(E)
    if V > hi:
        return E, hi
    return E, V


def project_moments(m: MomentTriple, fs: FeasibleSet) -> MomentTriple:
    """Zero triple for ``m0 <= 0``; otherwise keep ``m0`` and rebuild ``m1, m2`` from the projected pair."""
    m0 = m.m0
    if not m0 > 0.0:
        return MomentTriple.zero()
    E = m.m1 / m0
    V = m.m2 / m0 - E * E
    PE, PV = project_stat(E, V, fs)
    if PE == E and PV == V:
        return m
    return MomentTriple(m0, m0 * PE, m0 * (PV + PE * PE))
