"""Gaussians restricted to the unit interval and their monomial moments.

Three evaluation routes are provided for the moments of
``G(a) = C exp(-(a - a0)^2 / (2 sigma^2))`` over a subinterval of the real line:

* closed-form expressions in the error function (fast, but they lose all
  accuracy once both endpoints sit far out in the same tail),
* composite Simpson quadrature restricted to the region where the Gaussian is
  numerically nonzero,
* a hybrid that picks the erf route inside a safe band of arguments and falls
  back to quadrature otherwise.

The workhorse is :func:`unit_interval_moments`, which is vectorized over
``(a0, sigma, lo, hi)``.  It works with a *normalized* Gaussian whose maximum
over ``[lo, hi]`` equals one and returns moments about the point ``p`` of the
interval closest to ``a0``.  Keeping the scale factor separate (as a log) lets
the lookup table handle Gaussians centered many widths outside the domain,
whose raw amplitude on the interval is below ``1e-80``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erf, erfc, erfcx

from .errors import InvalidInterval, OutOfSafeBand, ZeroMass

SAFE_BAND = 6.0
SUPPORT_CUTOFF = 1e-16
DEFAULT_TOL = 1e-12

_SQRT2 = math.sqrt(2.0)
_SQRT_HALF_PI = math.sqrt(0.5 * math.pi)
_INITIAL_PANELS = 72  # support is at most ~17.2 sigma wide, so h <= sigma/4
_MAX_PANELS = 72 * 2**14
_CHUNK_POINTS = 4_000_000
_ERF_EPS = 64.0 * np.finfo(float).eps  # relative accuracy assumed for the erf-based n0


@dataclass(frozen=True)
class Gaussian:
    """Amplitude ``C``, center ``a0`` and width ``sigma`` of a Gaussian."""

    C: float
    a0: float
    sigma: float

    def __post_init__(self):
        if not (self.C >= 0.0 and math.isfinite(self.C)):
            raise ValueError(f"Gaussian amplitude must be finite and >= 0, got {self.C}")
        if not (self.sigma > 0.0 and math.isfinite(self.sigma)):
            raise ValueError(f"Gaussian width must be finite and > 0, got {self.sigma}")
        if not math.isfinite(self.a0):
            raise ValueError(f"Gaussian center must be finite, got {self.a0}")

    def __call__(self, a):
        return eval_gaussian(self, a)

    @property
    def is_zero(self) -> bool:
        return self.C == 0.0


@dataclass(frozen=True)
class MomentTriple:
    """Monomial moments ``(m0, m1, m2)`` of a density on (0, 1)."""

    m0: float
    m1: float
    m2: float

    @classmethod
    def zero(cls) -> "MomentTriple":
        return cls(0.0, 0.0, 0.0)

    def as_array(self) -> np.ndarray:
        return np.array([self.m0, self.m1, self.m2])

    def scaled(self, factor: float) -> "MomentTriple":
        return MomentTriple(factor * self.m0, factor * self.m1, factor * self.m2)

    def __add__(self, other: "MomentTriple") -> "MomentTriple":
        return MomentTriple(self.m0 + other.m0, self.m1 + other.m1, self.m2 + other.m2)

    def __iter__(self):
        yield self.m0
        yield self.m1
        yield self.m2


@dataclass(frozen=True)
class StatMoments:
    """Mass ``M``, mean age ``E`` and age variance ``V``."""

    M: float
    E: float
    V: float


def eval_gaussian(g: Gaussian, a):
    """Pointwise value ``C exp(-(a - a0)^2 / (2 sigma^2))``; scalar or array ``a``."""
    if isinstance(a, np.ndarray):
        return g.C * np.exp(-((a - g.a0) ** 2) / (2.0 * g.sigma**2))
    return g.C * math.exp(-((a - g.a0) ** 2) / (2.0 * g.sigma**2))


def stat_from_monomial(m: MomentTriple) -> StatMoments:
    if not m.m0 > 0.0:
        raise ZeroMass(f"statistical moments need m0 > 0, got m0={m.m0}")
    E = m.m1 / m.m0
    return StatMoments(m.m0, E, m.m2 / m.m0 - E * E)


def monomial_from_stat(s: StatMoments) -> MomentTriple:
    return MomentTriple(s.M, s.M * s.E, s.M * (s.V + s.E * s.E))


# ---------------------------------------------------------------------------
# vectorized core
# ---------------------------------------------------------------------------


def _erf_diff(x_lo, x_hi):
    """``erf(x_hi) - erf(x_lo)`` without cancellation when both share a tail."""
    out = erf(x_hi) - erf(x_lo)
    right = x_lo > 0.0
    left = x_hi < 0.0
    out = np.where(right, erfc(x_lo) - erfc(x_hi), out)
    out = np.where(left, erfc(-x_hi) - erfc(-x_lo), out)
    return out


def _in_band(a0, sigma, lo, hi, band):
    s = _SQRT2 * sigma
    return (np.abs((hi - a0) / s) <= band) & (np.abs((lo - a0) / s) <= band)


def _erf_normalized(mu, sigma, blo, bhi):
    """Normalized moments about p via the closed-form formulas.

    ``mu = a0 - p`` and ``[blo, bhi] = [lo - p, hi - p]``; the normalized
    Gaussian is ``exp(-b (b - 2 mu) / (2 sigma^2))``.
    """
    s2 = sigma * sigma
    s = _SQRT2 * sigma
    n0 = sigma * _SQRT_HALF_PI * np.exp(mu * mu / (2.0 * s2)) * _erf_diff((blo - mu) / s, (bhi - mu) / s)
    g_hi = np.exp(-bhi * (bhi - 2.0 * mu) / (2.0 * s2))
    g_lo = np.exp(-blo * (blo - 2.0 * mu) / (2.0 * s2))
    c1 = mu * n0 - s2 * (g_hi - g_lo)
    c2 = mu * c1 + s2 * n0 - s2 * (bhi * g_hi - blo * g_lo)
    return n0, c1, c2


def _erf_well_conditioned(mu, sigma, blo, bhi, n0, c1, c2, tol):
    """Whether the closed forms keep ``tol`` accuracy despite cancellation.

    For wide Gaussians centered far outside the interval the terms of ``c1``
    and ``c2`` are orders of magnitude larger than their sum.  The rounding
    of ``n0`` (a few ulps) is propagated through both recurrences and
    compared against the same acceptance scale the quadrature uses.
    """
    s2 = sigma * sigma
    g_hi = np.exp(-bhi * (bhi - 2.0 * mu) / (2.0 * s2))
    g_lo = np.exp(-blo * (blo - 2.0 * mu) / (2.0 * s2))
    terms1 = np.abs(mu * n0) + s2 * (g_hi + g_lo)
    terms2 = np.abs(mu) * terms1 + s2 * n0 + s2 * (np.abs(bhi) * g_hi + np.abs(blo) * g_lo)
    scale = np.minimum(bhi - blo, sigma)
    ref = np.abs(n0)
    return (_ERF_EPS * terms1 <= tol * ref * scale) & (_ERF_EPS * terms2 <= tol * ref * scale * scale)


def _support(mu, sigma, blo, bhi, cutoff):
    """Intersection of [blo, bhi] with the region where the normalized Gaussian exceeds ``cutoff``."""
    q = 2.0 * sigma * sigma * math.log(1.0 / cutoff)
    r = np.sqrt(mu * mu + q)
    # roots of b^2 - 2 mu b - q = 0, the small one written without cancellation
    big = np.where(mu >= 0.0, mu + r, mu - r)
    small = -q / big
    left = np.minimum(big, small)
    right = np.maximum(big, small)
    return np.maximum(blo, left), np.minimum(bhi, right)


def _simpson_batch(mu, sigma, x0, x1, n):
    """Composite Simpson with ``n`` panels (even) for each row; returns (n0, c1, c2)."""
    t = np.linspace(0.0, 1.0, n + 1)
    w = np.ones(n + 1)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    h = (x1 - x0) / n
    b = x0[:, None] + (x1 - x0)[:, None] * t[None, :]
    f = np.exp(-b * (b - 2.0 * mu[:, None]) / (2.0 * (sigma * sigma)[:, None]))
    fw = f * w
    n0 = fw.sum(axis=1) * h / 3.0
    c1 = (fw * b).sum(axis=1) * h / 3.0
    c2 = (fw * b * b).sum(axis=1) * h / 3.0
    return n0, c1, c2


def _quadrature_normalized(mu, sigma, blo, bhi, tol, cutoff):
    """Composite Simpson on the numerical support, refined by panel doubling.

    Successive Simpson sums are combined by Richardson extrapolation; the
    difference between the last two diagonal entries is the error estimate.
    """
    x0, x1 = _support(mu, sigma, blo, bhi, cutoff)
    width = np.maximum(x1 - x0, 0.0)
    out = np.zeros((3,) + mu.shape)
    active = np.flatnonzero(width > 0.0)
    if active.size == 0:
        return out[0], out[1], out[2]
    n = _INITIAL_PANELS
    rows = []  # Richardson table rows for the active set, each of shape (level+1, 3, n_active)
    level = 0
    while active.size:
        chunk = max(1, _CHUNK_POINTS // (n + 1))
        parts = [
            _simpson_batch(mu[idx], sigma[idx], x0[idx], x1[idx], n)
            for idx in np.array_split(active, max(1, math.ceil(active.size / chunk)))
        ]
        simpson = np.stack([np.concatenate([p[k] for p in parts]) for k in range(3)])
        row = [simpson]
        for j in range(1, level + 1):
            prev = rows[-1][j - 1]
            row.append(row[j - 1] + (row[j - 1] - prev) / (4.0 ** (j + 1) - 1.0))
        if level == 0:
            ok = np.zeros(active.size, dtype=bool)
        else:
            best, last = row[-1], rows[-1][-1]
            err = np.abs(best - last)
            scale = np.minimum(width[active], sigma[active])
            ref = np.abs(best[0])
            ok = (
                (err[0] <= tol * ref)
                & (err[1] <= tol * ref * scale)
                & (err[2] <= tol * ref * scale * scale)
            )
            if n >= _MAX_PANELS:
                ok[:] = True
        done = active[ok]
        out[:, done] = row[-1][:, ok]
        keep = ~ok
        active = active[keep]
        rows = [[r[:, keep] for r in row]]
        level += 1
        n *= 2
    return out[0], out[1], out[2]


def unit_interval_moments(a0, sigma, lo=0.0, hi=1.0, *, method="hybrid",
                          tol=DEFAULT_TOL, band=SAFE_BAND, cutoff=SUPPORT_CUTOFF):
    """Moments of unit-amplitude Gaussians over ``[lo, hi]`` in factored form.

    Returns ``(log_scale, p, n0, c1, c2)`` such that for ``k = 0, 1, 2``::

        integral_lo^hi (a - p)^k exp(-(a - a0)^2 / (2 sigma^2)) da
            = exp(log_scale) * n_k

    where ``p = clip(a0, lo, hi)``.  ``method`` is ``"erf"``, ``"quadrature"``
    or ``"hybrid"``.  The erf method does not check the band; callers that
    need the check use :func:`moments_erf`.
    """
    a0, sigma, lo, hi = np.broadcast_arrays(*(np.asarray(x, dtype=float) for x in (a0, sigma, lo, hi)))
    shape = a0.shape
    a0, sigma, lo, hi = (x.ravel() for x in (a0, sigma, lo, hi))
    p = np.clip(a0, lo, hi)
    mu = a0 - p
    blo = lo - p
    bhi = hi - p
    log_scale = -(mu * mu) / (2.0 * sigma * sigma)
    n0 = np.empty_like(a0)
    c1 = np.empty_like(a0)
    c2 = np.empty_like(a0)
    if method == "erf":
        use_erf = np.ones(a0.shape, dtype=bool)
    elif method == "quadrature":
        use_erf = np.zeros(a0.shape, dtype=bool)
    elif method == "hybrid":
        use_erf = _in_band(a0, sigma, lo, hi, band)
    else:
        raise ValueError(f"unknown moment method {method!r}")
    if use_erf.any():
        i = use_erf
        n0[i], c1[i], c2[i] = _erf_normalized(mu[i], sigma[i], blo[i], bhi[i])
        if method == "hybrid":
            i = np.flatnonzero(use_erf)
            good = _erf_well_conditioned(mu[i], sigma[i], blo[i], bhi[i], n0[i], c1[i], c2[i], tol)
            use_erf[i[~good]] = False
    if (~use_erf).any():
        i = ~use_erf
        n0[i], c1[i], c2[i] = _quadrature_normalized(mu[i], sigma[i], blo[i], bhi[i], tol, cutoff)
    return tuple(x.reshape(shape) for x in (log_scale, p, n0, c1, c2))


def unit_mass(a0, sigma, **kw):
    """``C* = integral_0^1 G(a; 1, a0, sigma) da`` (vectorized, hybrid by default)."""
    ls, _, n0, _, _ = unit_interval_moments(a0, sigma, **kw)
    return np.exp(ls) * n0


def forward_stat(a0, sigma, **kw):
    """Scale-free forward map ``(a0, sigma) -> (E, V)`` on (0, 1) (vectorized).

    Uses the moments about the nearest interval point, so ``V`` keeps full
    relative precision for narrow and far-tail Gaussians.
    """
    _, p, n0, c1, c2 = unit_interval_moments(a0, sigma, **kw)
    d = c1 / n0
    return p + d, c2 / n0 - d * d


def _to_monomial(C, log_scale, p, n0, c1, c2):
    f = C * math.exp(float(log_scale))
    if f == 0.0:
        return MomentTriple.zero()
    p = float(p)
    n0, c1, c2 = float(n0), float(c1), float(c2)
    return MomentTriple(f * n0, f * (p * n0 + c1), f * (p * p * n0 + 2.0 * p * c1 + c2))


def interval_moments(g: Gaussian, lo: float, hi: float, *, method="hybrid", tol=DEFAULT_TOL,
                     band=SAFE_BAND) -> MomentTriple:
    """Monomial moments ``integral_lo^hi a^k g(a) da`` for ``k = 0, 1, 2``."""
    if not hi >= lo:
        raise InvalidInterval(f"empty interval [{lo}, {hi}]")
    if g.C == 0.0 or hi == lo:
        return MomentTriple.zero()
    return _to_monomial(g.C, *unit_interval_moments(g.a0, g.sigma, lo, hi, method=method, tol=tol, band=band))


def in_safe_band(g: Gaussian, lo: float = 0.0, hi: float = 1.0, band: float = SAFE_BAND) -> bool:
    return bool(_in_band(np.float64(g.a0), np.float64(g.sigma), lo, hi, band))


def moments_erf(g: Gaussian, band: float = SAFE_BAND) -> MomentTriple:
    """Closed-form moments on (0, 1); raises :class:`OutOfSafeBand` outside ``|x| <= band``."""
    if not in_safe_band(g, band=band):
        raise OutOfSafeBand(
            f"erf arguments out of band for a0={g.a0}, sigma={g.sigma}; use quadrature"
        )
    return interval_moments(g, 0.0, 1.0, method="erf")


def moments_quadrature(g: Gaussian, tol: float = DEFAULT_TOL) -> MomentTriple:
    if not tol > 0.0:
        raise ValueError("quadrature tolerance must be positive")
    return interval_moments(g, 0.0, 1.0, method="quadrature", tol=tol)


def moments_hybrid(g: Gaussian, tol: float = DEFAULT_TOL, band: float = SAFE_BAND) -> MomentTriple:
    return interval_moments(g, 0.0, 1.0, method="hybrid", tol=tol, band=band)


def partial_moments(g: Gaussian, da: float, **kw) -> MomentTriple:
    """Moments of the trailing piece ``[1 - da, 1]`` in the shifted coordinate.

    ``M_k = integral_0^da a^k g(1 - da + a) da``; this is the mass (and its
    first two moments) that crosses ``a = 1`` when the profile is advected by
    ``da``.
    """
    if not (0.0 < da <= 1.0):
        raise InvalidInterval(f"trailing length must lie in (0, 1], got {da}")
    shifted = Gaussian(g.C, g.a0 - (1.0 - da), g.sigma)
    return interval_moments(shifted, 0.0, da, **kw)


def segment_integrals(a0: float, sigma: float, lo, hi):
    """Unit-amplitude Gaussian integrals over ``[lo, hi]`` scaled by ``exp(-ls)``.

    ``ls`` is the log of the Gaussian at the segment point nearest ``a0``;
    the end values ``G(lo), G(hi)`` are returned on the same scale.  Segments
    entirely in one tail use ``erfcx`` so that nothing underflows or cancels.
    """
    lo, hi = np.atleast_1d(np.asarray(lo, dtype=float)), np.atleast_1d(np.asarray(hi, dtype=float))
    r = math.sqrt(2.0) * sigma
    d = a0 - np.clip(a0, lo, hi)
    ls = -(d * d) / (r * r)
    xlo, xhi = (lo - a0) / r, (hi - a0) / r
    glo = np.exp(-xlo * xlo - ls)
    ghi = np.exp(-xhi * xhi - ls)
    n0 = np.empty_like(lo)
    inside = d == 0.0
    n0[inside] = 0.5 * math.sqrt(math.pi) * r * (erf(xhi[inside]) - erf(xlo[inside]))
    right = d > 0.0  # center beyond hi: integrate the left tail from -xhi to -xlo
    for mask, near, far in ((right, -xhi, -xlo), (d < 0.0, xlo, xhi)):
        if mask.any():
            a, b = near[mask], far[mask]
            n0[mask] = 0.5 * math.sqrt(math.pi) * r * (erfcx(a) - np.exp(a * a - b * b) * erfcx(b))
    return ls, n0, glo, ghi
