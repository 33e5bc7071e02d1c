"""Backward map ``(E, V) -> (a0, sigma, C*)`` as a precomputed lookup table.

The forward map is sampled on an uneven ``(a0, sigma)`` grid covering
``a0 >= 1/2``; the mirrored half follows from ``a -> 1 - a``.  For every row
``E_i`` of a uniform mean grid the level set ``E(a0, sigma) = E_i`` is traced
through the samples (one point per sigma row, plus its exit through the edge
``a0 = 1 + c sigma``) and the per-row variance nodes are filled by linear
interpolation along that curve.  ``C*`` is always computed directly for the
final ``(a0, sigma)`` so that recovery rescales to the exact mass.
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import os
import struct
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import CorruptTable, FormatVersionMismatch, InsufficientSamples, IoFailure
from .gaussian_moments import Gaussian, MomentTriple, forward_stat, unit_interval_moments, unit_mass
from .realizability import FeasibleSet, feasible_set_from_domain, project_stat

log = logging.getLogger(__name__)

FORMAT_MAGIC = b"NMLT"
FORMAT_VERSION = 1


@dataclass(frozen=True)
class SampleDomainSpec:
    """Parameter set ``D`` and the forward-sample resolution on it."""

    sigma_min: float = 1e-4
    sigma_max: float = 1e2
    refine_lo: float = 1e-2
    refine_hi: float = 1.0
    n_sigma_outside: int = 60
    n_sigma_inside: int = 120
    c: float = 20.0
    n_a0_uniform: int = 100
    n_a0_edge: int = 200
    z_min: float = -12.0

    def __post_init__(self):
        if not 0.0 < self.sigma_min < self.refine_lo < self.refine_hi < self.sigma_max:
            raise ValueError("need 0 < sigma_min < refine_lo < refine_hi < sigma_max")
        if self.c <= 0.0:
            raise ValueError("extension factor c must be positive")
        if min(self.n_sigma_outside, self.n_sigma_inside, self.n_a0_uniform, self.n_a0_edge) < 2:
            raise ValueError("sample counts must be at least 2")

    def sigma_values(self) -> np.ndarray:
        """Log-spaced widths, denser inside ``[refine_lo, refine_hi]``."""
        l0, l1, l2, l3 = (math.log10(x) for x in (self.sigma_min, self.refine_lo, self.refine_hi, self.sigma_max))
        outside = (l1 - l0) + (l3 - l2)
        n_lo = max(2, round(self.n_sigma_outside * (l1 - l0) / outside))
        n_hi = max(2, self.n_sigma_outside - n_lo)
        lo = np.logspace(l0, l1, n_lo + 1)[:-1]
        mid = np.logspace(l1, l2, self.n_sigma_inside)
        hi = np.logspace(l2, l3, n_hi + 1)[1:]
        s = np.concatenate([lo, mid, hi])
        s[0], s[-1] = self.sigma_min, self.sigma_max
        return s

    def a0_values(self, sigma: float) -> np.ndarray:
        """Centers in ``[1/2, 1 + c sigma]``: uniform, plus a dense band near ``a = 1``."""
        top = 1.0 + self.c * sigma
        uniform = np.linspace(0.5, top, self.n_a0_uniform)
        z = np.linspace(max(self.z_min, -0.5 / sigma), self.c, self.n_a0_edge)
        a0 = np.unique(np.concatenate([uniform, 1.0 + sigma * z]))
        a0 = a0[(a0 >= 0.5) & (a0 <= top)]
        a0[0], a0[-1] = 0.5, top
        return a0


@dataclass(frozen=True)
class ForwardSamples:
    """Forward map on the sample grid; row ``k`` holds all centers for ``sigma[k]``."""

    spec: SampleDomainSpec
    sigma: np.ndarray
    a0: list
    E: list
    V: list
    cstar: list

    def records(self, reflect: bool = False) -> np.ndarray:
        """Flat ``(a0, sigma, E, V, C*)`` rows; ``reflect`` appends the mirrored half."""
        rows = np.concatenate([
            np.column_stack([a, np.full_like(a, s), e, v, c])
            for s, a, e, v, c in zip(self.sigma, self.a0, self.E, self.V, self.cstar)
        ])
        if reflect:
            mirror = rows.copy()
            mirror[:, 0] = 1.0 - mirror[:, 0]
            mirror[:, 2] = 1.0 - mirror[:, 2]
            rows = np.concatenate([rows, mirror])
        return rows


def build_forward_samples(spec: SampleDomainSpec = SampleDomainSpec()) -> ForwardSamples:
    sigma = spec.sigma_values()
    a0_rows = [spec.a0_values(s) for s in sigma]
    a0 = np.concatenate(a0_rows)
    sig = np.concatenate([np.full_like(a, s) for a, s in zip(a0_rows, sigma)])
    ls, p, n0, c1, c2 = unit_interval_moments(a0, sig)
    d = c1 / n0
    E = p + d
    V = c2 / n0 - d * d
    cstar = np.exp(ls) * n0
    split = np.cumsum([len(a) for a in a0_rows])[:-1]
    E_rows = np.split(E, split)
    # E(a0) is increasing along each row; repair last-ulp noise so interpolation is well posed
    E_rows = [np.maximum.accumulate(e) for e in E_rows]
    return ForwardSamples(spec, sigma, a0_rows, E_rows, np.split(V, split), np.split(cstar, split))


def v_nodes(v_lo: float, v_hi: float, n: int, ratio: float) -> np.ndarray:
    """``n`` nodes on ``[v_lo, v_hi]`` whose spacing grows by ``ratio`` away from both ends.

    Rows too narrow to resolve the end spacing in double precision (next to
    the corners of the feasible set) get a milder ratio, down to uniform.
    """
    k = np.arange(n - 1)
    while True:
        w = ratio ** np.minimum(k, n - 2 - k).astype(float)
        x = np.concatenate([[0.0], np.cumsum(w)])
        x /= x[-1]
        out = v_lo + (v_hi - v_lo) * x
        out[-1] = v_hi
        if ratio == 1.0 or np.all(np.diff(out) > 0.0):
            return out
        ratio = 1.0 + 0.5 * (ratio - 1.0) if ratio > 1.0 + 1e-6 else 1.0


def _e_grid(n: int, e_min: float, e_max: float) -> np.ndarray:
    e = np.linspace(e_min, e_max, n)
    half = n // 2
    e[:half] = 1.0 - e[n - half:][::-1]
    if n % 2:
        e[half] = 0.5
    return e


def _solve_row(Ek, a0k, sigma, E_target, iters):
    """Centers with ``E(a0, sigma) = E_target`` on one sigma row (bracketed regula falsi)."""
    j = np.clip(np.searchsorted(Ek, E_target) - 1, 0, len(Ek) - 2)
    a_lo, a_hi = a0k[j], a0k[j + 1]
    e_lo, e_hi = Ek[j], Ek[j + 1]
    s = np.full_like(E_target, sigma)
    for _ in range(iters):
        t = np.where(e_hi > e_lo, (E_target - e_lo) / np.where(e_hi > e_lo, e_hi - e_lo, 1.0), 0.5)
        a = a_lo + np.clip(t, 0.0, 1.0) * (a_hi - a_lo)
        e, _ = forward_stat(a, s)
        below = e < E_target
        a_lo = np.where(below, a, a_lo)
        e_lo = np.where(below, e, e_lo)
        a_hi = np.where(below, a_hi, a)
        e_hi = np.where(below, e_hi, e)
    t = np.where(e_hi > e_lo, (E_target - e_lo) / np.where(e_hi > e_lo, e_hi - e_lo, 1.0), 0.5)
    a = a_lo + np.clip(t, 0.0, 1.0) * (a_hi - a_lo)
    E, V = forward_stat(a, s)
    return a, E, V


def _edge_exit(E_target, c, lsig_lo, lsig_hi, iters=52):
    """Widths where the edge ``a0 = 1 + c sigma`` has mean ``E_target`` (E decreases with sigma there)."""
    lo, hi = np.array(lsig_lo, dtype=float), np.array(lsig_hi, dtype=float)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        s = np.exp(mid)
        e, _ = forward_stat(1.0 + c * s, s)
        above = e > E_target
        lo = np.where(above, mid, lo)
        hi = np.where(above, hi, mid)
    s = np.exp(0.5 * (lo + hi))
    E, V = forward_stat(1.0 + c * s, s)
    return 1.0 + c * s, s, E, V


@dataclass(frozen=True)
class TableConfig:
    n_e: int = 2000
    n_v: int = 400
    v_ratio: float = 1.1
    refine_iters: int = 2
    n_boundary: int = 16000

    def __post_init__(self):
        if self.n_e < 2 or self.n_v < 2:
            raise ValueError("table needs at least 2 rows and 2 nodes per row")
        if self.v_ratio < 1.0:
            raise ValueError("v_ratio must be >= 1")


@dataclass(frozen=True)
class LookupTable:
    """Uniform ``E`` rows; per row ``n_v`` variance nodes and their ``(a0, sigma, C*)``.

    Arrays ``v``, ``a0``, ``sigma`` and ``cstar`` have shape ``(n_e, n_v)``.
    """

    e_grid: np.ndarray
    v: np.ndarray
    a0: np.ndarray
    sigma: np.ndarray
    cstar: np.ndarray
    feasible: FeasibleSet
    meta: dict = field(default_factory=dict, compare=False)

    @property
    def shape(self) -> tuple[int, int]:
        return self.v.shape

    def row_index(self, E: float) -> int:
        e0 = self.e_grid[0]
        n = len(self.e_grid)
        de = (self.e_grid[-1] - e0) / (n - 1)
        i = int(round((E - e0) / de))
        return min(max(i, 0), n - 1)

    def node_index(self, i: int, V: float) -> int:
        row = self.v[i]
        j = int(np.searchsorted(row, V))
        if j <= 0:
            return 0
        if j >= len(row):
            return len(row) - 1
        return j if row[j] - V < V - row[j - 1] else j - 1

    def lookup(self, E: float, V: float) -> tuple[float, float, float]:
        """Nearest entry ``(a0, sigma, C*)`` for an already feasible pair."""
        i = self.row_index(E)
        j = self.node_index(i, V)
        return float(self.a0[i, j]), float(self.sigma[i, j]), float(self.cstar[i, j])

    def recover_params(self, m0: float, m1: float, m2: float,
                       refine: bool = False) -> tuple[float, float, float]:
        """``(C, a0, sigma)`` of the reconstructed Gaussian; ``C = 0`` for non-positive mass.

        With ``refine`` the nearest entry only seeds a Newton solve of the
        forward map for the projected ``(E, V)``, and ``C*`` is integrated
        for the polished parameters.
        """
        if not m0 > 0.0:
            return 0.0, 0.5, 1.0
        E = m1 / m0
        V = m2 / m0 - E * E
        E, V = project_stat(E, V, self.feasible)
        a0, sigma, cstar = self.lookup(E, V)
        if refine:
            fm = self.feasible.meta
            a0, sigma, _ = refine_entry(E, V, a0, sigma, fm.get("sigma_min", 1e-4),
                                        fm.get("sigma_max", 1e2), fm.get("c", 20.0))
            cstar = float(unit_mass(a0, sigma))
        return m0 / cstar, a0, sigma

    def recover(self, m: MomentTriple, refine: bool = False) -> Gaussian:
        return Gaussian(*self.recover_params(m.m0, m.m1, m.m2, refine))

    def digest(self) -> str:
        h = hashlib.sha256()
        for arr in self._arrays():
            h.update(np.ascontiguousarray(arr, dtype="<f8").tobytes())
        return h.hexdigest()

    def _arrays(self):
        fs = self.feasible
        return [self.e_grid, self.v, self.a0, self.sigma, self.cstar,
                fs.lower_E, fs.lower_V, fs.upper_E, fs.upper_V]


def refine_entry(E: float, V: float, a0: float, sigma: float, sigma_min: float, sigma_max: float,
                 c: float, tol: float = 1e-11, max_iter: int = 20) -> tuple[float, float, bool]:
    """Polish ``(a0, sigma)`` so that its forward image is ``(E, V)``.

    Damped Newton in ``(a0, log sigma)`` on the residual
    ``((E' - E) / sqrt(V), log(V' / V))`` with a finite-difference Jacobian,
    kept inside ``D`` and its mirror.  Returns the best iterate and whether
    the residual fell below ``tol``.
    """
    flip = E < 0.5
    if flip:
        E, a0 = 1.0 - E, 1.0 - a0
    sd = math.sqrt(V)
    ls_lo, ls_hi = math.log(sigma_min), math.log(sigma_max)

    def clamp(x, y):
        y = min(max(y, ls_lo), ls_hi)
        s = math.exp(y)
        return min(max(x, -c * s), 1.0 + c * s), y

    def residual(x, y):
        e, v = forward_stat(np.array([x]), np.array([math.exp(y)]))
        return np.array([(e[0] - E) / sd, math.log(v[0] / V)])

    x, y = clamp(a0, math.log(sigma))
    r = residual(x, y)
    norm = float(np.max(np.abs(r)))
    for _ in range(max_iter):
        if norm < tol:
            break
        s = math.exp(y)
        hx, hy = 1e-7 * s, 1e-7
        e, v = forward_stat(np.array([x + hx, x]), np.array([s, math.exp(y + hy)]))
        J = np.column_stack([
            (np.array([(e[0] - E) / sd, math.log(v[0] / V)]) - r) / hx,
            (np.array([(e[1] - E) / sd, math.log(v[1] / V)]) - r) / hy,
        ])
        try:
            dx, dy = np.linalg.solve(J, -r)
        except np.linalg.LinAlgError:
            break
        lam = 1.0
        for _ in range(8):
            xn, yn = clamp(x + lam * dx, y + lam * dy)
            rn = residual(xn, yn)
            nn = float(np.max(np.abs(rn)))
            if nn < norm:
                break
            lam *= 0.5
        else:
            break
        x, y, r, norm = xn, yn, rn, nn
    a0 = 1.0 - x if flip else x
    return a0, math.exp(y), norm < tol


def recover(table: LookupTable, m: MomentTriple, fs: FeasibleSet | None = None) -> Gaussian:
    """Gaussian with mass exactly ``m.m0`` whose ``(E, V)`` is the nearest table entry.

    The moments are first projected into the feasible set (``fs`` defaults to
    the one stored with the table).
    """
    if fs is None or fs is table.feasible:
        return table.recover(m)
    if not m.m0 > 0.0:
        return Gaussian(0.0, 0.5, 1.0)
    E = m.m1 / m.m0
    V = m.m2 / m.m0 - E * E
    a0, sigma, cstar = table.lookup(*project_stat(E, V, fs))
    return Gaussian(m.m0 / cstar, a0, sigma)


def build_table(samples: ForwardSamples, config: TableConfig = TableConfig(),
                feasible: FeasibleSet | None = None) -> LookupTable:
    """Fill the table by interpolating along level sets of ``E`` through the samples."""
    spec = samples.spec
    fs = feasible or feasible_set_from_domain(spec.sigma_min, spec.sigma_max, spec.c, config.n_boundary)
    e_grid = _e_grid(config.n_e, fs.E_min, fs.E_max)
    half = config.n_e // 2
    e_up = e_grid[half:]  # rows with E >= 1/2; the rest are mirrors
    n_up = len(e_up)
    sig = samples.sigma
    n_s = len(sig)

    # one level-set point per (row, sigma) where the sigma row reaches E
    pa = np.full((n_up, n_s), np.nan)
    pv = np.full((n_up, n_s), np.nan)
    for k in range(n_s):
        Ek, a0k = samples.E[k], samples.a0[k]
        ok = (e_up >= Ek[0]) & (e_up <= Ek[-1])
        if not ok.any():
            continue
        a, _, v = _solve_row(Ek, a0k, sig[k], e_up[ok], config.refine_iters)
        pa[ok, k] = a
        pv[ok, k] = v
    reach = np.isfinite(pa)
    if not reach[:, 0].all():
        raise InsufficientSamples("the smallest-width sample row does not span every table row")
    # rows reach a contiguous prefix of sigma rows; the rest exits through a0 = 1 + c sigma
    n_reach = reach.sum(axis=1)
    if np.any(reach != (np.arange(n_s)[None, :] < n_reach[:, None])):
        raise InsufficientSamples("level sets of E do not cover a contiguous range of widths")
    exits = n_reach < n_s
    ex = np.flatnonzero(exits)
    lsig = np.log(sig)
    xa, xs, _, xv = _edge_exit(e_up[ex], spec.c, lsig[n_reach[ex] - 1], lsig[n_reach[ex]])

    n_v = config.n_v
    V = np.empty((n_up, n_v))
    A = np.empty((n_up, n_v))
    S = np.empty((n_up, n_v))
    v_lo = fs.v_min_array(e_up)
    v_hi = fs.v_max_array(e_up)
    exit_pos = {int(r): q for q, r in enumerate(ex)}
    for i in range(n_up):
        k = n_reach[i]
        ca, cs, cv = pa[i, :k], sig[:k], pv[i, :k]
        if i in exit_pos:
            q = exit_pos[i]
            ca = np.append(ca, xa[q])
            cs = np.append(cs, xs[q])
            cv = np.append(cv, xv[q])
        x = np.log(np.maximum.accumulate(cv))
        nodes = v_nodes(v_lo[i], v_hi[i], n_v, config.v_ratio)
        xn = np.log(nodes)
        V[i] = nodes
        # a0 - 1/2 grows like sigma^2 along wide level sets; log-log keeps them straight
        A[i] = 0.5 + np.exp(np.interp(xn, x, np.log(ca - 0.5)))
        S[i] = np.exp(np.interp(xn, x, np.log(cs)))
    # keep entries inside D despite interpolation of the exit segment
    S = np.clip(S, spec.sigma_min, spec.sigma_max)
    A = np.clip(A, 0.5, 1.0 + spec.c * S)
    ls, _, n0, _, _ = unit_interval_moments(A.ravel(), S.ravel())
    C = (np.exp(ls) * n0).reshape(A.shape)

    v_full = np.concatenate([V[n_up - half:][::-1], V]) if half else V
    a_full = np.concatenate([1.0 - A[n_up - half:][::-1], A]) if half else A
    s_full = np.concatenate([S[n_up - half:][::-1], S]) if half else S
    c_full = np.concatenate([C[n_up - half:][::-1], C]) if half else C
    meta = {
        "format_version": FORMAT_VERSION,
        "sample_spec": asdict(spec),
        "config": asdict(config),
        "E_min": fs.E_min,
        "E_max": fs.E_max,
    }
    return LookupTable(e_grid, v_full, a_full, s_full, c_full, fs, meta)


def round_trip_report(table: LookupTable) -> dict:
    """Forward-map every entry and compare with its node's ``(E, V)``.

    Errors are reported absolutely for ``E``, relative for ``V`` and as the
    implied relative error in ``sigma = sqrt(V)``; ``max_cell_ratio`` is the
    largest ``(E, V)`` distance in units of the local cell diameter.
    """
    E, V = forward_stat(table.a0.ravel(), table.sigma.ravel())
    E = E.reshape(table.shape)
    V = V.reshape(table.shape)
    de = float(table.e_grid[1] - table.e_grid[0])
    err_e = np.abs(E - table.e_grid[:, None])
    err_v = np.abs(V - table.v)
    rel_v = err_v / table.v
    ratio = np.hypot(err_e, err_v) / np.hypot(de, _node_spans(table.v))
    return {
        "E_min": table.feasible.E_min,
        "E_max": table.feasible.E_max,
        "delta_E": de,
        "max_abs_E_error": float(err_e.max()),
        "max_rel_V_error": float(rel_v.max()),
        "p99_rel_V_error": float(np.percentile(rel_v, 99)),
        "max_rel_sigma_error": float(np.max(np.abs(np.sqrt(V / table.v) - 1.0))),
        "max_cell_ratio": float(ratio.max()),
    }


def _node_spans(v: np.ndarray) -> np.ndarray:
    # V extent of each node's nearest-neighbor interval (midpoint to midpoint)
    mid = 0.5 * (v[..., 1:] + v[..., :-1])
    lo = np.concatenate([v[..., :1], mid], axis=-1)
    hi = np.concatenate([mid, v[..., -1:]], axis=-1)
    return hi - lo


def local_cell_diameter(table: LookupTable, E: float, V: float) -> float:
    """Diameter ``hypot(dE, dV)`` of the nearest-neighbor cell serving ``(E, V)``."""
    i = table.row_index(E)
    j = table.node_index(i, V)
    de = float(table.e_grid[1] - table.e_grid[0])
    return float(math.hypot(de, _node_spans(table.v[i])[j]))


def nearest_cell_error(table: LookupTable, E: float, V: float) -> tuple[float, float]:
    """Half-diameters ``(dE, dV)`` of the nearest-neighbor cell containing ``(E, V)``."""
    i = table.row_index(E)
    j = table.node_index(i, V)
    half_e = 0.5 * float(table.e_grid[1] - table.e_grid[0])
    return half_e, 0.5 * float(_node_spans(table.v[i])[j])


def random_interior_pairs(fs: FeasibleSet, n: int, seed: int = 0, margin: float = 0.02) -> np.ndarray:
    """``(E, V)`` pairs strictly inside the feasible set: ``E`` uniform, ``V`` log-uniform."""
    rng = np.random.default_rng(seed)
    E = rng.uniform(fs.E_min + margin, fs.E_max - margin, n)
    lo, hi = np.log(fs.v_min_array(E)), np.log(fs.v_max_array(E))
    u = rng.uniform(margin, 1.0 - margin, n)
    return np.stack([E, np.exp(lo + u * (hi - lo))], axis=1)


def recovery_round_trip(table: LookupTable, n: int = 1000, seed: int = 0) -> dict:
    """Pairs -> project -> nearest recovery -> forward, in units of the local cell diameter.

    ``rel_sigma`` compares the recovered width with the exact parameters of
    each pair (found by Newton polishing from the same entry); this is the
    reconstruction accuracy of nearest-neighbor recovery.
    """
    fs = table.feasible
    meta = fs.meta
    pairs = random_interior_pairs(fs, n, seed)
    ratio = np.empty(n)
    rel_sigma = np.empty(n)
    for k, (E, V) in enumerate(pairs):
        PE, PV = project_stat(E, V, fs)
        a0, s, _ = table.lookup(PE, PV)
        E2, V2 = forward_stat(a0, s)
        ratio[k] = math.hypot(float(E2) - E, float(V2) - V) / local_cell_diameter(table, PE, PV)
        _, s_true, ok = refine_entry(PE, PV, a0, s, meta.get("sigma_min", 1e-4), meta.get("sigma_max", 1e2),
                                     meta.get("c", 20.0))
        rel_sigma[k] = abs(s / s_true - 1.0) if ok else math.nan
    return {
        "n": n,
        "max_cell_ratio": float(ratio.max()),
        "p99_cell_ratio": float(np.percentile(ratio, 99)),
        "max_rel_sigma_error": float(np.nanmax(rel_sigma)),
        "p99_rel_sigma_error": float(np.nanpercentile(rel_sigma, 99)),
        "n_unpolished": int(np.isnan(rel_sigma).sum()),
    }


def build_default_table(spec: SampleDomainSpec = SampleDomainSpec(),
                        config: TableConfig = TableConfig()) -> LookupTable:
    return build_table(build_forward_samples(spec), config)


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------

_NAMES = ("e_grid", "v", "a0", "sigma", "cstar", "lower_E", "lower_V", "upper_E", "upper_V")


def _encode(table: LookupTable) -> bytes:
    arrays = table._arrays()
    fs = table.feasible
    header = {
        "arrays": [[name, list(np.shape(a))] for name, a in zip(_NAMES, arrays)],
        "E_min": fs.E_min,
        "E_max": fs.E_max,
        "feasible_meta": fs.meta,
        "meta": table.meta,
    }
    hbytes = json.dumps(header, sort_keys=True).encode()
    body = [FORMAT_MAGIC, struct.pack("<II", FORMAT_VERSION, len(hbytes)), hbytes]
    body += [np.ascontiguousarray(a, dtype="<f8").tobytes() for a in arrays]
    payload = b"".join(body)
    return payload + hashlib.sha256(payload).digest()


def save(table: LookupTable, path) -> None:
    """Write the binary table and a JSON sidecar ``<path>.json`` with its metadata."""
    path = os.fspath(path)
    data = _encode(table)
    sidecar = dict(table.meta, sha256=hashlib.sha256(data).hexdigest(), shape=list(table.shape))
    try:
        with open(path, "wb") as fh:
            fh.write(data)
        with open(path + ".json", "w") as fh:
            json.dump(sidecar, fh, indent=2, sort_keys=True)
            fh.write("\n")
    except OSError as exc:
        raise IoFailure(f"cannot write table to {path}: {exc}") from exc


def file_digest(path) -> str:
    try:
        with open(os.fspath(path), "rb") as fh:
            return hashlib.sha256(fh.read()).hexdigest()
    except OSError as exc:
        raise IoFailure(f"cannot read {path}: {exc}") from exc


def _validate(table: LookupTable) -> None:
    fs = table.feasible
    e = table.e_grid
    n_e, n_v = table.shape
    if e.ndim != 1 or len(e) != n_e or n_e < 2:
        raise CorruptTable("inconsistent table shapes")
    for arr in (table.a0, table.sigma, table.cstar):
        if arr.shape != (n_e, n_v) or not np.all(np.isfinite(arr)):
            raise CorruptTable("entry arrays malformed")
    if not np.all(np.diff(e) > 0.0) or not np.all(np.diff(table.v, axis=1) > 0.0):
        raise CorruptTable("grids are not strictly increasing")
    if not (np.all(table.sigma > 0.0) and np.all(table.cstar > 0.0) and np.all(table.v > 0.0)):
        raise CorruptTable("nonpositive widths, variances or unit masses")
    if not (0.0 < fs.E_min < 0.5 < fs.E_max < 1.0):
        raise CorruptTable("feasible mean bounds out of range")


def load(path) -> LookupTable:
    path = os.fspath(path)
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise IoFailure(f"cannot read table {path}: {exc}") from exc
    if len(data) < 12 + 32 or data[:4] != FORMAT_MAGIC:
        raise CorruptTable(f"{path} is not a lookup table file")
    version, hlen = struct.unpack("<II", data[4:12])
    if version != FORMAT_VERSION:
        raise FormatVersionMismatch(f"table format version {version}, expected {FORMAT_VERSION}")
    payload, digest = data[:-32], data[-32:]
    try:
        header = json.loads(data[12:12 + hlen])
        shapes = [tuple(s) for _, s in header["arrays"]]
    except (ValueError, KeyError, TypeError) as exc:
        raise CorruptTable(f"unreadable table header: {exc}") from exc
    need = 12 + hlen + 8 * sum(int(np.prod(s)) for s in shapes)
    if len(payload) != need:
        raise CorruptTable(f"table file has {len(payload)} payload bytes, expected {need}")
    if hashlib.sha256(payload).digest() != digest:
        raise CorruptTable("table checksum mismatch")
    arrays = []
    offset = 12 + hlen
    for shape in shapes:
        n = int(np.prod(shape))
        arrays.append(np.frombuffer(payload, dtype="<f8", count=n, offset=offset).astype(float).reshape(shape))
        offset += 8 * n
    e_grid, v, a0, sigma, cstar, lE, lV, uE, uV = arrays
    fs = FeasibleSet(header["E_min"], header["E_max"], lE, lV, uE, uV, header.get("feasible_meta", {}))
    table = LookupTable(e_grid, v, a0, sigma, cstar, fs, header.get("meta", {}))
    _validate(table)
    return table
