"""Four-stage spotted-lanternfly life-cycle model on the domain network.

Stages: ``1`` non-diapause eggs, ``2`` diapause eggs, ``3`` post-diapause eggs,
``4`` motiles.  Edges ``1->4``, ``2->3`` and ``3->4`` carry the developmental
outflux; new eggs enter through a source hook that integrates the egg-laying
kernel against the motile density and routes the result to stage 1 or 2 by
the photoperiod indicator.  Time is in years with ``t = 0`` on April 1.
"""

from __future__ import annotations

import concurrent.futures as cf
import csv
import json
import math
from dataclasses import dataclass, field, replace
from typing import Mapping, Sequence

import numpy as np

from .errors import ConfigError, ExtinctPopulation, IoFailure, MomentError
from .gaussian_moments import Gaussian, MomentTriple, StatMoments, monomial_from_stat, segment_integrals
from .lookup_table import LookupTable
from .moment_ode import OdeRunConfig, Trajectory
from .network import CoefficientSampler, Edge, NetworkSpec, PiecewiseLinear, read_json

STAGES = ("1", "2", "3", "4")
CATEGORIES = ("rapid-decay", "decay", "establishment-edge", "growth", "rapid-growth")
_CUTS = (0.2, 0.5, 2.0, 5.0)

INITIAL_EGGS = 1000.0
INITIAL_STAT = (0.04975, 0.0475)


# ---------------------------------------------------------------------------
# temperature and photoperiod
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TemperatureProfile:
    """``T(t) = g sin(2 pi t) + h`` in degrees Celsius, or a tabulated series.

    A table ``(t, T)`` covering one year is repeated periodically.
    """

    g: float = 0.0
    h: float = 0.0
    table: tuple | None = None

    def __call__(self, t: float) -> float:
        return temperature(self, t)


def temperature(p: TemperatureProfile, t: float) -> float:
    if p.table is not None:
        ts, Ts = p.table
        return float(np.interp(t % 1.0, ts, Ts, period=1.0))
    return p.g * math.sin(2.0 * math.pi * t) + p.h


def indicator(t: float, solstices: tuple[float, float]) -> int:
    """``0`` between summer and winter solstice (eggs enter diapause), else ``1``."""
    t_ss, t_ws = solstices
    return 0 if t_ss <= t % 1.0 < t_ws else 1


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class StageResponse:
    """Temperature responses of one stage: ``nu(T)`` and ``mu(T)`` tables, constant ``xi / nu``."""

    T: tuple
    nu: tuple
    mu: tuple
    xi_over_nu: float = 0.0

    def __post_init__(self):
        if not (len(self.T) == len(self.nu) == len(self.mu)) or len(self.T) == 0:
            raise ConfigError("stage response tables need equal, nonempty T, nu and mu lists")
        if any(b <= a for a, b in zip(self.T, self.T[1:])):
            raise ConfigError("stage response temperatures must be strictly increasing")
        if min(self.nu) < 0.0 or min(self.mu) < 0.0 or self.xi_over_nu < 0.0:
            raise ConfigError("stage responses must be nonnegative")

    def sampler(self, profile: TemperatureProfile) -> CoefficientSampler:
        nu_T = PiecewiseLinear(self.T, self.nu)
        mu_T = PiecewiseLinear(self.T, self.mu)
        r = self.xi_over_nu
        return _TemperatureSampler(
            lambda t: nu_T(profile(t)),
            lambda t: r * nu_T(profile(t)),
            lambda t: mu_T(profile(t)),
            profile, nu_T, mu_T, r,
        )


@dataclass(frozen=True)
class _TemperatureSampler(CoefficientSampler):
    """Coefficients composed with a temperature profile; ``at`` evaluates ``T`` once."""

    profile: TemperatureProfile = None
    nu_T: PiecewiseLinear = None
    mu_T: PiecewiseLinear = None
    ratio: float = 0.0

    def at(self, t: float) -> tuple[float, float, float]:
        T = self.profile(t)
        nu = self.nu_T(T)
        return nu, self.ratio * nu, self.mu_T(T)


@dataclass(frozen=True)
class Kernel:
    """Piecewise-linear egg-laying rate ``k(a)`` on [0, 1]."""

    a: tuple
    k: tuple

    def __post_init__(self):
        if len(self.a) != len(self.k) or len(self.a) < 2:
            raise ConfigError("kernel needs matching a and k lists with at least two knots")
        if self.a[0] != 0.0 or self.a[-1] != 1.0 or any(b <= a for a, b in zip(self.a, self.a[1:])):
            raise ConfigError("kernel knots must increase strictly from 0 to 1")
        if min(self.k) < 0.0:
            raise ConfigError("kernel values must be nonnegative")
        a, k = np.asarray(self.a), np.asarray(self.k)
        q = np.diff(k) / np.diff(a)
        p = k[:-1] - q * a[:-1]
        live = (p != 0.0) | (q != 0.0)
        object.__setattr__(self, "_seg", (a[:-1][live], a[1:][live], p[live], q[live]))

    @property
    def total(self) -> float:
        """Lifetime eggs per female, ``integral_0^1 k``."""
        a, k = np.asarray(self.a), np.asarray(self.k)
        return float(np.sum(0.5 * (k[1:] + k[:-1]) * np.diff(a)))

    def __call__(self, a):
        return np.interp(a, self.a, self.k)

    def integrate_gaussian(self, g: Gaussian) -> float:
        """``integral_0^1 k(a) g(a) da``, in closed form per linear kernel segment."""
        if g.C == 0.0:
            return 0.0
        # k = p + q a on [lo, hi]; segments with k = 0 are dropped at construction
        lo, hi, p, q = self._seg
        if lo.size == 0:
            return 0.0
        ls, n0, glo, ghi = segment_integrals(g.a0, g.sigma, lo, hi)
        # (p + q a) = (p + q a0) + q (a - a0), and integral (a - a0) G = -sigma^2 [G]
        s2 = g.sigma * g.sigma
        part = (p + q * g.a0) * n0 - q * s2 * (ghi - glo)
        top = ls.max()
        return float(g.C * math.exp(top) * np.sum(np.exp(ls - top) * part))

    def integrate_cells(self, values: np.ndarray) -> float:
        """``integral_0^1 k(a) rho(a) da`` for cell averages on a uniform grid (exact)."""
        n = values.size
        edges = np.linspace(0.0, 1.0, n + 1)
        a, k = np.asarray(self.a), np.asarray(self.k)
        cum = np.concatenate([[0.0], np.cumsum(0.5 * (k[1:] + k[:-1]) * np.diff(a))])
        # antiderivative of the piecewise-linear kernel at the cell edges
        j = np.clip(np.searchsorted(a, edges, side="right") - 1, 0, a.size - 2)
        x = edges - a[j]
        slope = (k[j + 1] - k[j]) / (a[j + 1] - a[j])
        K = cum[j] + k[j] * x + 0.5 * slope * x * x
        return float(np.dot(values, np.diff(K)))


@dataclass(frozen=True)
class RunSettings:
    """Per-point simulation settings used by :func:`run_point` and :func:`sweep`."""

    years: float = 4.0
    dt: float = 1.0e-3
    skip_years: float = 1.0
    avg_years: float = 2.0
    spacing: float = 0.05
    fv_cells: int = 500


@dataclass(frozen=True)
class SLFConfig:
    responses: Mapping[str, StageResponse]
    kernel: Kernel
    beta: float = 1.0
    solstices: tuple = (0.2247, 0.7260)
    run: RunSettings = field(default_factory=RunSettings)

    def __post_init__(self):
        if set(self.responses) != set(STAGES):
            raise ConfigError(f"responses must cover stages {STAGES}")
        if not 0.0 <= self.beta <= 1.0:
            raise ConfigError("beta must lie in [0, 1]")
        t_ss, t_ws = self.solstices
        if not 0.0 <= t_ss < t_ws <= 1.0:
            raise ConfigError("solstices must satisfy 0 <= t_ss < t_ws <= 1")


def synthetic_config() -> SLFConfig:
    """Illustrative coefficients with a diapause-synchronized life cycle.

    Not a calibration.  Diapause eggs (stage 2) develop fastest in the cold, so
    warmth suppresses their advection speed; stages 2 and 3 tolerate frost,
    while stages 1 and 4 die quickly below freezing.  Motiles lay eggs late in
    their development.  Rates are per year.
    """
    frost = (-30.0, -10.0, 0.0, 5.0, 30.0, 35.0, 45.0)
    return SLFConfig(
        responses={
            "1": StageResponse(frost, (0.0, 0.0, 0.0, 0.0, 10.0, 10.0, 0.0),
                               (30.0, 15.0, 3.0, 0.2, 0.2, 1.0, 20.0), 0.002),
            "2": StageResponse((-30.0, -10.0, 0.0, 10.0, 20.0, 40.0), (1.0, 2.5, 3.0, 2.0, 0.5, 0.2),
                               (3.0, 0.5, 0.1, 0.1, 0.1, 3.0), 0.002),
            "3": StageResponse(frost, (0.0, 0.0, 0.0, 0.0, 10.0, 10.0, 0.0),
                               (3.0, 0.5, 0.1, 0.1, 0.2, 1.0, 20.0), 0.002),
            "4": StageResponse((-30.0, -5.0, 8.0, 30.0, 40.0), (0.0, 0.0, 0.0, 8.0, 8.0),
                               (60.0, 20.0, 0.5, 0.5, 10.0), 0.002),
        },
        kernel=Kernel((0.0, 0.6, 0.8, 1.0), (0.0, 0.0, 200.0, 100.0)),
        beta=0.2,
    )


def _floats(x, name):
    try:
        return tuple(float(v) for v in x)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{name} must be a list of numbers") from exc


def config_from_dict(doc: Mapping) -> SLFConfig:
    try:
        resp = {
            str(s): StageResponse(_floats(r["T"], "T"), _floats(r["nu"], "nu"), _floats(r["mu"], "mu"),
                                  float(r.get("xi_over_nu", 0.0)))
            for s, r in doc["responses"].items()
        }
        kern = Kernel(_floats(doc["kernel"]["a"], "kernel a"), _floats(doc["kernel"]["k"], "kernel k"))
        run = RunSettings(**doc.get("run", {}))
        cfg = SLFConfig(resp, kern, float(doc.get("beta", 1.0)),
                        _floats(doc.get("solstices", (0.2247, 0.7260)), "solstices"), run)
    except (KeyError, TypeError, AttributeError) as exc:
        raise ConfigError(f"malformed lanternfly config: {exc}") from exc
    stored = doc["kernel"].get("total")
    if stored is not None and abs(float(stored) - kern.total) > 1e-9 * max(1.0, kern.total):
        raise ConfigError(f"kernel total {stored} does not match the integral of the table ({kern.total})")
    return cfg


def config_to_dict(cfg: SLFConfig) -> dict:
    return {
        "responses": {s: {"T": list(r.T), "nu": list(r.nu), "mu": list(r.mu), "xi_over_nu": r.xi_over_nu}
                      for s, r in cfg.responses.items()},
        "kernel": {"a": list(cfg.kernel.a), "k": list(cfg.kernel.k), "total": cfg.kernel.total},
        "beta": cfg.beta,
        "solstices": list(cfg.solstices),
        "run": cfg.run.__dict__.copy(),
    }


def load_config(path) -> SLFConfig:
    return config_from_dict(read_json(path))


def save_config(cfg: SLFConfig, path) -> None:
    try:
        with open(path, "w") as fh:
            json.dump(config_to_dict(cfg), fh, indent=2)
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


# ---------------------------------------------------------------------------
# egg laying and network assembly
# ---------------------------------------------------------------------------


def egg_flux(profile4, nu4: float, cfg: SLFConfig) -> float:
    """``beta nu4 integral k rho4`` for a Gaussian or grid density of the motiles."""
    if nu4 == 0.0 or cfg.beta == 0.0 or profile4 is None:
        return 0.0
    if isinstance(profile4, Gaussian):
        return cfg.beta * nu4 * cfg.kernel.integrate_gaussian(profile4)
    values = getattr(profile4, "values", None)
    if values is None:
        raise TypeError(f"unsupported density type {type(profile4).__name__}")
    return cfg.beta * nu4 * cfg.kernel.integrate_cells(np.asarray(values))


class EggHook:
    """Source hook sending ``F_eggs I(t)`` to stage 1 and ``F_eggs (1 - I(t))`` to stage 2."""

    def __init__(self, cfg: SLFConfig, nu4):
        self.cfg = cfg
        self.nu4 = nu4

    def split(self, t: float, F: float) -> dict:
        I = indicator(t, self.cfg.solstices)
        return {"1": F * I, "2": F * (1 - I)}

    def __call__(self, t, moments, profiles) -> dict:
        if moments["4"].m0 <= 0.0:
            return {"1": 0.0, "2": 0.0}
        return self.split(t, egg_flux(profiles["4"], self.nu4(t), self.cfg))


def build_network(cfg: SLFConfig, profile: TemperatureProfile) -> NetworkSpec:
    vertices = {s: cfg.responses[s].sampler(profile) for s in STAGES}
    edges = (Edge("1", "4"), Edge("2", "3"), Edge("3", "4"))
    return NetworkSpec(vertices, edges, conservative=True,
                       source_hook=EggHook(cfg, vertices["4"].nu))


def initial_moments(table: LookupTable, eggs: float = INITIAL_EGGS) -> dict:
    """``eggs`` diapause eggs with the default statistics, projected into the table's feasible set."""
    from .realizability import project_moments

    m = monomial_from_stat(StatMoments(eggs, *INITIAL_STAT))
    zero = MomentTriple.zero()
    return {"1": zero, "2": project_moments(m, table.feasible), "3": zero, "4": zero}


def total_population(moments) -> float:
    """Sum of stage masses; accepts a mapping of triples or an ``(n_v, 3)`` array."""
    if isinstance(moments, Mapping):
        return float(sum(m.m0 if isinstance(m, MomentTriple) else m[0] for m in moments.values()))
    return float(np.asarray(moments)[..., 0].sum())


# ---------------------------------------------------------------------------
# R0
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class R0Estimate:
    value: float
    times: np.ndarray
    series: np.ndarray

    @property
    def spread(self) -> float:
        """Relative standard deviation of ``R0(t)`` over the window."""
        m = float(np.mean(self.series))
        return float(np.std(self.series) / m) if m > 0.0 else math.inf


def r0_estimate(times, p, skip_years: float = 1.0, avg_years: float = 2.0, spacing: float = 0.05,
                t0: float | None = None) -> R0Estimate:
    """Average of ``p(t + 1) / p(t)`` for ``t`` in ``[t0 + skip, t0 + skip + avg]``."""
    times = np.asarray(times, dtype=float)
    p = np.asarray(p, dtype=float)
    t0 = float(times[0]) if t0 is None else t0
    lo, hi = t0 + skip_years, t0 + skip_years + avg_years
    if times[-1] < hi + 1.0 - 1e-9:
        raise ValueError(f"trajectory ends at {times[-1]:g}; need {hi + 1.0:g}")
    n = int(round(avg_years / spacing))
    ts = lo + spacing * np.arange(n + 1)
    p_now = np.interp(ts, times, p)
    p_next = np.interp(ts + 1.0, times, p)
    if np.any(p_now <= 0.0):
        raise ExtinctPopulation(f"population vanishes inside the window [{lo:g}, {hi:g}]")
    series = p_next / p_now
    return R0Estimate(float(np.mean(series)), ts, series)


def classify(r0: float) -> str:
    if not r0 >= 0.0:
        raise ValueError("R0 must be nonnegative")
    for cut, name in zip(_CUTS, CATEGORIES):
        if r0 < cut:
            return name
    return CATEGORIES[-1]


# ---------------------------------------------------------------------------
# single runs and sweeps
# ---------------------------------------------------------------------------


def simulate_profile(cfg: SLFConfig, profile: TemperatureProfile, table: LookupTable, method: str = "ode",
                     scale: float = 1.0) -> Trajectory:
    """Simulate ``cfg.run.years`` from the default initial condition times ``scale``."""
    from . import ap_scheme, moment_ode, reference

    spec = build_network(cfg, profile)
    run = cfg.run
    init = initial_moments(table, INITIAL_EGGS * scale)
    if method == "ode":
        stride = max(1, int(round(run.spacing / run.dt)))
        return moment_ode.simulate(spec, init, OdeRunConfig(run.dt, run.years, stride), table)
    if method == "ap":
        stride = max(1, int(round(run.spacing / run.dt)))
        return ap_scheme.simulate(spec, init, OdeRunConfig(run.dt, run.years, stride), table)
    if method == "fv":
        n = run.fv_cells
        nu_max = max(max(r.nu) for r in cfg.responses.values())
        dt = run.spacing / math.ceil(run.spacing * nu_max * n)  # CFL <= 1 at the fastest tabulated speed
        stride = int(round(run.spacing / dt))
        g = table.recover(init["2"])
        return reference.simulate_fv(spec, {"2": g}, n, OdeRunConfig(dt, run.years, stride))
    raise ConfigError(f"unknown method {method!r}")


@dataclass(frozen=True)
class SweepPoint:
    h: float
    g: float
    r0: float
    category: str
    flags: tuple = ()
    diagnostics: Mapping = field(default_factory=dict)


@dataclass(frozen=True)
class SweepResult:
    h: tuple
    g: tuple
    points: tuple

    def grid(self) -> np.ndarray:
        """``R0[i, j]`` at ``h[i], g[j]``."""
        out = np.full((len(self.h), len(self.g)), np.nan)
        for k, p in enumerate(self.points):
            out[k // len(self.g), k % len(self.g)] = p.r0
        return out

    def write_csv(self, path, header_lines=()) -> None:
        try:
            with open(path, "w", newline="") as fh:
                for line in header_lines:
                    fh.write(f"# {line}\n")
                w = csv.writer(fh)
                w.writerow(["h", "g", "R0", "category", "flags", "spread", "final_population"])
                for p in self.points:
                    d = p.diagnostics
                    w.writerow([repr(p.h), repr(p.g), repr(p.r0), p.category, ";".join(p.flags),
                                repr(d.get("spread", math.nan)), repr(d.get("final_population", math.nan))])
        except OSError as exc:
            raise IoFailure(f"cannot write {path}: {exc}") from exc


def run_point(h: float, g: float, cfg: SLFConfig, table: LookupTable, method: str = "ode") -> SweepPoint:
    """One sweep point; numerical failures become flags instead of exceptions."""
    run = cfg.run
    try:
        traj = simulate_profile(cfg, TemperatureProfile(g=g, h=h), table, method)
        p = traj.total_mass()
        diag = {"final_population": float(p[-1])}
        try:
            est = r0_estimate(traj.times, p, run.skip_years, run.avg_years, run.spacing)
        except ExtinctPopulation:
            return SweepPoint(h, g, 0.0, classify(0.0), ("extinct",), diag)
        diag["spread"] = est.spread
        flags = ()
        if traj.extra and traj.extra.get("clamp_events") and traj.extra["clamp_events"][-1]:
            flags = ("clamped",)
        return SweepPoint(h, g, est.value, classify(est.value), flags, diag)
    except (MomentError, ValueError, FloatingPointError) as exc:
        return SweepPoint(h, g, math.nan, "failed", (type(exc).__name__,), {"error": str(exc)})


_WORKER = {}


def _init_worker(cfg, table, method):
    _WORKER.update(cfg=cfg, table=table, method=method)


def _work(hg):
    return run_point(hg[0], hg[1], _WORKER["cfg"], _WORKER["table"], _WORKER["method"])


def sweep(h_values: Sequence[float], g_values: Sequence[float], cfg: SLFConfig, table: LookupTable,
          method: str = "ode", jobs: int = 1) -> SweepResult:
    """Row-major ``(h, g)`` grid of independent, deterministic runs."""
    h_values, g_values = tuple(map(float, h_values)), tuple(map(float, g_values))
    if not h_values or not g_values:
        raise ConfigError("sweep ranges must be nonempty")
    if method not in ("ode", "ap", "fv"):
        raise ConfigError(f"unknown method {method!r}")
    grid = [(h, g) for h in h_values for g in g_values]
    if jobs <= 1 or len(grid) == 1:
        points = [run_point(h, g, cfg, table, method) for h, g in grid]
    else:
        with cf.ProcessPoolExecutor(jobs, initializer=_init_worker, initargs=(cfg, table, method)) as ex:
            points = list(ex.map(_work, grid))
    return SweepResult(h_values, g_values, tuple(points))


def with_run(cfg: SLFConfig, **kw) -> SLFConfig:
    return replace(cfg, run=replace(cfg.run, **kw))
