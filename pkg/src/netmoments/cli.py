"""``netmoments`` command-line entry point.

Exit codes: 0 success, 1 usage or configuration error, 2 numerical
precondition, 3 I/O failure.  ``NETMOMENTS_TABLE`` names the table used when
``--table`` is not given; without either, the default table is built in memory.
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys
import time
from dataclasses import asdict

import numpy as np

from . import __version__
from .errors import ConfigError, IoFailure, MomentError, NumericalPrecondition, PreconditionViolation, UnknownVertex
from .gaussian_moments import Gaussian, MomentTriple, StatMoments, moments_hybrid, monomial_from_stat

log = logging.getLogger("netmoments")

TABLE_ENV = "NETMOMENTS_TABLE"
EXIT_OK, EXIT_USAGE, EXIT_NUMERIC, EXIT_IO = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


# ---------------------------------------------------------------------------
# shared helpers
# ---------------------------------------------------------------------------


def _range(text: str) -> np.ndarray:
    """``a:b:n`` -> ``n`` evenly spaced values; a bare number is a single value."""
    parts = text.split(":")
    try:
        if len(parts) == 1:
            return np.array([float(parts[0])])
        a, b, n = float(parts[0]), float(parts[1]), int(parts[2])
    except (ValueError, IndexError) as exc:
        raise ConfigError(f"range {text!r} is not of the form a:b:n") from exc
    if n < 1 or len(parts) != 3:
        raise ConfigError(f"range {text!r} needs n >= 1")
    return np.linspace(a, b, n)


def _check_writable(path: str) -> None:
    d = os.path.dirname(os.path.abspath(path))
    if not os.path.isdir(d) or not os.access(d, os.W_OK):
        raise IoFailure(f"cannot write to {path}: directory missing or read-only")
    if os.path.exists(path) and not os.access(path, os.W_OK):
        raise IoFailure(f"cannot write to {path}: file is read-only")


def _table(path: str | None):
    from .lookup_table import build_default_table, load

    path = path or os.environ.get(TABLE_ENV)
    if path:
        return load(path)
    log.warning("no table given (--table or %s); building the default table in memory", TABLE_ENV)
    return build_default_table()


def _sample_spec(doc: dict):
    from .lookup_table import SampleDomainSpec, TableConfig

    if not isinstance(doc, dict):
        raise ConfigError("table spec must be a JSON object")
    unknown = set(doc) - {"sample", "table", "target_max_cell_ratio", "round_trip_pairs"}
    if unknown:
        raise ConfigError(f"unknown table spec keys {sorted(unknown)}")
    try:
        spec = SampleDomainSpec(**doc.get("sample", {}))
        cfg = TableConfig(**doc.get("table", {}))
    except TypeError as exc:
        raise ConfigError(f"bad table spec: {exc}") from exc
    except ValueError as exc:
        raise ConfigError(f"invalid table spec: {exc}") from exc
    target = float(doc.get("target_max_cell_ratio", 2.0))
    pairs = int(doc.get("round_trip_pairs", 1000))
    return spec, cfg, target, pairs


def _moment_entry(v: str, doc) -> MomentTriple | Gaussian:
    """Initial data per vertex: ``{C, a0, sigma}``, ``{M, E, V}`` or ``{m0, m1, m2}``."""
    try:
        if {"C", "a0", "sigma"} <= set(doc):
            return Gaussian(float(doc["C"]), float(doc["a0"]), float(doc["sigma"]))
        if {"M", "E", "V"} <= set(doc):
            return monomial_from_stat(StatMoments(float(doc["M"]), float(doc["E"]), float(doc["V"])))
        if {"m0", "m1", "m2"} <= set(doc):
            return MomentTriple(float(doc["m0"]), float(doc["m1"]), float(doc["m2"]))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad initial data for vertex {v}: {exc}") from exc
    raise ConfigError(f"initial data for vertex {v} needs C/a0/sigma, M/E/V or m0/m1/m2")


def _initial(doc, spec) -> dict:
    if not isinstance(doc, dict):
        raise ConfigError("initial data must be a JSON object keyed by vertex")
    out = {}
    for v, entry in doc.items():
        spec.index(str(v))
        out[str(v)] = _moment_entry(str(v), entry)
    return out


def _as_moments(init: dict) -> dict:
    return {v: moments_hybrid(x) if isinstance(x, Gaussian) else x for v, x in init.items()}


def _as_profiles(init: dict, table) -> dict:
    out = {}
    for v, x in init.items():
        if isinstance(x, Gaussian):
            out[v] = x
        elif x.m0 > 0.0:
            if table is None:
                raise ConfigError(f"vertex {v}: moment initial data needs a table for the finite-volume method")
            out[v] = table.recover(x)
    return out


def _validate_network(spec, t_end: float) -> None:
    from .network import validate

    rep = validate(spec, t_end)
    if not rep.ok:
        raise ConfigError("invalid network: " + "; ".join(rep.violations))


def _require_pure_advection(spec, t_end: float) -> None:
    ts = np.linspace(0.0, t_end, 201)
    if not spec.is_pure_advection(ts):
        raise PreconditionViolation("the ap method handles pure advection only (xi = mu = 0 everywhere)")


def _fv_dt(spec, n: int, dt: float, t_end: float, record: float) -> tuple[float, int]:
    """Largest FV step <= ``dt`` that meets the CFL bound and divides the record interval."""
    ts = np.linspace(0.0, t_end, 1001)
    nu_max = max(max(c.nu(float(t)) for t in ts) for c in spec.vertices.values())
    limit = dt if nu_max == 0.0 else min(dt, 1.0 / (nu_max * n))
    k = math.ceil(record / limit - 1e-9)
    return record / k, k


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_build_table(args) -> int:
    from .lookup_table import build_forward_samples, build_table, recovery_round_trip, round_trip_report, save
    from .network import read_json
    from .output import write_json

    doc = read_json(args.spec) if args.spec else {}
    spec, cfg, target, pairs = _sample_spec(doc)
    report_path = args.report or args.out + ".report.json"
    _check_writable(args.out)
    _check_writable(report_path)
    t0 = time.perf_counter()
    table = build_table(build_forward_samples(spec), cfg)
    build_s = time.perf_counter() - t0
    save(table, args.out)
    entry = round_trip_report(table)
    sampled = recovery_round_trip(table, pairs)
    report = {
        "tool_version": __version__,
        "table_sha256": table.digest(),
        "shape": list(table.shape),
        "build_seconds": build_s,
        "E_min": table.feasible.E_min,
        "E_max": table.feasible.E_max,
        "entries": entry,
        "round_trip": sampled,
        "target_max_cell_ratio": target,
        "meets_target": sampled["max_cell_ratio"] <= target,
    }
    write_json(report_path, report)
    print(f"table {args.out}: shape {table.shape}, round-trip max {sampled['max_cell_ratio']:.3g} cell diameters "
          f"(target {target:g}), entry sigma error {entry['max_rel_sigma_error']:.3g}")
    return EXIT_OK


def _trajectory_csv(traj, path, header):
    from .output import write_csv

    write_csv(path, traj.columns(), traj.rows(), header)


def cmd_simulate(args) -> int:
    from . import ap_scheme, moment_ode, reference
    from .moment_ode import OdeRunConfig
    from .network import network_from_dict, read_json
    from .output import config_hash, header_lines

    net_doc = read_json(args.network)
    init_doc = read_json(args.init)
    spec = network_from_dict(net_doc)
    init = _initial(init_doc, spec)
    cfg = OdeRunConfig(args.dt, args.t_end, args.stride)
    _validate_network(spec, args.t_end)
    if args.method == "ap":
        _require_pure_advection(spec, args.t_end)
    _check_writable(args.out)
    needs_table = args.method != "fv" or any(not isinstance(x, Gaussian) for x in init.values())
    table = _table(args.table) if needs_table else None
    doc = {"network": net_doc, "init": init_doc, "method": args.method, "dt": args.dt, "t_end": args.t_end,
           "stride": args.stride, "grid_n": args.grid_n if args.method == "fv" else None}
    header = header_lines(config_hash(doc), table.digest() if table is not None else None)
    if args.method == "ode":
        traj = moment_ode.simulate(spec, _as_moments(init), cfg, table)
    elif args.method == "ap":
        traj = ap_scheme.simulate(spec, _as_moments(init), cfg, table)
    else:
        reference.check_cfl(spec, args.grid_n, 0.0, args.dt)
        traj = reference.simulate_fv(spec, _as_profiles(init, table), args.grid_n, cfg,
                                     keep_densities=bool(args.densities))
        if args.densities:
            reference.write_density_csv(args.densities, traj.times, traj.densities, header)
    _trajectory_csv(traj, args.out, header)
    return EXIT_OK


def cmd_two_domain(args) -> int:
    from .output import config_hash, header_lines, write_csv
    from .problems import TwoDomainProblem, cycle_errors

    prob = TwoDomainProblem(args.sigma0, args.a0)
    _check_writable(args.out)
    table = _table(args.table)
    fm = table.feasible.meta
    if not fm.get("sigma_min", 0.0) <= args.sigma0 <= fm.get("sigma_max", math.inf):
        raise PreconditionViolation(f"sigma0 = {args.sigma0:g} is outside the table's width range "
                                    f"[{fm.get('sigma_min'):g}, {fm.get('sigma_max'):g}]")
    traj = prob.run(args.method, args.dt, args.t_end, table)
    rows = cycle_errors(prob, traj, table)
    doc = {"sigma0": args.sigma0, "a0": args.a0, "method": args.method, "dt": args.dt, "t_end": args.t_end}
    names = [f"rel_err_{v}_m{k}" for v in ("1", "2") for k in range(3)]
    cols = ["t", *names, "max_rel_error", "sigma_rel_error", "sigma_moment_rel_error"]
    data = [(r["t"], *map(float, r["rel_errors"]), r["max_rel_error"], r["sigma_rel_error"],
             r["sigma_moment_rel_error"]) for r in rows]
    write_csv(args.out, cols, data, header_lines(config_hash(doc), table.digest()))
    worst = max(r["max_rel_error"] for r in rows)
    at2 = next((r for r in rows if abs(r["t"] - prob.period) < 1e-9), None)
    msg = f"max relative moment error {worst:.3g}"
    if at2 is not None:
        msg += f"; relative sigma error at t={prob.period:g}: {at2['sigma_rel_error']:.3g}"
    print(msg)
    return EXIT_OK


def cmd_compare(args) -> int:
    from . import ap_scheme, moment_ode, reference
    from .moment_ode import OdeRunConfig
    from .network import network_from_dict, read_json
    from .output import config_hash, header_lines, write_csv

    doc = read_json(args.config)
    try:
        net_doc, init_doc = doc["network"], doc["init"]
        dt, t_end = float(doc["dt"]), float(doc["t_end"])
        record = float(doc.get("record_every", dt))
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"compare config needs network, init, dt and t_end: {exc}") from exc
    method = args.method or doc.get("method", "ode")
    spec = network_from_dict(net_doc)
    init = _initial(init_doc, spec)
    _validate_network(spec, t_end)
    if method == "ap":
        _require_pure_advection(spec, t_end)
    stride = int(round(record / dt))
    if stride < 1 or abs(stride * dt - record) > 1e-9 * record:
        raise ConfigError("record_every must be a positive multiple of dt")
    _check_writable(args.out)
    table = _table(args.table)
    cfg = OdeRunConfig(dt, t_end, stride)
    sim = ap_scheme.simulate if method == "ap" else moment_ode.simulate
    mom = sim(spec, _as_moments(init), cfg, table)
    fv_dt, fv_stride = _fv_dt(spec, args.grid_n, dt, t_end, record)
    fv = reference.simulate_fv(spec, _as_profiles(init, table), args.grid_n, OdeRunConfig(fv_dt, t_end, fv_stride))
    a, b = mom.stat(), fv.stat()
    n = min(len(mom.times), len(fv.times))
    rows = []
    for k in range(n):
        for i, v in enumerate(spec.ids):
            rows.append((float(mom.times[k]), v, *map(float, a[k, i]), *map(float, b[k, i])))
    cols = ["t", "vertex", "M_moment", "E_moment", "V_moment", "M_fv", "E_fv", "V_fv"]
    hdoc = {"config": doc, "method": method, "grid_n": args.grid_n}
    write_csv(args.out, cols, rows, header_lines(config_hash(hdoc), table.digest()))
    return EXIT_OK


def cmd_sweep(args) -> int:
    from . import slf
    from .output import config_hash, header_lines, write_json

    cfg = slf.load_config(args.slf_config) if args.slf_config else slf.synthetic_config()
    if args.dt is not None:
        cfg = slf.with_run(cfg, dt=args.dt)
    hs, gs = _range(args.h), _range(args.g)
    if args.method == "ap" and any(max(r.mu) > 0.0 or r.xi_over_nu > 0.0 for r in cfg.responses.values()):
        raise PreconditionViolation("the ap method needs xi = mu = 0 in every stage of the config")
    manifest_path = args.out + ".manifest.json"
    _check_writable(args.out)
    _check_writable(manifest_path)
    table = _table(args.table)
    res = slf.sweep(hs, gs, cfg, table, args.method, args.jobs)
    doc = {"config": slf.config_to_dict(cfg), "h": list(map(float, hs)), "g": list(map(float, gs)),
           "method": args.method}
    header = header_lines(config_hash(doc), table.digest())
    res.write_csv(args.out, header)
    counts = {c: 0 for c in (*slf.CATEGORIES, "failed")}
    for p in res.points:
        counts[p.category] += 1
    write_json(manifest_path, {
        "tool_version": __version__,
        "config_sha256": config_hash(doc),
        "table_sha256": table.digest(),
        "h": doc["h"],
        "g": doc["g"],
        "method": args.method,
        "run": asdict(cfg.run),
        "categories": counts,
        "failures": [{"h": p.h, "g": p.g, "flags": list(p.flags), "error": p.diagnostics.get("error", "")}
                     for p in res.points if p.category == "failed"],
    })
    if counts["failed"] == len(res.points):
        print("every sweep point failed; see the manifest", file=sys.stderr)
        return EXIT_NUMERIC
    print(f"{len(res.points)} points: " + ", ".join(f"{k} {v}" for k, v in counts.items() if v))
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def _positive(kind):
    def conv(text):
        try:
            x = kind(text)
        except ValueError:
            raise argparse.ArgumentTypeError(f"{text!r} is not a valid {kind.__name__}") from None
        if not x > 0:
            raise argparse.ArgumentTypeError(f"{text!r} must be positive")
        return x
    return conv


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="netmoments", description="Gaussian moment methods on networks of unit domains")
    p.add_argument("--version", action="version", version=f"netmoments {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    b = sub.add_parser("build-table", help="build a lookup table and its accuracy report")
    b.add_argument("--spec", help="JSON with 'sample' and 'table' sections (defaults if omitted)")
    b.add_argument("--out", required=True)
    b.add_argument("--report", help="accuracy report path (default: OUT.report.json)")
    b.set_defaults(func=cmd_build_table)

    s = sub.add_parser("simulate", help="run one network simulation")
    s.add_argument("--network", required=True)
    s.add_argument("--init", required=True)
    s.add_argument("--method", choices=("ode", "ap", "fv"), default="ode")
    s.add_argument("--dt", type=_positive(float), required=True)
    s.add_argument("--t-end", type=float, required=True)
    s.add_argument("--stride", type=_positive(int), default=1, help="record every STRIDE steps")
    s.add_argument("--grid-n", type=_positive(int), default=2000, help="cells per domain for fv")
    s.add_argument("--densities", help="fv only: also write density snapshots to this CSV")
    s.add_argument("--table")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)

    t = sub.add_parser("two-domain", help="periodic two-domain advection test")
    t.add_argument("--sigma0", type=_positive(float), required=True)
    t.add_argument("--a0", type=float, default=0.5)
    t.add_argument("--method", choices=("ode", "ap"), default="ode")
    t.add_argument("--dt", type=_positive(float), required=True)
    t.add_argument("--t-end", type=_positive(float), default=2.0)
    t.add_argument("--table")
    t.add_argument("--out", required=True)
    t.set_defaults(func=cmd_two_domain)

    c = sub.add_parser("compare", help="moment method against the finite-volume oracle")
    c.add_argument("--config", required=True)
    c.add_argument("--grid-n", type=_positive(int), default=2000)
    c.add_argument("--method", choices=("ode", "ap"))
    c.add_argument("--table")
    c.add_argument("--out", required=True)
    c.set_defaults(func=cmd_compare)

    w = sub.add_parser("sweep", help="lanternfly R0 over a temperature (h, g) grid")
    w.add_argument("--slf-config", help="JSON config (default: the synthetic example)")
    w.add_argument("--h", required=True, help="mean temperature range a:b:n")
    w.add_argument("--g", required=True, help="amplitude range a:b:n")
    w.add_argument("--method", choices=("ode", "ap", "fv"), default="ode")
    w.add_argument("--dt", type=_positive(float), help="override the config time step")
    w.add_argument("--jobs", type=_positive(int), default=1)
    w.add_argument("--table")
    w.add_argument("--out", required=True)
    w.set_defaults(func=cmd_sweep)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"netmoments: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except IoFailure as exc:
        print(f"netmoments: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except NumericalPrecondition as exc:
        print(f"netmoments: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ConfigError, UnknownVertex, UsageError, ValueError) as exc:
        print(f"netmoments: configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except MomentError as exc:
        print(f"netmoments: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
