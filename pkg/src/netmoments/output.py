"""Provenance headers and CSV writers shared by the command-line tools."""

from __future__ import annotations

import csv
import hashlib
import json

from . import __version__
from .errors import IoFailure


def config_hash(doc) -> str:
    """SHA-256 of the canonical JSON form of ``doc``."""
    blob = json.dumps(doc, sort_keys=True, separators=(",", ":"), default=str).encode()
    return hashlib.sha256(blob).hexdigest()


def header_lines(config_digest: str, table_digest: str | None) -> list[str]:
    return [
        f"netmoments {__version__}",
        f"config-sha256 {config_digest}",
        f"table-sha256 {table_digest or 'none'}",
    ]


def _fmt(x):
    return repr(float(x)) if isinstance(x, float) else x


def write_csv(path, columns, rows, header=()) -> None:
    """``#``-prefixed header lines, one column row, then the data rows."""
    try:
        with open(path, "w", newline="") as fh:
            for line in header:
                fh.write(f"# {line}\n")
            w = csv.writer(fh)
            w.writerow(columns)
            for row in rows:
                w.writerow([_fmt(x) for x in row])
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def write_json(path, doc) -> None:
    try:
        with open(path, "w") as fh:
            json.dump(doc, fh, indent=2, sort_keys=True)
            fh.write("\n")
    except OSError as exc:
        raise IoFailure(f"cannot write {path}: {exc}") from exc


def read_header(path) -> dict:
    """Parse the provenance header of a file written by :func:`write_csv`."""
    out = {}
    with open(path) as fh:
        for line in fh:
            if not line.startswith("# "):
                break
            key, _, value = line[2:].rstrip("\n").partition(" ")
            out[key] = value
    return out
