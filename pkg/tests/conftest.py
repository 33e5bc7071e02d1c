import dataclasses
import hashlib
import json
import os

import pytest

from netmoments import __version__, gaussian_moments, realizability
from netmoments import lookup_table as lt


def _cache_key(spec, config) -> str:
    # the builder sources are part of the key so code changes invalidate the cache
    src = [open(m.__file__, "rb").read().hex() for m in (gaussian_moments, realizability, lt)]
    doc = {"v": __version__, "spec": dataclasses.asdict(spec), "config": dataclasses.asdict(config), "src": src}
    return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()[:16]


def cached_table(request, spec=lt.SampleDomainSpec(), config=lt.TableConfig()):
    """Build a table once per parameter set and keep it in the pytest cache directory."""
    path = request.config.cache.mkdir("netmoments") / f"table-{_cache_key(spec, config)}.bin"
    if path.exists():
        try:
            return lt.load(path)
        except (lt.CorruptTable, lt.FormatVersionMismatch):
            path.unlink()
    lt.save(lt.build_table(lt.build_forward_samples(spec), config), path)
    return lt.load(path)


@pytest.fixture(scope="session")
def table(request):
    """The default-resolution table (``NETMOMENTS_TABLE`` overrides the cache)."""
    env = os.environ.get("NETMOMENTS_TABLE")
    if env:
        return lt.load(env)
    return cached_table(request)


TINY_SPEC = lt.SampleDomainSpec(n_sigma_outside=10, n_sigma_inside=10, n_a0_uniform=10, n_a0_edge=10)
TINY_CONFIG = lt.TableConfig(n_e=40, n_v=20, n_boundary=400)


@pytest.fixture(scope="session")
def tiny_table():
    return lt.build_table(lt.build_forward_samples(TINY_SPEC), TINY_CONFIG)


# acceptance reporting: one line per criterion at the end of the run

_CRITERIA = {}


def pytest_runtest_makereport(item, call):
    mark = item.get_closest_marker("criterion")
    if mark is None or call.when != "call" and not (call.when == "setup" and call.excinfo is not None):
        return
    number, title = mark.args
    ok = call.excinfo is None
    notes = [f"{k}={v}" for k, v in item.user_properties]
    prev = _CRITERIA.get(number)
    if prev is not None:
        ok = ok and prev[1]
        notes = prev[2] + notes
    _CRITERIA[number] = (title, ok, notes)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        title, ok, notes = _CRITERIA[number]
        detail = f" ({', '.join(notes)})" if notes else ""
        terminalreporter.write_line(f"#{number} {'PASS' if ok else 'FAIL'} {title}{detail}")
