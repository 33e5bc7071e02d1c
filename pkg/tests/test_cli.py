import csv
import json
import pathlib

import pytest

from netmoments import __version__
from netmoments import lookup_table as lt
from netmoments.cli import TABLE_ENV, build_parser, main
from netmoments.output import read_header

CONFIGS = pathlib.Path(__file__).resolve().parents[1] / "configs"


@pytest.fixture(scope="module")
def table_path(table, tmp_path_factory):
    p = tmp_path_factory.mktemp("cli") / "table.bin"
    lt.save(table, p)
    return str(p)


def data_rows(path):
    return list(csv.reader(l for l in pathlib.Path(path).read_text().splitlines() if not l.startswith("#")))


def simulate_args(out, table_path, method="ode", dt="0.01"):
    return ["simulate", "--network", str(CONFIGS / "two_domain_network.json"),
            "--init", str(CONFIGS / "two_domain_init.json"), "--method", method, "--dt", dt,
            "--t-end", "0.5", "--stride", "10", "--table", table_path, "--out", str(out)]


class TestParser:
    def test_subcommands(self):
        p = build_parser()
        for cmd in ("build-table", "simulate", "two-domain", "compare", "sweep"):
            assert p.parse_args(_minimal(cmd)).command == cmd

    def test_version(self, capsys):
        with pytest.raises(SystemExit) as e:
            main(["--version"])
        assert e.value.code == 0
        assert __version__ in capsys.readouterr().out


def _minimal(cmd):
    return {
        "build-table": ["build-table", "--out", "t.bin"],
        "simulate": ["simulate", "--network", "n", "--init", "i", "--dt", "0.1", "--t-end", "1", "--out", "o"],
        "two-domain": ["two-domain", "--sigma0", "0.05", "--dt", "0.1", "--out", "o"],
        "compare": ["compare", "--config", "c", "--out", "o"],
        "sweep": ["sweep", "--h", "1:2:2", "--g", "3", "--out", "o"],
    }[cmd]


class TestExitCodes:
    def test_success(self, tmp_path, table_path):
        assert main(simulate_args(tmp_path / "o.csv", table_path)) == 0

    @pytest.mark.parametrize("argv", [[], ["nonsense"], ["simulate", "--dt", "0.1"],
                                      ["two-domain", "--sigma0", "-1", "--dt", "0.1", "--out", "o"],
                                      ["sweep", "--h", "1:x:3", "--g", "1", "--out", "o"]])
    def test_usage(self, argv, tmp_path, monkeypatch, capsys):
        monkeypatch.chdir(tmp_path)
        assert main(argv) == 1
        assert capsys.readouterr().err

    def test_bad_network(self, tmp_path, table_path):
        net = tmp_path / "net.json"
        net.write_text(json.dumps({"vertices": [{"id": "1", "nu": 1.0}], "edges": [{"from": "1", "to": "7"}]}))
        argv = simulate_args(tmp_path / "o.csv", table_path)
        argv[argv.index("--network") + 1] = str(net)
        assert main(argv) == 1

    def test_invalid_network_rejected(self, tmp_path, table_path):
        net = tmp_path / "net.json"
        net.write_text(json.dumps({"vertices": [{"id": "1", "nu": 1.0}, {"id": "2", "nu": 1.0}],
                                   "edges": [{"from": "1", "to": "2"}, {"from": "2", "to": "1"}]}))
        argv = simulate_args(tmp_path / "o.csv", table_path)
        argv[argv.index("--network") + 1] = str(net)
        assert main(argv) == 1

    def test_sigma_outside_table(self, tmp_path, table_path):
        argv = ["two-domain", "--sigma0", "1e-6", "--dt", "0.1", "--table", table_path, "--out", str(tmp_path / "o")]
        assert main(argv) == 2

    def test_ap_needs_pure_advection(self, tmp_path, table_path):
        net = tmp_path / "net.json"
        net.write_text(json.dumps({"vertices": [{"id": "1", "nu": 1.0, "mu": 0.5}]}))
        argv = ["simulate", "--network", str(net), "--init",
                str(CONFIGS / "two_domain_init.json"), "--method", "ap", "--dt", "0.01", "--t-end", "0.1",
                "--table", table_path, "--out", str(tmp_path / "o.csv")]
        assert main(argv) == 2

    def test_cfl(self, tmp_path, table_path):
        assert main(simulate_args(tmp_path / "o.csv", table_path, method="fv", dt="0.01")) == 2

    def test_missing_table(self, tmp_path):
        assert main(simulate_args(tmp_path / "o.csv", str(tmp_path / "absent.bin"))) == 3

    def test_corrupt_table(self, tmp_path):
        bad = tmp_path / "bad.bin"
        bad.write_bytes(b"garbage" * 50)
        assert main(simulate_args(tmp_path / "o.csv", str(bad))) == 3

    def test_unwritable_output(self, tmp_path, table_path):
        assert main(simulate_args(tmp_path / "no" / "dir" / "o.csv", table_path)) == 3

    def test_table_from_environment(self, tmp_path, table_path, monkeypatch):
        monkeypatch.setenv(TABLE_ENV, table_path)
        argv = simulate_args(tmp_path / "o.csv", table_path)
        i = argv.index("--table")
        del argv[i:i + 2]
        assert main(argv) == 0
        assert read_header(tmp_path / "o.csv")["table-sha256"] == lt.load(table_path).digest()


class TestOutputs:
    def test_header(self, tmp_path, table_path):
        out = tmp_path / "o.csv"
        main(simulate_args(out, table_path))
        h = read_header(out)
        assert h["netmoments"] == __version__
        assert len(h["config-sha256"]) == 64
        assert h["table-sha256"] == lt.load(table_path).digest()
        rows = data_rows(out)
        assert rows[0][:2] == ["t", "vertex"] and len(rows) == 1 + 2 * 6

    @pytest.mark.parametrize("method", ["ode", "ap"])
    def test_simulate_deterministic(self, tmp_path, table_path, method):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        assert main(simulate_args(a, table_path, method)) == 0
        assert main(simulate_args(b, table_path, method)) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_fv_with_densities(self, tmp_path, table_path):
        out, dens = tmp_path / "o.csv", tmp_path / "d.csv"
        argv = simulate_args(out, table_path, method="fv", dt="0.001") + ["--grid-n", "200", "--densities", str(dens)]
        argv[argv.index("--stride") + 1] = "100"
        assert main(argv) == 0
        assert read_header(dens)["table-sha256"] == "none"
        assert data_rows(dens)[0] == ["t", "vertex", "cell", "value"]

    def test_two_domain_deterministic(self, tmp_path, table_path, capsys):
        outs = []
        for name in ("a.csv", "b.csv"):
            p = tmp_path / name
            assert main(["two-domain", "--sigma0", "1e-3", "--method", "ap", "--dt", "0.1", "--table", table_path,
                         "--out", str(p)]) == 0
            outs.append(p.read_bytes())
        assert outs[0] == outs[1]
        assert "relative sigma error at t=2" in capsys.readouterr().out
        rows = data_rows(tmp_path / "a.csv")
        assert rows[0][-3:] == ["max_rel_error", "sigma_rel_error", "sigma_moment_rel_error"]

    def test_compare(self, tmp_path, table_path):
        out = tmp_path / "c.csv"
        assert main(["compare", "--config", str(CONFIGS / "interior_transit.json"), "--grid-n", "400",
                     "--table", table_path, "--out", str(out)]) == 0
        rows = data_rows(out)
        assert rows[0] == ["t", "vertex", "M_moment", "E_moment", "V_moment", "M_fv", "E_fv", "V_fv"]
        assert len(rows) > 2

    def test_build_table(self, tmp_path):
        out = tmp_path / "t.bin"
        assert main(["build-table", "--spec", str(CONFIGS / "tiny_table.json"), "--out", str(out)]) == 0
        t = lt.load(out)
        assert t.shape == (10, 10)
        rep = json.loads((tmp_path / "t.bin.report.json").read_text())
        assert rep["table_sha256"] == t.digest()
        assert rep["round_trip"]["n"] == 200

    def test_build_table_bad_spec(self, tmp_path):
        spec = tmp_path / "s.json"
        spec.write_text(json.dumps({"table": {"n_e": 1}}))
        assert main(["build-table", "--spec", str(spec), "--out", str(tmp_path / "t.bin")]) == 1

    def test_sweep_manifest(self, tmp_path, table_path):
        out = tmp_path / "s.csv"
        assert main(["sweep", "--h=-25:-20:2", "--g", "0", "--dt", "0.01", "--table", table_path,
                     "--out", str(out)]) == 0
        man = json.loads((tmp_path / "s.csv.manifest.json").read_text())
        assert man["h"] == [-25.0, -20.0] and man["g"] == [0.0]
        assert man["run"]["dt"] == 0.01
        assert man["categories"]["rapid-decay"] == 2 and man["failures"] == []
        assert man["config_sha256"] == read_header(out)["config-sha256"]
        assert len(data_rows(out)) == 3
