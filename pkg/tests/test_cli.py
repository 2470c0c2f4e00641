import csv
import json

import pytest

from frameflow.cli import SUBCOMMANDS, main, parse_grid


def _body(path):
    return [l for l in path.read_text().splitlines() if not l.startswith("#")]


def _table(path):
    return list(csv.DictReader(_body(path)))


def _run(tmp_path, *argv):
    return main(["--out-dir", str(tmp_path), *argv])


@pytest.fixture(scope="module")
def all_run(tmp_path_factory):
    out = tmp_path_factory.mktemp("all")
    code = main(["--seed", "11", "--out-dir", str(out), "all", "--group", "fuchsian"])
    return code, out


def test_all_fuchsian_writes_seven_csvs(all_run):
    code, out = all_run
    assert code == 0
    files = sorted(p.name for p in out.glob("*.csv"))
    assert len(files) == 7


def test_headers_record_version_seed_and_config(all_run):
    _, out = all_run
    for path in out.glob("*.csv"):
        head = [l for l in path.read_text().splitlines() if l.startswith("#")]
        assert head[0].startswith("# frameflow ")
        assert "# seed: 11" in head
        assert any("PCG64" in l for l in head)
        assert any(l.startswith("# config command = ") for l in head)


def test_assertion_rows_carry_measured_bound_pass(all_run):
    _, out = all_run
    for path in out.glob("*.csv"):
        if path.name == "decay.csv":
            continue  # a time series; its assertion lives in the header notes
        cols = _body(path)[0].split(",")
        assert cols[-3:] == ["measured", "bound", "pass"], path.name


def test_all_rows_pass(all_run):
    _, out = all_run
    for path in out.glob("*.csv"):
        for row in _table(path):
            if "pass" in row and row["pass"] != "":
                assert row["pass"] == "true", (path.name, row)


def test_same_seed_same_body(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for d in (a, b):
        assert main(["--seed", "5", "--out-dir", str(d), "ncp", "--triples", "20"]) == 0
    assert _body(a / "ncp.csv") == _body(b / "ncp.csv")
    assert main(["--seed", "6", "--out-dir", str(a), "ncp", "--triples", "20"]) == 0
    assert _body(a / "ncp.csv") != _body(b / "ncp.csv")


def test_config_file_sets_defaults(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"seed": 3, "triples": 5, "kappa": 0.7}))
    assert _run(tmp_path, "--config", str(cfg), "ncp") == 0
    text = (tmp_path / "ncp.csv").read_text()
    assert "# seed: 3" in text and "# config kappa = 0.7" in text
    assert len(_table(tmp_path / "ncp.csv")) == 6
    # explicit flags win over the file
    assert _run(tmp_path, "--config", str(cfg), "ncp", "--triples", "7") == 0
    assert len(_table(tmp_path / "ncp.csv")) == 8


def test_unknown_config_key_is_rejected(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"triples": 5, "bogus": 1}))
    assert _run(tmp_path, "--config", str(cfg), "ncp") == 2


def test_malformed_config_json(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text("{not json")
    assert _run(tmp_path, "--config", str(cfg), "ncp") == 2
    assert _run(tmp_path, "--config", str(tmp_path / "missing.json"), "ncp") == 2


def test_malformed_group_json(tmp_path):
    bad = tmp_path / "g.json"
    bad.write_text('{"family": "fuchsian", "generators": [[1, 0]]}')
    assert _run(tmp_path, "limit-set", "--group", str(bad)) == 2
    bad.write_text("[[[")
    assert _run(tmp_path, "limit-set", "--group", str(bad)) == 2
    assert _run(tmp_path, "limit-set", "--group", str(tmp_path / "nope.json")) == 2
    assert _run(tmp_path, "limit-set", "--group", "no_such_group") == 2


@pytest.mark.parametrize("argv", [
    ["ncp", "--eps-grid", "7:3"],
    ["ncp", "--eps-grid", "abc"],
    ["ncp", "--kappa", "2"],
    ["decay", "--tmax", "-1"],
    ["critexp", "--tol", "0"],
    ["spectrum", "--kmax", "0"],
    ["--threads", "0", "ncp"],
    ["--seed", "-4", "ncp"],
    ["dolgopyat", "--b", "0", "--ell", "0"],
    ["no-such-command"],
    ["ncp", "--no-such-flag"],
])
def test_schema_violations_exit_2(tmp_path, argv):
    assert _run(tmp_path, *argv) == 2


def test_numeric_error_exit_3(tmp_path, capsys):
    assert _run(tmp_path, "limit-set", "--depth", "40") == 3
    assert "DepthError" in capsys.readouterr().err


def test_failed_assertion_exit_1(tmp_path):
    # depth 2 is too coarse for the two-depth agreement check
    assert _run(tmp_path, "critexp", "--depth", "2,6", "--agree", "1e-6") == 1
    rows = _table(tmp_path / "critexp.csv")
    assert [r["pass"] for r in rows] == ["false", "false"]


def test_lie_verify_single_family(tmp_path):
    assert _run(tmp_path, "lie-verify", "--family", "su", "--n", "2", "--out", "su.csv") == 0
    rows = _table(tmp_path / "su.csv")
    assert {r["algebra"] for r in rows} == {"su(2,1)"}
    assert {"bracket_span", "2alpha_bracket", "jacobi", "theta_flip"} <= {
        r["identity_name"] for r in rows}


def test_spectrum_single_cell(tmp_path):
    assert _run(tmp_path, "spectrum", "--group", "kleinian", "--depth", "4", "--b", "5",
                "--ell", "1", "--kmax", "12") == 0
    rows = _table(tmp_path / "spectrum.csv")
    assert len(rows) == 1 and float(rows[0]["rate"]) < 0.999


def test_dolgopyat_single_cell(tmp_path):
    assert _run(tmp_path, "dolgopyat", "--b", "5", "--samples", "2") == 0
    rows = _table(tmp_path / "dolgopyat.csv")
    props = {r["property"] for r in rows}
    assert {"eta", "cone_preservation", "beta_lower", "component_size", "chain:mu"} <= props
    assert {r["cell"] for r in rows if not r["property"].startswith("chain:")} == {"b=5 ell=0"}


def test_help_exits_zero(capsys, monkeypatch):
    monkeypatch.setenv("COLUMNS", "200")
    assert main(["--help"]) == 0
    out = capsys.readouterr().out
    assert all(name in out for name in SUBCOMMANDS)


def test_parse_grid():
    assert parse_grid("3:5") == [2.0**-3, 2.0**-4, 2.0**-5]
