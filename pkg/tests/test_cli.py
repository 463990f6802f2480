import argparse
import json
import math

import numpy as np
import pytest

from ksblowup import cli
from ksblowup.cli import (EXIT_INVALID, EXIT_NUMERICAL, EXIT_OK, SCHEMA, SUBCOMMANDS, ConfigError, RunArtifact,
                          Table, build_parser, convergence_table, main, parse_config, validate_config)


def _run(tmp_path, name, *args):
    out = tmp_path / name
    code = main([*args, "--out", str(out)])
    return code, out


def _subparsers():
    parser = build_parser()
    action = next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))
    return action.choices


def _branch(name):
    return next(b["then"]["properties"] for b in SCHEMA["allOf"] if b["if"]["properties"]["subcommand"]["const"] == name)


def test_help_flags_match_schema():
    subs = _subparsers()
    assert set(subs) == set(SUBCOMMANDS)
    for name, sp in subs.items():
        dests = {a.dest for a in sp._actions if a.dest != "help"}
        assert dests == set(_branch(name)) - {"subcommand"}, name
        for a in sp._actions:
            if a.option_strings and a.dest != "help":
                assert a.help and a.option_strings[0] == cli.PARAMS[a.dest].flag


def test_help_lists_documented_flags():
    documented = ["--n", "--N", "--Rmax", "--scheme", "--k", "--lambda", "--T-lo", "--T-hi", "--eps",
                  "--tau-star", "--dt", "--out", "--format"]
    flags = {s for sp in _subparsers().values() for a in sp._actions for s in a.option_strings}
    assert set(documented) <= flags


def test_unknown_keys_rejected():
    with pytest.raises(ConfigError):
        validate_config({"subcommand": "ggmt", "N": 100})
    with pytest.raises(ConfigError):
        validate_config({"subcommand": "spectrum", "bogus": 1})
    with pytest.raises(ConfigError):
        parse_config(["spectrum", "--bogus", "1"])
    with pytest.raises(ConfigError):
        validate_config({"subcommand": "nope"})


def test_cross_field_rules():
    with pytest.raises(ConfigError):
        parse_config(["shoot", "--T-lo", "1.1", "--T-hi", "0.9"])
    with pytest.raises(ConfigError):
        parse_config(["profiles", "--n", "3"])
    with pytest.raises(ConfigError):
        parse_config(["resolvent", "--center", "19.8", "--Rmax", "20"])
    assert parse_config(["spectrum"])["count"] == 6


def test_even_n_exit_1_no_directory(tmp_path, capsys):
    code, out = _run(tmp_path, "even", "profiles", "--n", "6")
    assert code == EXIT_INVALID and not out.exists()
    assert "error" in capsys.readouterr().err


def test_ggmt_defaults(tmp_path):
    code, out = _run(tmp_path, "ggmt", "ggmt")
    assert code == EXIT_OK
    s = json.loads((out / "summary.json").read_text())
    r = s["results"]
    assert r["lhs"] == pytest.approx(70.4536, abs=1e-4)
    assert r["rhs"] == pytest.approx(83.333333, abs=1e-6)
    assert r["pass"] is True
    assert s["error"] is None and s["version"] and s["wall_seconds"] >= 0
    cfg = json.loads((out / "config.json").read_text())
    assert cfg["subcommand"] == "ggmt" and cfg["out"] == str(out)


def test_spectrum_count(tmp_path):
    code, out = _run(tmp_path, "spec", "spectrum", "--count", "5", "--N", "1000")
    assert code == EXIT_OK
    r = json.loads((out / "summary.json").read_text())["results"]
    assert len(r["eigenvalues"]) == 5
    assert r["eigenvalues"][0] == pytest.approx(1.0, abs=1e-3)
    t = Table.read(out / "eigenvalues.csv")
    assert t.rows.shape[0] == 5


def test_numerical_failure_exit_2(tmp_path, monkeypatch, capsys):
    def boom(c):
        raise RuntimeError("did not converge")

    monkeypatch.setitem(cli.RUNNERS, "ggmt", boom)
    code, out = _run(tmp_path, "fail", "ggmt")
    assert code == EXIT_NUMERICAL
    err = json.loads((out / "summary.json").read_text())["error"]
    assert err == {"type": "RuntimeError", "message": "did not converge"}
    assert "numerical failure" in capsys.readouterr().err


def test_shoot_without_sign_change_exit_2(tmp_path):
    code, out = _run(tmp_path, "nosign", "shoot", "--N", "300", "--T-lo", "1.01", "--T-hi", "1.1",
                     "--tau-star", "2")
    assert code == EXIT_NUMERICAL
    assert json.loads((out / "summary.json").read_text())["error"]["type"]


@pytest.mark.parametrize("fmt", ["csv", "json"])
def test_artifact_round_trip(tmp_path, fmt):
    rows = np.array([[0.1, 1 / 3, math.pi], [1e-300, -2.5e17, np.nextafter(1.0, 2.0)]])
    art = RunArtifact({"subcommand": "spectrum", "format": fmt, "N": 10},
                      {"subcommand": "spectrum", "results": {"x": 1 / 7, "ok": True}, "error": None},
                      {"table": Table(["a", "b", "c"], rows)})
    art.write(tmp_path / fmt)
    back = RunArtifact.read(tmp_path / fmt)
    assert back.config == art.config and back.summary == art.summary and back.version == art.version
    assert back.tables["table"].columns == ["a", "b", "c"]
    assert np.array_equal(back.tables["table"].rows, rows)


def test_json_format_output(tmp_path):
    code, out = _run(tmp_path, "gj", "ggmt", "--format", "json")
    assert code == EXIT_OK
    files = json.loads((out / "summary.json").read_text())["outputs"]
    assert files and all(f.endswith(".json") for f in files)


@pytest.fixture(scope="module")
def spectrum_runs(tmp_path_factory):
    base = tmp_path_factory.mktemp("report")
    dirs = []
    for N in (1000, 2000):
        out = base / f"N{N}"
        assert main(["spectrum", "--N", str(N), "--count", "3", "--out", str(out)]) == EXIT_OK
        dirs.append(out)
    return dirs


def test_report_order(tmp_path, spectrum_runs):
    out = tmp_path / "rep"
    assert main(["report", *map(str, spectrum_runs), "--out", str(out)]) == EXIT_OK
    t = Table.read(out / "convergence.csv")
    assert t.columns == ["resolution", "value", "error", "observed_order"]
    assert t.rows[-1, 3] == pytest.approx(2.0, rel=0.2)


def test_report_rejects_bad_input(tmp_path, spectrum_runs):
    assert main(["report", "--out", str(tmp_path / "empty")]) == EXIT_INVALID
    assert not (tmp_path / "empty").exists()
    g = tmp_path / "g"
    assert main(["ggmt", "--out", str(g)]) == EXIT_OK
    assert main(["report", str(g), str(spectrum_runs[0]), "--out", str(tmp_path / "mix")]) == EXIT_INVALID
    with pytest.raises(cli.ReportError):
        convergence_table([{"subcommand": "ggmt"}, {"subcommand": "evolve"}])
    with pytest.raises(cli.ReportError):
        convergence_table([])


def test_deterministic_csv(tmp_path):
    outs = [tmp_path / f"d{i}" for i in range(2)]
    for o in outs:
        assert main(["evolve", "--N", "300", "--tau-star", "1", "--out", str(o)]) == EXIT_OK
    files = sorted(p.name for p in outs[0].glob("*.csv"))
    assert files
    for f in files:
        assert (outs[0] / f).read_bytes() == (outs[1] / f).read_bytes()


def test_default_out_is_config_hash():
    a = parse_config(["ggmt"])
    b = parse_config(["ggmt", "--format", "json"])
    assert cli.default_out(a) != cli.default_out(b)
    assert cli.default_out(a) == cli.default_out(dict(a))
