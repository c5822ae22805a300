import json
import math
from pathlib import Path

import numpy as np
import pytest

from hymflow.lab import acceptance, cli
from hymflow.lab.acceptance import Check, CriterionResult
from hymflow.lab.config import ConfigError, ExperimentConfig, SeedStream, load, loads
from hymflow.lab.plots import GROUPS, plot_file, render_trace
from hymflow.lab.runner import build, run_config

GOLDEN = Path(__file__).parent / "golden"


def config_text(**over):
    cfg = {
        "version": 1,
        "seed": 3,
        "base": {"kind": "flat", "dim": 1, "grid": 16},
        "bundle": {"degrees": [0]},
        "initial_metric": {"kind": "background"},
        "integrator": {"t_end": 0.01},
        "monitors": {"every": 0.005},
        "outputs": {"dir": "out", "name": "triv", "formats": ["jsonl", "csv"]},
    }
    for k, v in over.items():
        cfg[k] = v
    return json.dumps(cfg, indent=2)


def write(tmp_path, text, name="cfg.json"):
    p = tmp_path / name
    p.write_text(text)
    return p


# -- configuration ------------------------------------------------------------

def test_round_trip():
    cfg = loads(config_text())
    again = loads(cfg.to_json())
    assert again == cfg
    assert isinstance(again, ExperimentConfig)
    assert again.outputs.formats == ["jsonl", "csv"]


@pytest.mark.parametrize("text,line,fragment", [
    ('{\n  "version": 1,\n  "bundle": {"degres": [0]}\n}', 3, "degres"),
    ('{\n  "version": 1,\n  "base": {"grid": 12}\n}', 3, "power of two"),
    ('{\n  "version": 2\n}', 2, "schema version"),
    ('{\n  "version": 1,\n  "seed": 1,\n  oops\n}', 4, "malformed JSON"),
    ('{\n  "version": 1,\n  "bundle": {"degrees": [-1, 1]}\n}', 3, "nonincreasing"),
    ('{\n  "version": 1,\n  "integrator": {"scheme": "leapfrog"}\n}', 3, "scheme"),
])
def test_config_errors_point_to_lines(text, line, fragment):
    with pytest.raises(ConfigError) as info:
        loads(text)
    assert info.value.line == line
    assert fragment in str(info.value)


def test_config_rejects_inconsistent_choices():
    with pytest.raises(ConfigError):
        loads(config_text(base={"kind": "gauduchon", "dim": 1, "grid": 16, "eps": 0.1}))
    with pytest.raises(ConfigError):
        loads(config_text(base={"kind": "flat", "dim": 2, "grid": 8}, bundle={"degrees": [1, -1]}))
    with pytest.raises(ConfigError):
        loads(config_text(bundle={"degrees": [0, 0], "beta": {"kind": "constant", "entries": [[0, 0, 1, 0.1, 0]]}},
                          integrator={"renormalize": True}))
    with pytest.raises(ConfigError):
        loads(config_text(outputs={"name": "a/b"}))
    with pytest.raises(ConfigError):
        loads(config_text(seed=1.5))


def test_missing_file():
    with pytest.raises(ConfigError):
        load("/nonexistent/config.json")


def test_seed_stream_is_counted():
    a, b = SeedStream(5), SeedStream(5)
    xs = [a.next_seed() for _ in range(3)]
    assert xs == [b.next_seed() for _ in range(3)]
    assert len(set(xs)) == 3
    assert SeedStream(6).next_seed() != xs[0]


def test_build_from_config():
    cfg = loads(config_text(bundle={"degrees": [1, -1], "beta": {"kind": "packet", "amplitude": 0.2}},
                            initial_metric={"kind": "conformal", "amplitude": 0.1, "mode": [1, 0]},
                            pair={"kind": "random", "amplitude": 0.1}))
    exp = build(cfg)
    assert len(exp.states) == 2
    assert not exp.spec.is_split
    h = exp.states[0].h.values
    x, _ = exp.spec.base.coords()
    assert np.allclose(np.log(np.real(h[0, 0])), 0.1 * np.cos(2 * np.pi * x))


# -- runs -----------------------------------------------------------------------

def test_trivial_run(tmp_path):
    res = run_config(loads(config_text()), out_dir=tmp_path)
    rows = [json.loads(line) for line in (tmp_path / "triv.jsonl").read_text().splitlines()]
    assert [r["t"] for r in rows] == [0.0, 0.005, 0.01]
    assert all(abs(r["hatU"]) < 1e-12 and r["theta_norm_sq"] < 1e-24 for r in rows)
    csv = (tmp_path / "triv.csv").read_text().splitlines()
    assert len(csv) == 4
    assert sorted(p.name for p in res.files) == ["triv.csv", "triv.jsonl"]


def test_runs_are_byte_identical(tmp_path):
    text = config_text(bundle={"degrees": [1, -1]}, base={"kind": "flat", "dim": 1, "grid": 32},
                       initial_metric={"kind": "random", "amplitude": 0.2},
                       outputs={"name": "det", "formats": ["jsonl", "csv", "svg"]})
    run_config(loads(text), out_dir=tmp_path / "a")
    run_config(loads(text), out_dir=tmp_path / "b")
    names = sorted(p.name for p in (tmp_path / "a").iterdir())
    assert "det.energy.svg" in names
    assert names == sorted(p.name for p in (tmp_path / "b").iterdir())
    for n in names:
        assert (tmp_path / "a" / n).read_bytes() == (tmp_path / "b" / n).read_bytes(), n


def test_pair_run(tmp_path):
    text = config_text(bundle={"degrees": [1, -1]}, base={"kind": "flat", "dim": 1, "grid": 32},
                       initial_metric={"kind": "random", "amplitude": 0.2},
                       pair={"kind": "random", "amplitude": 0.2},
                       integrator={"t_end": 0.01, "renormalize": True},
                       outputs={"name": "pr", "formats": ["jsonl"]})
    run_config(loads(text), out_dir=tmp_path)
    r1 = [json.loads(x) for x in (tmp_path / "pr.1.jsonl").read_text().splitlines()]
    r2 = [json.loads(x) for x in (tmp_path / "pr.2.jsonl").read_text().splitlines()]
    assert len(r1) == len(r2) == 3
    assert {"pair_theta_L2", "pair_eig_L2", "pair_cond", "pair_trace_gap"} <= set(r1[0])
    assert "pair_theta_L2" not in r2[0]
    assert r1[0]["hatU"] != r2[0]["hatU"]


def test_golden_trace(tmp_path):
    # frozen output of a small run: the schema must match exactly
    golden = [json.loads(x) for x in (GOLDEN / "small_run.jsonl").read_text().splitlines()]
    run_config(load(GOLDEN / "small_run.json"), out_dir=tmp_path)
    rows = [json.loads(x) for x in (tmp_path / "small_run.jsonl").read_text().splitlines()]
    assert len(rows) == len(golden)
    for got, want in zip(rows, golden):
        assert list(got) == list(want)
        for k, v in want.items():
            g = got[k]
            if isinstance(v, dict):
                assert list(g) == list(v)
                g, v = list(g.values()), list(v.values())
            assert np.allclose(g, v, rtol=0, atol=1e-9), k


# -- command line ---------------------------------------------------------------

def test_cli_run_and_plot(tmp_path, capsys):
    cfg = write(tmp_path, config_text())
    assert cli.main(["run", str(cfg), "--out", str(tmp_path / "o"), "--svg"]) == 0
    out = capsys.readouterr().out.split()
    assert any(p.endswith("triv.jsonl") for p in out)
    assert (tmp_path / "o" / "triv.extremes.svg").exists()
    assert cli.main(["plot", str(tmp_path / "o" / "triv.jsonl"), "--out", str(tmp_path / "p")]) == 0
    assert (tmp_path / "p" / "triv.energy.svg").exists()


def test_cli_malformed_config(tmp_path, capsys):
    cfg = write(tmp_path, '{\n  "version": 1,\n  "bundle": {"degres": [0]}\n}')
    assert cli.main(["run", str(cfg), "--out", str(tmp_path / "o")]) == 1
    assert "line 3" in capsys.readouterr().err
    assert not (tmp_path / "o").exists()


def test_cli_numerical_failure(tmp_path, capsys):
    # cond(h) for L_8 + L_-8 without renormalisation passes the breakdown limit
    text = config_text(base={"kind": "flat", "dim": 1, "grid": 8}, bundle={"degrees": [8, -8]},
                       integrator={"t_end": 1.0}, monitors={"every": 0.1},
                       outputs={"name": "boom", "formats": ["jsonl", "csv"]})
    cfg = write(tmp_path, text)
    out = tmp_path / "o"
    assert cli.main(["run", str(cfg), "--out", str(out)]) == 2
    assert "numerical failure" in capsys.readouterr().err
    dump = json.loads((out / "boom.failure.json").read_text())
    assert dump["error"] == "NumericalBreakdown"
    assert dump["cond"] > 1e12
    assert (out / "boom.final.npz").exists()
    assert not (out / "boom.jsonl").exists() and not (out / "boom.csv").exists()


def test_cli_usage_errors(capsys):
    with pytest.raises(SystemExit) as info:
        cli.main([])
    assert info.value.code == 1
    with pytest.raises(SystemExit) as info:
        cli.main(["hn-type", "det", "1"])
    assert info.value.code == 1
    assert cli.main(["hn-type", "ext", "x", "1", "0"]) == 1
    assert cli.main(["hn-type", "ext", "3", "1", "0"]) == 1
    assert cli.main(["hn-type", "tensor", "(1 0)"]) == 1


@pytest.mark.parametrize("argv,lines", [
    (["ext", "2", "3", "1", "0"], ["4", "3", "1"]),
    (["tensor", "(3 1) (2 0)"], ["5", "3", "3", "1"]),
    (["tensor", "(3", "1)", "(2", "0)"], ["5", "3", "3", "1"]),
    (["tensor", "3,1", "2,0"], ["5", "3", "3", "1"]),
    (["sym", "2", "1", "0"], ["2", "1", "0"]),
    (["sym", "3", "0.5", "0.5"], ["1.5", "1.5", "1.5", "1.5"]),
    (["power", "2", "1", "0"], ["2", "1", "1", "0"]),
])
def test_cli_hn_type(argv, lines, capsys):
    assert cli.main(["hn-type"] + argv) == 0
    assert capsys.readouterr().out.split() == lines


def test_cli_accept_list_and_unknown(capsys):
    assert cli.main(["accept", "--list"]) == 0
    listing = capsys.readouterr().out
    assert "quick" in listing and "all" in listing
    assert cli.main(["accept", "nope"]) == 1
    assert "quick" in capsys.readouterr().err
    assert cli.main(["accept"]) == 1


def test_cli_accept_failure_exit_code(monkeypatch, tmp_path, capsys):
    def fake(name, cache=None, report=None):
        r = CriterionResult(99, "always fails")
        r.add("x", 1.0, 0.0)
        if report:
            report(r)
        return [r]

    monkeypatch.setattr(acceptance, "run_suite", fake)
    out = tmp_path / "rep.json"
    assert cli.main(["accept", "quick", "--json", str(out)]) == 3
    assert "[FAIL] criterion 99" in capsys.readouterr().err
    rep = json.loads(out.read_text())
    assert rep["results"][0]["pass"] is False


def test_criterion_result_summary():
    r = CriterionResult(4, "demo")
    r.add("a", 1e-9, 1e-6)
    r.add("b", 0.0, 0.0, "==")
    r.add("c", 2.0, 1.0, ">=")
    assert r.passed and r.summary().startswith("[PASS] criterion 4: demo")
    r.add("d", math.nan, 1.0)
    assert not r.passed
    assert "[FAIL]" in r.summary()
    d = r.to_dict()
    assert d["criterion"] == 4 and len(d["checks"]) == 4
    assert isinstance(r.checks[0], Check)


def test_cli_accept_quick(capsys):
    assert cli.main(["accept", "quick"]) == 0
    err = capsys.readouterr().err
    assert err.count("[PASS]") == 4


# -- plots ----------------------------------------------------------------------

def test_render_trace_groups():
    rows = [json.loads(x) for x in (GOLDEN / "small_run.jsonl").read_text().splitlines()]
    svgs = render_trace(rows, "g")
    assert set(svgs) <= set(GROUPS) and {"extremes", "energy", "hym"} <= set(svgs)
    assert all(s.lstrip().startswith("<?xml") for s in svgs.values())
    assert render_trace(rows, "g") == svgs
    assert render_trace([], "g") == {}


def test_plot_missing_file(tmp_path):
    assert cli.main(["plot", str(tmp_path / "none.jsonl")]) == 1
    with pytest.raises(OSError):
        plot_file(tmp_path / "none.jsonl")


def test_golden_config_is_valid():
    cfg = load(GOLDEN / "small_run.json")
    assert cfg.integrator.renormalize
