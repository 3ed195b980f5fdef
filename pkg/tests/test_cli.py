import json

import pytest

from lpkinetic import cli
from lpkinetic.experiments import CRITERIA, REGISTRY, resolve_params


def run(argv, capsys):
    code = cli.main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_registry_covers_every_criterion():
    assert sorted(CRITERIA) == list(range(1, 13))
    for k, eid in CRITERIA.items():
        assert REGISTRY[eid].criterion == k


def test_list_shows_every_experiment(capsys):
    code, out, _ = run(["list"], capsys)
    assert code == 0
    for eid in REGISTRY:
        assert eid in out
    code, out, _ = run(["list", "-v"], capsys)
    assert code == 0 and "default=" in out


def test_run_writes_report_and_tables(tmp_path, capsys):
    out = tmp_path / "nb3-scaling"
    code, text, _ = run(["run", "--experiment", "nb3-scaling", "--out", str(out)], capsys)
    assert code == 0 and text.startswith("PASS")
    rep = json.loads((out / "report.json").read_text())
    for key in ("schema_version", "experiment", "criterion", "title", "reference", "measured",
                "rules", "passed", "wall_time", "config", "build"):
        assert key in rep
    assert rep["passed"] and rep["criterion"] == 3
    csvs = list(out.glob("*.csv"))
    assert csvs and all(p.read_text().startswith("# nb3-scaling") for p in csvs)


def test_rerun_is_byte_identical(tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    run(["run", "--experiment", "gf02-heat-decay", "--beta", "0.5", "--out", str(a)], capsys)
    run(["run", "--experiment", "gf02-heat-decay", "--beta", "0.5", "--out", str(b)], capsys)
    names = sorted(p.name for p in a.iterdir() if p.suffix in (".csv", ".dat"))
    assert names
    for n in names:
        assert (a / n).read_bytes() == (b / n).read_bytes()


def test_config_file_and_overrides(tmp_path, capsys):
    conf = tmp_path / "run.conf"
    conf.write_text("# stable sampler\nexperiment = stable-sampler\nn = 20000  # draws\n")
    out = tmp_path / "o"
    code, _, _ = run(["run", str(conf), "--out", str(out), "--seed=3"], capsys)
    assert code in (0, 1)
    rep = json.loads((out / "report.json").read_text())
    assert rep["config"]["n"] == "20000" and rep["config"]["seed"] == "3"


def test_output_directory_must_be_empty(tmp_path, capsys):
    out = tmp_path / "busy"
    out.mkdir()
    (out / "old.txt").write_text("x")
    code, _, err = run(["run", "--experiment", "nb3-scaling", "--out", str(out)], capsys)
    assert code == 2 and "not empty" in err
    code, _, _ = run(["run", "--experiment", "nb3-scaling", "--out", str(out), "--force"], capsys)
    assert code == 0


@pytest.mark.parametrize("argv,needle", [
    (["run"], "experiment"),
    (["run", "--experiment", "nope"], "nope"),
    (["run", "--experiment", "nb3-scaling", "--bogus", "1"], "bogus"),
    (["run", "--experiment", "nb3-scaling", "--alpha"], "alpha"),
    (["run", "--experiment", "gs1-commutator", "--gs1", "0.4/0.3"], "gs1"),
    (["run", "--experiment", "ev11-moments", "--tol", "abc"], "tol"),
    (["run", "--experiment", "nb3-scaling", "stray"], "stray"),
])
def test_configuration_errors_exit_2(argv, needle, tmp_path, capsys):
    code, _, err = run(argv + ["--out", str(tmp_path / "x")], capsys)
    assert code == 2
    assert needle in err


def test_config_file_errors(tmp_path, capsys):
    bad = tmp_path / "bad.conf"
    bad.write_text("experiment = nb3\nexperiment = gf02\n")
    code, _, err = run(["run", "--config", str(bad)], capsys)
    assert code == 2 and "duplicate" in err
    bad.write_text("just words\n")
    code, _, err = run(["run", "--config", str(bad)], capsys)
    assert code == 2 and "key = value" in err
    code, _, err = run(["run", "--config", str(tmp_path / "missing.conf")], capsys)
    assert code == 2 and "cannot read" in err


def test_failing_rule_exits_1(tmp_path, capsys):
    # an impossible tolerance makes the slope rule fail
    code, text, _ = run(["run", "--experiment", "gf02-heat-decay", "--beta", "0", "--tol", "1e-9",
                         "--out", str(tmp_path / "f")], capsys)
    assert code == 1 and text.startswith("FAIL")


def test_fast_parameters_differ_from_full():
    exp = REGISTRY["sde-uniqueness"]
    assert resolve_params(exp, {}, fast=True)["n_seeds"] < resolve_params(exp, {})["n_seeds"]


def test_parse_overrides():
    assert cli.parse_overrides(["--a-b", "1", "--c=2"]) == {"a_b": "1", "c": "2"}
    with pytest.raises(cli.ConfigError):
        cli.parse_overrides(["--a"])


def test_fast_suite_layout(tmp_path, capsys, monkeypatch):
    # run the suite over two cheap experiments only
    monkeypatch.setattr(cli, "CRITERIA", {1: "gf02-heat-decay", 3: "nb3-scaling"})
    code, text, _ = run(["suite", "fast", "--out", str(tmp_path / "s")], capsys)
    assert code == 0
    summary = json.loads((tmp_path / "s" / "suite.json").read_text())
    assert summary["level"] == "fast"
    assert [r["experiment"] for r in summary["results"]] == ["gf02-heat-decay", "nb3-scaling"]
    assert (tmp_path / "s" / "nb3-scaling" / "report.json").exists()
    code, _, err = run(["suite", "fast", "--out", str(tmp_path / "s")], capsys)
    assert code == 2 and "not empty" in err
