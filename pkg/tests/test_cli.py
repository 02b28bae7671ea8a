import json

import pytest
import yaml

from harnacklab import cli
from harnacklab.errors import ConfigError
from harnacklab.heat import read_binary
from harnacklab.scenario import build_scenario, bundled_names, load_config, parse_text


def _run(argv):
    return cli.main(argv)


def test_list_and_describe(capsys):
    assert _run(["list-scenarios"]) == 0
    out = capsys.readouterr().out
    for name in ("gaussian_sharpness", "ricci_flow_s2", "circle_cosine", "ou_line"):
        assert name in out
    assert _run(["describe", "hamilton_1_14"]) == 0
    assert "log(A/u)" in capsys.readouterr().out
    assert _run(["describe", "no_such_check"]) != 0


def test_every_bundled_scenario_builds():
    for name in bundled_names():
        scen = build_scenario(load_config(name))
        assert scen.name == name


def test_missing_chart_is_named(tmp_path, capsys):
    p = tmp_path / "c.yaml"
    p.write_text("schema_version: 1\nname: x\nfamily: {preset: static_flat}\nchecks: [hamilton_1_13]\n")
    assert _run(["run", str(p)]) == 2
    assert "'chart'" in capsys.readouterr().err


def test_parse_error_reports_line():
    with pytest.raises(ConfigError, match="line 3"):
        parse_text("schema_version: 1\nname: [x\nchart: {}\n")


@pytest.mark.parametrize("patch,field", [
    ({"schema_version": 2}, "schema_version"),
    ({"grid": {"n_x": 10, "t_range": [1.0, 0.0], "n_steps": 4}}, "grid.t_range"),
    ({"checks": ["nope"]}, "nope"),
    ({"flow": {"K": -1.0}}, "flow"),
    ({"chart": {"kind": "cube"}}, "chart.kind"),
])
def test_config_validation(tmp_path, capsys, patch, field):
    tree = load_config("circle_cosine")
    tree.update(patch)
    p = tmp_path / "c.yaml"
    p.write_text(yaml.safe_dump(tree))
    assert _run(["run", str(p)]) == 2
    assert field in capsys.readouterr().err


def test_family_window_checked(tmp_path, capsys):
    tree = load_config("ricci_flow_s2")
    tree["grid"]["t_range"] = [0.0, 0.7]
    p = tmp_path / "c.yaml"
    p.write_text(yaml.safe_dump(tree))
    assert _run(["run", str(p)]) == 2
    assert "validity window" in capsys.readouterr().err


def _small_circle(tmp_path):
    tree = load_config("circle_cosine")
    tree["grid"].update(n_x=64, n_steps=100, store_every=2)
    tree["mc"].update(n_paths=5000, record_every=0)
    p = tmp_path / "small.yaml"
    p.write_text(yaml.safe_dump(tree))
    return p


def test_run_writes_deterministic_report(tmp_path, monkeypatch):
    cfg = _small_circle(tmp_path)
    monkeypatch.setenv(cli.REPORT_DIR_ENV, str(tmp_path / "reports"))
    assert _run(["run", str(cfg)]) == 0
    first = json.loads((tmp_path / "reports" / "circle_cosine" / "report.json").read_text())
    assert _run(["run", str(cfg), "--threads", "3", "--out", str(tmp_path / "again")]) == 0
    second = json.loads((tmp_path / "again" / "report.json").read_text())
    first.pop("generated_at")
    second.pop("generated_at")
    assert first == second
    assert first["summary"]["passed"]
    ids = {c["check_id"] for c in first["checks"]}
    assert {"hamilton_1_13", "integrated_harnack", "feynman_kac", "martingale_inequality"} <= ids
    run = tmp_path / "reports" / "circle_cosine"
    assert (run / "margins" / "hamilton_1_13.csv").read_text().startswith("inequality_id,t,x,margin")
    assert (run / "checks.csv").exists() and (run / "terminal.csv").exists()


def test_seed_override_changes_mc_only(tmp_path):
    cfg = _small_circle(tmp_path)
    assert _run(["run", str(cfg), "--out", str(tmp_path / "a")]) == 0
    assert _run(["run", str(cfg), "--seed", "5", "--out", str(tmp_path / "b")]) == 0
    a = json.loads((tmp_path / "a" / "report.json").read_text())
    b = json.loads((tmp_path / "b" / "report.json").read_text())
    ca = {c["label"]: c for c in a["checks"]}
    cb = {c["label"]: c for c in b["checks"]}
    assert ca["hamilton_1_13"]["worst_margin"] == cb["hamilton_1_13"]["worst_margin"]
    assert ca["feynman_kac"]["worst_margin"] != cb["feynman_kac"]["worst_margin"]


def test_failing_check_gives_exit_1(tmp_path):
    tree = load_config("expanding_circle")
    tree["flow"]["K"] = 0.2  # too small for the variant condition, so the Li-Yau checks are refused
    tree["grid"].update(n_x=64, n_steps=40, store_every=1)
    p = tmp_path / "c.yaml"
    p.write_text(yaml.safe_dump(tree))
    assert _run(["run", str(p), "--out", str(tmp_path / "r")]) == 1
    doc = json.loads((tmp_path / "r" / "report.json").read_text())
    li = next(c for c in doc["checks"] if c["check_id"] == "li_yau_compact")
    assert not li["passed"] and "CertificateError" in li["detail"]["error"]


def test_dump_field(tmp_path):
    cfg = _small_circle(tmp_path)
    _run(["run", str(cfg), "--out", str(tmp_path / "r")])
    assert _run(["dump-field", str(tmp_path / "r"), "csv", "-o", str(tmp_path / "f.csv")]) == 0
    lines = (tmp_path / "f.csv").read_text().splitlines()
    times, x, u = read_binary(tmp_path / "r" / "field.bin")
    assert lines[0] == "node,t,x,u"
    assert len(lines) == 1 + u.size
    assert _run(["dump-field", str(tmp_path / "r"), "binary", "-o", str(tmp_path / "f.bin")]) == 0
    assert (tmp_path / "f.bin").read_bytes() == (tmp_path / "r" / "field.bin").read_bytes()
    assert _run(["dump-field", str(tmp_path / "missing"), "csv"]) == 2


def test_tolerance_scale_tightens(tmp_path):
    tree = load_config("gaussian_sharpness")
    tree["grid"].update(n_x=401, n_steps=90)
    tree["checks"] = [{"id": "li_yau_sharpness", "tolerance": 0.1}]
    p = tmp_path / "g.yaml"
    p.write_text(yaml.safe_dump(tree))
    assert _run(["run", str(p), "--out", str(tmp_path / "a")]) == 0
    assert _run(["run", str(p), "--tolerance-scale", "0.01", "--out", str(tmp_path / "b")]) == 1


def test_nonpositive_tolerance_rejected(tmp_path, capsys):
    tree = load_config("perelman_mass")
    tree["checks"] = [{"id": "mass_conservation", "tolerance": 0.0}]
    p = tmp_path / "c.yaml"
    p.write_text(yaml.safe_dump(tree))
    assert _run(["run", str(p)]) == 2
    assert "tolerance" in capsys.readouterr().err


def test_batch_run_matches_single_runs(tmp_path, monkeypatch):
    monkeypatch.setenv(cli.REPORT_DIR_ENV, str(tmp_path / "batch"))
    assert _run(["run", "perelman_mass", "identities", "--jobs", "2"]) == 0
    monkeypatch.setenv(cli.REPORT_DIR_ENV, str(tmp_path / "single"))
    assert _run(["run", "perelman_mass"]) == 0
    a = json.loads((tmp_path / "batch" / "perelman_mass" / "report.json").read_text())
    b = json.loads((tmp_path / "single" / "perelman_mass" / "report.json").read_text())
    a.pop("generated_at")
    b.pop("generated_at")
    assert a == b
    assert (tmp_path / "batch" / "identities" / "report.json").exists()


@pytest.mark.slow
@pytest.mark.parametrize("name", bundled_names())
def test_bundled_scenario_passes(tmp_path, name):
    assert _run(["run", name, "--out", str(tmp_path / name)]) == 0
