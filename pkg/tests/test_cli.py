import json

import pytest

from nvgates.cli import bundled_configs, main, resolve_config
from nvgates.scenarios import ConfigError, load_config, report_diff

SMALL_CENSUS = """
scenario = "sample_census"
label = "tiny"
seed = 5

[census]
trials = 200
abundance = "1.1 %"
r_min = "0 nm"
r_max = "2.5 nm"
mode = "isolated"

[[census.criteria]]
name = "loose"
dA_min = "2 kHz_x2pi"
A_max = "45 kHz_x2pi"
quoted = "5 %"
factor = 100
"""


@pytest.fixture
def tiny(tmp_path):
    p = tmp_path / "tiny.toml"
    p.write_text(SMALL_CENSUS)
    return p


def test_bundled_configs_validate(capsys):
    names = bundled_configs()
    assert {"fig1a", "fig1b", "fig2a", "fig2b", "table1", "tableS1", "figS1", "tableS2",
            "census"} <= set(names)
    for name in names:
        assert main(["validate", name]) == 0
    assert main(["list"]) == 0
    assert "census" in capsys.readouterr().out


def test_unitless_number_rejected(tmp_path, capsys):
    p = tmp_path / "bad.toml"
    p.write_text(SMALL_CENSUS.replace('r_max = "2.5 nm"', "r_max = 2.5"))
    assert main(["validate", str(p)]) == 2
    assert "census.r_max" in capsys.readouterr().err


def test_unknown_field_rejected(tmp_path):
    p = tmp_path / "bad.toml"
    p.write_text(SMALL_CENSUS.replace("trials = 200", "trials = 200\ntrails = 3"))
    assert main(["validate", str(p)]) == 2


def test_empty_grid_is_config_error(tmp_path, capsys):
    src = (resolve_config("fig1a")).read_text()
    p = tmp_path / "empty.toml"
    p.write_text(src.replace("points = 11", "points = 0"))
    assert main(["validate", str(p)]) == 2
    assert "frequency grid is empty" in capsys.readouterr().err
    with pytest.raises(ConfigError, match="empty"):
        load_config(p)


def test_missing_config_exit_code(capsys):
    assert main(["validate", "no_such_config"]) == 2
    assert main(["run", "census", "--threads", "0"]) == 2


def test_rerun_is_reproducible(tiny, tmp_path, capsys):
    outs = []
    for k in (1, 2):
        out = tmp_path / f"run{k}"
        assert main(["run", str(tiny), "--out", str(out)]) == 0
        outs.append(out / "tiny")
    a, b = (o / "census.csv" for o in outs)
    assert a.read_bytes() == b.read_bytes()
    ra, rb = (json.loads((o / "report.json").read_text()) for o in outs)
    for r in (ra, rb):
        r.pop("wall_time_s")
    assert ra == rb
    assert ra["seed"] == 5 and ra["status"] == "pass"
    assert main(["diff", str(outs[0] / "report.json"), str(outs[1] / "report.json")]) == 0


def test_seed_override_changes_result(tiny, tmp_path):
    assert main(["run", str(tiny), "--out", str(tmp_path / "a")]) == 0
    assert main(["run", str(tiny), "--out", str(tmp_path / "b"), "--seed", "6"]) == 0
    ra = json.loads((tmp_path / "a" / "tiny" / "report.json").read_text())
    rb = json.loads((tmp_path / "b" / "tiny" / "report.json").read_text())
    assert rb["seed"] == 6
    assert ra["quantities"] != rb["quantities"]


def _report(values):
    return {"scenario": "gate_table", "label": "t",
            "quantities": dict(values)}


def test_diff_logic():
    gold = _report({"F1": 0.99, "F2": 0.98})
    ok, _ = report_diff(_report({"F1": 0.99, "F2": 0.98}), gold)
    assert ok
    ok, lines = report_diff(_report({"F1": 0.99, "F2": 0.96}), gold, {"F2": 0.01})
    assert not ok
    assert any(line.startswith("FAIL F2") for line in lines)
    ok, lines = report_diff(_report({"F1": 0.99}), gold)
    assert not ok
    assert any(line.startswith("FAIL F2: absent") for line in lines)
    with pytest.raises(ValueError):
        report_diff({**gold, "scenario": "rwa_study"}, gold)


def test_diff_cli(tmp_path):
    a, b = tmp_path / "a.json", tmp_path / "b.json"
    a.write_text(json.dumps(_report({"F1": 0.99})))
    b.write_text(json.dumps(_report({"F1": 0.97})))
    assert main(["diff", str(a), str(a)]) == 0
    assert main(["diff", str(a), str(b), "--tol", "F1=0.01"]) == 1
    assert main(["diff", str(a), str(b), "--tol", "F1=0.05"]) == 0
    assert main(["diff", str(a), str(b), "--tol", "garbage"]) == 2
