import csv
import json

import numpy as np
import pytest

from conftest import draw
from circmode.cli import main, read_angles


@pytest.fixture
def sample_file(tmp_path):
    path = tmp_path / "angles.txt"
    np.savetxt(path, draw("M11", 80, 3).angles)
    return path


def run(capsys, argv):
    code = main(argv)
    return code, capsys.readouterr()


def test_read_angles_text_csv_and_degrees(tmp_path):
    (tmp_path / "a.txt").write_text("0.5 1.0\n2.0,3.0\n")
    assert read_angles(tmp_path / "a.txt").tolist() == [0.5, 1.0, 2.0, 3.0]
    (tmp_path / "b.csv").write_text("id,deg\n1,90\n2,180\n")
    assert read_angles(tmp_path / "b.csv", "deg", degrees=True) == pytest.approx([np.pi / 2,
                                                                                 np.pi])


def test_test_command_prints_result(capsys, sample_file):
    code, out = run(capsys, ["test", str(sample_file), "--k", "1", "--B", "20", "--seed", "4"])
    assert code == 0
    res = json.loads(out.out)
    assert res["k"] == 1 and res["B"] == 20 and 0.0 <= res["pvalue"] <= 1.0


def test_seed_precedence_flag_over_config_over_environment(capsys, sample_file, tmp_path,
                                                           monkeypatch):
    def pvalue(*extra):
        code, out = run(capsys, ["test", str(sample_file), "--k", "1", "--B", "15", *extra])
        assert code == 0
        return json.loads(out.out)

    baseline = {s: pvalue("--seed", str(s)) for s in (1, 2, 3)}
    monkeypatch.setenv("CIRCMODE_SEED", "1")
    assert pvalue() == baseline[1]
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"seed": 2}))
    assert pvalue("--config", str(cfg)) == baseline[2]
    assert pvalue("--config", str(cfg), "--seed", "3") == baseline[3]


def test_watson_method(capsys, sample_file):
    code, out = run(capsys, ["test", str(sample_file), "--method", "watson", "--B", "10"])
    assert code == 0 and json.loads(out.out)["method"] == "watson-u2"


def test_errors_exit_with_status_two(capsys, tmp_path):
    code, out = run(capsys, ["test", str(tmp_path / "missing.txt")])
    assert code == 2 and out.err.startswith("error:")
    bad = tmp_path / "one.txt"
    bad.write_text("1.0\n")
    assert run(capsys, ["test", str(bad), "--k", "3"])[0] == 2


def test_study_command_writes_tables(capsys, tmp_path):
    code, out = run(capsys, ["study", "--models", "M1", "--n", "30", "--reps", "2", "--B", "5",
                             "--seed", "1", "--csv", str(tmp_path / "t.csv"),
                             "--text", str(tmp_path / "t.txt")])
    assert code == 0 and "M1" in out.out
    rows = list(csv.DictReader(open(tmp_path / "t.csv")))
    assert len(rows) == 3 and {r["model"] for r in rows} == {"M1"}
    assert (tmp_path / "t.txt").read_text() == out.out


def test_patches_command(capsys, tmp_path):
    raster = tmp_path / "r.txt"
    raster.write_text("a a b\na . b\nc c b\n")
    code, out = run(capsys, ["patches", "--raster", str(raster), "--output",
                             str(tmp_path / "p.csv")])
    assert code == 0 and out.out.startswith("3 patches")
    rows = list(csv.DictReader(open(tmp_path / "p.csv")))
    assert len(rows) == 8


def test_fixture_and_pipeline_with_relative_config(capsys, tmp_path, monkeypatch):
    d = tmp_path / "fx"
    assert run(capsys, ["fixture", str(d), "--n", "100", "--seed", "2"])[0] == 0
    cfg = json.loads((d / "config.json").read_text())
    assert cfg["events"] == "events.csv" and cfg["output"] == "out"
    monkeypatch.chdir(tmp_path)  # paths must resolve against the config, not the cwd
    code, out = run(capsys, ["pipeline", "--config", str(d / "config.json"), "--B", "10",
                             "--alpha-c", "0.05", "--alpha-r", "0.05"])
    assert code == 0
    summary = json.loads(out.out)
    assert summary["cells"] == 400 and summary["failed"] == 0
    for name in ("cells.csv", "decisions.geojson", "manifest.json"):
        assert (d / "out" / name).exists()
    manifest = json.loads((d / "out" / "manifest.json").read_text())
    assert manifest["config"]["B"] == 10


def test_pipeline_flag_paths_and_empty_events(capsys, tmp_path):
    events = tmp_path / "e.csv"
    events.write_text("lat,lon,day_of_year,year\n")
    code, out = run(capsys, ["pipeline", "--events", str(events), "--output",
                             str(tmp_path / "o"), "--cell-size", "0.5"])
    assert code == 2 and "error" in out.err
    assert not (tmp_path / "o").exists()
