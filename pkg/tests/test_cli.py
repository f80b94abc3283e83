import csv
import json

import pytest

from priocoord.cli import (ConfigError, SchemaError, load_scenario, main, read_trace,
                           write_trace)

SMALL = """
[layout]
preset = crossroads

[robots]
count = {count}

[sweep]
densities = {densities}
seeds = 1, 2
"""


@pytest.fixture
def scenario(tmp_path):
    p = tmp_path / "small.ini"
    p.write_text(SMALL.format(count=15, densities="5, 2"))
    return p


@pytest.fixture
def run_dir(tmp_path, scenario):
    out = tmp_path / "run"
    assert main(["run", str(scenario), "-o", str(out)]) == 0
    return out


def test_run_writes_outputs(run_dir):
    for name in ("trace.csv", "edges.csv", "metrics.json"):
        assert (run_dir / name).is_file()
    m = json.loads((run_dir / "metrics.json").read_text())
    assert m["completed"] == 15 and m["collisions"] == 0 and m["density"] == 5.0


def test_missing_scenario_exit_2(tmp_path, capsys):
    assert main(["run", str(tmp_path / "nope.ini"), "-o", str(tmp_path)]) == 2
    assert "not found" in capsys.readouterr().err


def test_density_zero_rejected_at_parse(tmp_path):
    p = tmp_path / "bad.ini"
    p.write_text(SMALL.format(count=5, densities="0, 5"))
    with pytest.raises(ConfigError):
        load_scenario(p)
    assert main(["sweep", str(p), "-o", str(tmp_path / "o")]) == 2


def test_bad_points_rejected(tmp_path):
    p = tmp_path / "bad.ini"
    p.write_text("[path:a]\npoints = 0,0; 1\n")
    with pytest.raises(ConfigError):
        load_scenario(p)


def test_custom_paths(tmp_path):
    p = tmp_path / "two.ini"
    p.write_text("[path:a]\npoints = 0,0; 60,0\nspawn = 0\nexit = 50\n"
                 "[path:b]\npoints = 30,-30; 30,30\nspawn = 0\nexit = 50\n")
    cfg = load_scenario(p)
    assert cfg.layout.lane_ids == ("a", "b")
    assert cfg.layout.lanes["b"].exit == 50.0


def test_verify_gives_identical_trace(tmp_path, scenario, run_dir):
    out = tmp_path / "verified"
    assert main(["run", str(scenario), "-o", str(out), "--verify"]) == 0
    assert (out / "trace.csv").read_bytes() == (run_dir / "trace.csv").read_bytes()


def test_trace_round_trip_is_exact(tmp_path, scenario, run_dir):
    cfg = load_scenario(scenario)
    fp, meta, rows = read_trace(run_dir / "trace.csv")
    again = tmp_path / "again.csv"
    write_trace(again, rows, cfg.layout, meta)
    assert again.read_bytes() == (run_dir / "trace.csv").read_bytes()


def test_check_accepts_planner_trace(scenario, run_dir, capsys):
    assert main(["check", str(run_dir / "trace.csv"), str(scenario)]) == 0
    assert capsys.readouterr().out.startswith("ok:")


def nudge(src, dst, dx):
    lines = src.read_text().splitlines(keepends=True)
    for k, line in enumerate(lines):
        if line[0].isdigit():
            rec = next(csv.reader([line]))
            if rec[5] == "A" and int(rec[0]) > 20:
                rec[3] = repr(float(rec[3]) + dx)
                lines[k] = ",".join(rec) + "\n"
                break
    dst.write_text("".join(lines))


def test_check_rejects_nudged_trace(tmp_path, scenario, run_dir, capsys):
    bad = tmp_path / "bad" / "trace.csv"
    bad.parent.mkdir()
    nudge(run_dir / "trace.csv", bad, 1e-6)
    (bad.parent / "edges.csv").write_bytes((run_dir / "edges.csv").read_bytes())
    assert main(["check", str(bad), str(scenario)]) == 1
    assert "dynamics give" in capsys.readouterr().out


def test_check_wrong_scenario_exit_2(tmp_path, run_dir):
    other = tmp_path / "other.ini"
    other.write_text("[layout]\npreset = crossroads\nlane_offset = 4\n")
    assert main(["check", str(run_dir / "trace.csv"), str(other)]) == 2


def test_check_not_a_trace(tmp_path, scenario):
    junk = tmp_path / "junk.csv"
    junk.write_text("a,b\n1,2\n")
    with pytest.raises(SchemaError):
        read_trace(junk)
    assert main(["check", str(junk), str(scenario)]) == 2


def test_sweep_rows(tmp_path, scenario):
    out = tmp_path / "sweep"
    assert main(["sweep", str(scenario), "-o", str(out)]) == 0
    with open(out / "sweep.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert [float(r["density"]) for r in rows] == [2.0, 5.0]
    assert all(r["increase_std"] != "" and r["seeds"] == "2" for r in rows)
    assert len(json.loads((out / "metrics.json").read_text())["runs"]) == 4


def test_shipped_scenario_parses():
    from pathlib import Path
    cfg = load_scenario(Path(__file__).parents[1] / "scenarios" / "crossroads.ini")
    assert cfg.robots == 500 and cfg.densities == (1.0, 2.0, 5.0, 10.0)
    assert cfg.acyclic_priorities
