import json
import subprocess
import sys

import pytest

from kahlerlab.cli import ConfigError, config_from_args, main, parse_grid, read_config_file
from kahlerlab.report import read_reports


def run(tmp_path, *args, name="out"):
    out = tmp_path / name
    return main([*args, "--out", str(out)]), out


def test_parse_grid_aliases():
    assert parse_grid("torus2d:64").topology == "torus-2d"
    assert parse_grid("torus-4d:12").n == 2
    assert parse_grid("sphere:256").resolution == 256
    for bad in ("torus2d", "cube:8", "torus2d:300", "torus4d:20", "torus2d:x"):
        with pytest.raises(ConfigError):
            parse_grid(bad)


def test_verify_kahler_passes(tmp_path, capsys):
    code, out = run(tmp_path, "verify", "--suite", "kahler", "--grid", "torus2d:16", "--count", "2")
    assert code == 0
    reports = read_reports(out / "summary.json")
    assert len(reports) == 10 and all(reports)
    assert "10/10 checks passed" in capsys.readouterr().out


def test_distance_writes_table(tmp_path):
    code, out = run(tmp_path, "distance", "--grid", "torus2d:16", "--count", "5", "--seed", "3")
    assert code == 0
    rows = (out / "distances.csv").read_text().splitlines()
    assert rows[0] == "index,dV,dtildeV,ratio,pass" and len(rows) == 6


def test_bump_distance(tmp_path):
    code, out = run(tmp_path, "distance", "--pair", "bump", "--grid", "torus2d:64")
    assert code == 0
    names = [r.check_name for r in read_reports(out / "summary.json")]
    assert names[-1] == "bump_family_ratio"


def test_geodesic_command(tmp_path):
    code, out = run(tmp_path, "geodesic", "--grid", "sphere:128", "--seed", "2", "--count", "33")
    assert code == 0
    assert (out / "geodesic.csv").read_text().startswith("t,")


def test_flow_command(tmp_path):
    code, out = run(tmp_path, "flow", "--grid", "sphere:64", "--initial", "mode:2", "--t-end", "12",
                    "--dt0", "0.01")
    assert code == 0
    header = (out / "trajectory.csv").read_text().splitlines()[0]
    assert header == "t,s_minus_1_l2,phidot_sup,phi_c0,dC_length"
    conv = read_reports(out / "summary.json")[0]
    assert conv.details["status"] == "converged"


def test_truncated_flow_is_inconclusive_but_coherent(tmp_path):
    code, out = run(tmp_path, "flow", "--grid", "sphere:64", "--t-end", "0.5", "--dt0", "0.01")
    assert code == 0
    assert read_reports(out / "summary.json")[0].details["status"] == "inconclusive"


def test_equivalence_command(tmp_path):
    code, out = run(tmp_path, "equivalence", "--grid", "torus2d:16", "--count", "2")
    assert code == 0
    assert len(read_reports(out / "summary.json")) == 2


def test_failed_check_exits_one(tmp_path):
    # an impossible tolerance makes the identity checks fail
    code, _ = run(tmp_path, "verify", "--suite", "kahler", "--grid", "torus2d:16", "--count", "1",
                  "--tol", "-1")
    assert code == 1


@pytest.mark.parametrize("args", [
    ["verify", "--grid", "torus2d:17"],
    ["verify", "--grid", "klein:16"],
    ["verify", "--suite", "krf", "--grid", "torus2d:16"],
    ["flow", "--grid", "torus2d:16"],
    ["flow", "--grid", "sphere:64", "--initial", "wobble"],
    ["flow", "--grid", "sphere:64", "--t-end", "-1"],
    ["nonsense"],
])
def test_usage_errors_exit_two(tmp_path, args):
    code, _ = run(tmp_path, *args)
    assert code == 2


def test_positivity_abort_exits_three(tmp_path, capsys):
    code, _ = run(tmp_path, "flow", "--grid", "sphere:64", "--amplitude", "2", "--initial", "mode:2")
    assert code == 3
    assert "numerical abort" in capsys.readouterr().err


def test_config_file_and_overrides(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# example\ngrid = torus2d:16\nseed = 5\ncount = 4\npair = random\n")
    values = read_config_file(cfg)
    assert values == {"grid": "torus2d:16", "seed": 5, "count": 4, "pair": "random"}
    c = config_from_args(["distance", "--config", str(cfg), "--seed", "9"])
    assert c.seed == 9 and c.count == 4 and c.grid == "torus2d:16"


def test_config_unknown_key_names_line(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("seed = 1\nresolution = 64\n")
    with pytest.raises(ConfigError, match=r"bad.cfg:2.*resolution"):
        read_config_file(cfg)
    code, _ = run(tmp_path, "verify", "--config", str(cfg))
    assert code == 2


def test_config_bad_value(tmp_path):
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("seed = many\n")
    with pytest.raises(ConfigError, match="seed"):
        read_config_file(cfg)


def test_runs_are_byte_identical(tmp_path):
    args = ["distance", "--grid", "torus2d:16", "--count", "5", "--seed", "11"]
    run(tmp_path, *args, name="a")
    run(tmp_path, *args, name="b")
    for f in ("summary.json", "summary.txt", "distances.csv"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_summary_json_schema(tmp_path):
    _, out = run(tmp_path, "verify", "--suite", "densities", "--grid", "torus2d:16", "--count", "3")
    data = json.loads((out / "summary.json").read_text())
    for entry in data:
        assert {"check_name", "lhs", "rhs", "bound", "tolerance", "pass"} <= set(entry)


def test_console_module_entry(tmp_path):
    proc = subprocess.run([sys.executable, "-m", "kahlerlab.cli", "verify", "--suite", "kahler",
                           "--grid", "torus2d:16", "--count", "1", "--out", str(tmp_path / "o")],
                          capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert "5/5 checks passed" in proc.stdout
