import json

import numpy as np
import pytest

from kahlerlab import sphere_grid, torus_grid
from kahlerlab.ebin import MetricPath
from kahlerlab.fieldio import read_field, read_metric_path, write_field, write_metric_path, write_table
from kahlerlab.report import Report, equality_report, read_reports, relative_gap, write_reports


def test_report_json_roundtrip(tmp_path):
    r = Report("demo", np.float64(1.5), 2.0, None, 1e-8, np.bool_(False),
               {"series": np.arange(3.0), "rate": np.inf, "count": np.int64(4)})
    d = json.loads(r.to_json())
    assert d["pass"] is False
    assert d["details"]["series"] == [0.0, 1.0, 2.0]
    assert d["details"]["rate"] == "inf"
    write_reports(tmp_path / "s.json", [r])
    back = read_reports(tmp_path / "s.json")[0]
    assert back.check_name == "demo" and back.lhs == 1.5 and not back.passed


def test_report_truthiness_and_line():
    ok = equality_report("same", 1.0, 1.0 + 1e-12, 1e-10)
    assert ok and ok.line().startswith("[PASS] same")
    bad = equality_report("different", 1.0, 2.0, 1e-10)
    assert not bad and bad.details["relative_gap"] == pytest.approx(0.5)


def test_relative_gap_zero_scale():
    assert relative_gap(0.0, 0.0) == 0.0


@pytest.mark.parametrize("grid", [torus_grid(1, 8), torus_grid(2, 4), sphere_grid(16)])
def test_field_roundtrip_is_bitwise(tmp_path, grid):
    rng = np.random.default_rng(1)
    f = rng.standard_normal(grid.shape) * 1e3 ** rng.standard_normal(grid.shape)
    write_field(tmp_path / "f", grid, f)
    g2, back = read_field(tmp_path / "f.csv")
    assert g2 == grid
    assert np.array_equal(back, f)


def test_tensor_roundtrip(tmp_path, t2):
    g = t2.reference_metric() * np.pi
    write_field(tmp_path / "g.csv", t2, g)
    _, back = read_field(tmp_path / "g.csv")
    assert np.array_equal(back, g)


def test_field_version_mismatch(tmp_path, t2):
    write_field(tmp_path / "f", t2, np.zeros(t2.shape))
    meta = json.loads((tmp_path / "f.json").read_text())
    meta["convention_version"] = 99
    (tmp_path / "f.json").write_text(json.dumps(meta))
    with pytest.raises(ValueError, match="convention_version"):
        read_field(tmp_path / "f.csv")


def test_metric_path_roundtrip(tmp_path):
    grid = torus_grid(1, 8)
    g0 = grid.reference_metric()
    path = MetricPath(grid, np.array([0.0, 0.5, 1.0]), np.stack([g0, 2 * g0, 3 * g0]))
    write_metric_path(tmp_path / "p", path, "scaling")
    manifest = json.loads((tmp_path / "p" / "manifest.json").read_text())
    assert manifest["generator"] == "scaling"
    back = read_metric_path(tmp_path / "p")
    assert np.array_equal(back.times, path.times)
    assert np.array_equal(back.metrics, path.metrics)


def test_write_table(tmp_path):
    write_table(tmp_path / "t.csv", {"a": [1.0, 2.0], "b": [0.1, 1 / 3]})
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == "a,b"
    assert float(lines[2].split(",")[1]) == 1 / 3
