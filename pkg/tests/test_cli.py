import csv
import io
import json
import subprocess
import sys

import numpy as np
import pytest

from indeflap import cli

CRIT = ["--K", "0", "--a", "1", "--b", "1", "--c", "1", "--eps-plus", "1", "--eps-minus", "1"]
FLAT = ["--K", "0", "--a", "1", "--b", "2", "--c", "1", "--eps-plus", "3", "--eps-minus", "1"]


def invoke(*argv):
    out, err = io.StringIO(), io.StringIO()
    code = cli.run(list(argv), stdout=out, stderr=err)
    return code, out.getvalue(), err.getvalue()


def csv_body(text):
    return list(csv.reader(line for line in text.splitlines() if not line.startswith("#")))


def test_spectrum_zero_rows():
    code, out, _ = invoke("spectrum", *CRIT, "--n-max", "5", "--m-window", "-3..3", "--format", "json")
    assert code == 0
    data = json.loads(out)
    zeros = [r for r in data["records"] if r["m"] == 0]
    assert sorted(r["n"] for r in zeros) == [1, 2, 3, 4, 5]
    assert all(r["lambda"] == 0.0 and r["kind"] == "zero" for r in zeros)
    assert data["max_relative_residual"] < 1e-8


def test_spectrum_csv():
    code, out, _ = invoke("spectrum", *FLAT, "--n-max", "2", "--m-window", "-2..2", "--format", "csv")
    assert code == 0
    rows = csv_body(out)
    assert rows[0] == ["n", "m", "lambda", "kind", "residual", "method"]
    assert len(rows) == 1 + 2 * 4


def test_oracle_pass():
    code, out, _ = invoke("oracle", *FLAT, "--n", "1", "--grid", "4000")
    assert code == 0
    data = json.loads(out)
    assert data["status"] == "PASS" and data["passed"] is True
    assert len(data["rows"]) == 10


def test_oracle_sign_definite():
    code, out, _ = invoke("oracle", *CRIT, "--n", "1", "--sign-definite", "--roots", "2", "--format", "csv")
    assert code == 0
    assert "# status=PASS" in out


def test_curvature_bound_is_reported():
    code, out, err = invoke("spectrum", "--K", "1", "--a", "1.6", "--b", "1", "--c", "1",
                            "--eps-plus", "1", "--eps-minus", "1")
    assert code == 2 and out == ""
    assert "pi/2" in err or "π/2" in err


@pytest.mark.parametrize("argv", [
    ("spectrum", *CRIT, "--bogus", "1"),
    ("spectrum", "--K", "0"),
    ("nonsense",),
    ("spectrum", *CRIT, "--m-window", "3..-3"),
    ("spectrum", *CRIT, "--a", "x"),
    ("eigenfunction", *CRIT, "--nx", "2"),
])
def test_usage_errors(argv):
    code, out, err = invoke(*argv)
    assert code == 2 and out == "" and err


def test_unwritable_output(tmp_path):
    target = tmp_path / "missing" / "out.json"
    code, _, err = invoke("spectrum", *CRIT, "--n-max", "1", "-o", str(target))
    assert code == 3 and "cannot write" in err


def test_output_file_is_deterministic(tmp_path):
    paths = [tmp_path / "a.json", tmp_path / "b.json"]
    for p in paths:
        assert invoke("spectrum", "--K", "-1", "--a", "0.8", "--b", "1.2", "--c", "1",
                      "--eps-plus", "2", "--eps-minus", "1", "--n-max", "2", "-o", str(p))[0] == 0
    assert paths[0].read_bytes() == paths[1].read_bytes()


def test_config_file_with_override(tmp_path):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"K": 0, "a": 1, "b": 1, "c": 1, "eps_plus": 1, "eps_minus": 1,
                               "n_max": 2, "m_window": "-1..1"}))
    code, out, _ = invoke("spectrum", "--config", str(cfg), "--b", "2")
    assert code == 0
    data = json.loads(out)
    assert data["spec"]["b"] == 2.0
    assert data["certified"]["m_window"] == [-1, 1]
    assert not data["certified"]["zero_mode"]


def test_bad_config(tmp_path):
    cfg = tmp_path / "bad.json"
    cfg.write_text("[1, 2]")
    assert invoke("spectrum", "--config", str(cfg))[0] == 2
    assert invoke("spectrum", "--config", str(tmp_path / "nope.json"))[0] == 2


@pytest.fixture(scope="module")
def zero_mode():
    code, out, _ = invoke("eigenfunction", *CRIT, "--n", "1", "--m", "0", "--nx", "101", "--ny", "101")
    assert code == 0
    return json.loads(out)


class TestEigenfunctionExport:
    def test_interface_column_and_maximum(self, zero_mode):
        xs = np.array(zero_mode["x"])
        vals = np.abs(np.array(zero_mode["values"]))
        assert np.count_nonzero(xs == 0.0) == 1
        i0 = int(np.flatnonzero(xs == 0.0)[0])
        assert np.unravel_index(np.argmax(vals), vals.shape)[0] == i0

    def test_boundary_zeros(self, zero_mode):
        vals = np.array(zero_mode["values"])
        assert np.max(np.abs(vals[0])) < 1e-12 and np.max(np.abs(vals[-1])) < 1e-12
        assert np.all(vals[:, 0] == 0) and np.all(vals[:, -1] == 0)

    def test_residuals_are_reported(self, zero_mode):
        assert zero_mode["lambda"] == 0.0
        assert zero_mode["flux_residual"] < 1e-7
        assert zero_mode["continuity_jump"] == 0.0
        assert zero_mode["norm_squared"] == pytest.approx(1.0, abs=1e-8)

    def test_transverse_nodes(self):
        code, out, _ = invoke("eigenfunction", *FLAT, "--n", "2", "--m", "1", "--nx", "31",
                              "--ny", "41", "--format", "csv")
        assert code == 0
        rows = csv_body(out)[1:]
        grid = np.array([[float(v) for v in r] for r in rows])
        x_pick = np.unique(grid[:, 0])[10]
        profile = grid[grid[:, 0] == x_pick][:, 2]
        interior = profile[1:-1]
        interior = interior[interior != 0]
        assert np.count_nonzero(np.diff(np.sign(interior))) == 1

    def test_export_is_byte_identical(self):
        argv = ("eigenfunction", "--K", "1", "--a", "0.6", "--b", "0.9", "--c", "1",
                "--eps-plus", "1", "--eps-minus", "1.5", "--nx", "21", "--ny", "11", "--format", "csv")
        assert invoke(*argv)[1] == invoke(*argv)[1]

    def test_unknown_mode_index(self):
        code, _, err = invoke("eigenfunction", *FLAT, "--m", "0")
        assert code == 2 and "(1, 0)" in err


def test_essential_command():
    code, out, _ = invoke("essential", *CRIT, "--n-range", "3..6")
    assert code == 0
    data = json.loads(out)
    assert [r["n"] for r in data["rows"]] == [3, 4, 5, 6]
    assert data["strictly_decreasing"] is True
    assert data["annihilation_residual"] < 1e-8


def test_essential_rejects_wide_cutoff():
    assert invoke("essential", *CRIT, "--a2", "1.5")[0] == 2


def test_essential_requires_critical_contrast():
    code, _, err = invoke("essential", *FLAT)
    assert code == 2 and "critical" in err


def test_decay_command():
    code, out, _ = invoke("decay", "--K", "0", "--a", "1", "--b", "2", "--c", "6", "--eps-plus", "1",
                          "--eps-minus", "1", "--n-range", "2..4", "--format", "csv")
    assert code == 0
    rows = csv_body(out)
    assert rows[0] == ["n", "min_abs_lambda", "scaled", "sharp"] and len(rows) == 4


def test_decay_control_flag():
    args = ("decay", "--K", "0", "--a", "1", "--b", "1", "--c", "1", "--eps-plus", "2", "--eps-minus", "1",
            "--n-range", "1..3")
    assert invoke(*args)[0] == 2
    assert invoke(*args, "--control")[0] == 0


def test_scaling_check():
    code, out, _ = invoke("scaling-check", "--K", "0.25", "--a", "0.8", "--b", "0.8", "--c", "1",
                          "--eps-plus", "1", "--eps-minus", "1", "--count", "6")
    assert code == 0
    data = json.loads(out)
    assert len(data["rows"]) == 6
    assert data["max_rel_error"] < 1e-8


def test_console_entry_point():
    proc = subprocess.run([sys.executable, "-m", "indeflap", "spectrum", *CRIT, "--n-max", "1",
                           "--m-window", "-1..1", "--format", "csv"],
                          capture_output=True, text=True, check=False)
    assert proc.returncode == 0
    assert proc.stdout.splitlines()[0] == "n,m,lambda,kind,residual,method"


def test_help_exits_cleanly():
    assert invoke("--help")[0] == 0
