import csv
import io
import json
import math
import subprocess
import sys
from pathlib import Path

import pytest

from thermoform.cli import main

ROOT = Path(__file__).resolve().parent.parent
SUITE = ROOT / "configs" / "suite.json"


def write(tmp_path, doc, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return str(p)


def one(experiment, **top):
    return {"experiments": [experiment], **top}


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


PRESSURE = {"name": "gp", "task": "pressure-sweep", "space": {"preset": "golden_mean"},
            "params": {"n": [4, 8, 12, 16, 20], "routes": ["periodic"]}}


class TestValidate:
    def test_ok(self, tmp_path, capsys):
        assert main(["validate", write(tmp_path, one(PRESSURE))]) == 0
        assert capsys.readouterr().out.startswith("ok")
        assert not (tmp_path / "out").exists()

    def test_suite_is_valid(self, capsys):
        assert main(["validate", str(SUITE)]) == 0

    def test_zero_row_names_row(self, tmp_path, capsys):
        cfg = one({**PRESSURE, "space": {"matrix": [[1, 1], [0, 0]]}})
        assert main(["validate", write(tmp_path, cfg)]) == 1
        err = capsys.readouterr().err
        assert "row 1" in err and "experiments[0].space.matrix" in err
        assert "Traceback" not in err

    def test_missing_word_named(self, tmp_path, capsys):
        cfg = one({**PRESSURE, "space": {"k": 2},
                   "potential": {"window": 2, "values": {"00": 0.1, "01": 0.2, "11": 0.3}}})
        assert main(["validate", write(tmp_path, cfg)]) == 1
        assert "'10'" in capsys.readouterr().err

    def test_box_cap_value(self, tmp_path, capsys):
        cfg = one({"name": "big", "task": "2d-pressure", "space": {"k": 2, "dimension": 2},
                   "params": {"nn": [[0, 0], [0, 0]], "strip_widths": [2], "boxes": [[5, 5]]}})
        assert main(["validate", write(tmp_path, cfg)]) == 1
        assert "1048576" in capsys.readouterr().err

    def test_wrong_type_pointer(self, tmp_path, capsys):
        cfg = one({**PRESSURE, "params": {"n": "many", "routes": ["periodic"]}})
        assert main(["validate", write(tmp_path, cfg)]) == 1
        assert "experiments[0].params.n" in capsys.readouterr().err

    def test_unknown_task(self, tmp_path, capsys):
        assert main(["validate", write(tmp_path, one({**PRESSURE, "task": "magic"}))]) == 1

    def test_missing_file(self, tmp_path, capsys):
        assert main(["validate", str(tmp_path / "nope.json")]) == 1
        assert "nope.json" in capsys.readouterr().err

    def test_duplicate_names(self, tmp_path, capsys):
        cfg = {"experiments": [PRESSURE, PRESSURE]}
        assert main(["validate", write(tmp_path, cfg)]) == 1

    def test_single_experiment_document(self, tmp_path, capsys):
        assert main(["validate", write(tmp_path, PRESSURE)]) == 0


class TestRun:
    def test_pressure_sweep_error_decreasing(self, tmp_path, capsys):
        out = tmp_path / "o"
        assert main(["run", write(tmp_path, one(PRESSURE)), "--out", str(out)]) == 0
        rows = read_csv(out / "gp.csv")
        err = [float(r["abs_error"]) for r in rows]
        assert len(err) == 5 and all(b < a for a, b in zip(err, err[1:]))
        ref = math.log((1 + math.sqrt(5)) / 2)
        assert float(rows[0]["spectral_reference"]) == pytest.approx(ref, abs=1e-11)
        assert "gp" in capsys.readouterr().out

    def test_equilibrium_stationary(self, tmp_path):
        cfg = one({"name": "eq", "task": "equilibrium", "space": {"k": 2},
                   "potential": {"indicator": "1", "scale": math.log(3)}})
        assert main(["run", write(tmp_path, cfg), "--out", str(tmp_path)]) == 0
        doc = json.loads((tmp_path / "eq.json").read_text())
        assert doc["measure"]["stationary"] == pytest.approx([0.25, 0.75], abs=1e-12)
        assert doc["pressure"] == pytest.approx(math.log(4), abs=1e-12)
        assert doc["config"]["name"] == "eq"

    def test_csv_is_rfc4180(self, tmp_path):
        assert main(["run", write(tmp_path, one(PRESSURE)), "--out", str(tmp_path)]) == 0
        raw = (tmp_path / "gp.csv").read_bytes()
        assert raw.count(b"\r\n") == 6 and b"\n" not in raw.replace(b"\r\n", b"")

    def test_nonconvergence_exit_2(self, tmp_path, capsys):
        cfg = one({"name": "slow", "task": "rate-sweep", "space": {"k": 2},
                   "observables": [{"indicator": "1"}], "tolerances": {"max_iter": 1},
                   "params": {"points": [[0.93]]}})
        assert main(["run", write(tmp_path, cfg), "--out", str(tmp_path)]) == 2
        assert (tmp_path / "slow.csv").exists()
        err = capsys.readouterr().err
        assert "not converged" in err and "Traceback" not in err

    def test_rate_sweep_infinite_outside(self, tmp_path):
        cfg = one({"name": "r", "task": "rate-sweep", "space": {"k": 2},
                   "observables": [{"indicator": "1"}], "params": {"points": [[0.5], [1.2]]}})
        assert main(["run", write(tmp_path, cfg), "--out", str(tmp_path)]) == 0
        rows = read_csv(tmp_path / "r.csv")
        assert float(rows[0]["I"]) == pytest.approx(0, abs=1e-12)
        assert rows[1]["I"] == "inf"

    def test_env_override(self, tmp_path, monkeypatch):
        monkeypatch.setenv("THERMOFORM_OUT", str(tmp_path / "env"))
        assert main(["run", write(tmp_path, one(PRESSURE, output_dir=str(tmp_path / "cfg")))]) == 0
        assert (tmp_path / "env" / "gp.csv").exists()
        assert not (tmp_path / "cfg").exists()
        assert main(["run", write(tmp_path, one(PRESSURE)), "--out", str(tmp_path / "flag")]) == 0
        assert (tmp_path / "flag" / "gp.csv").exists()

    def test_bad_jobs(self, tmp_path):
        assert main(["run", write(tmp_path, one(PRESSURE)), "--jobs", "0"]) == 1

    def test_module_entry_point(self, tmp_path):
        proc = subprocess.run([sys.executable, "-m", "thermoform.cli", "validate",
                               write(tmp_path, one(PRESSURE))], capture_output=True, text=True)
        assert proc.returncode == 0 and proc.stdout.startswith("ok")


def test_suite_deterministic_across_jobs(tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["run", str(SUITE), "--out", str(a), "--jobs", "1"]) == 0
    assert main(["run", str(SUITE), "--out", str(b), "--jobs", "8"]) == 0
    names = sorted(p.name for p in a.iterdir())
    assert names == sorted(p.name for p in b.iterdir()) and len(names) >= 8
    for name in names:
        assert (a / name).read_bytes() == (b / name).read_bytes(), name
