import json
import os
import subprocess
import sys

import jsonschema
import pytest

from gfrac.cli import load_config, main
from gfrac.report import REPORT_SCHEMA


def run(args, tmp_path, name="out"):
    out = tmp_path / name
    code = main(list(args) + ["--out", str(out)])
    return code, out


def test_ml_prints_json_lines(capsys):
    assert main(["ml", "--alpha", "0.5", "--z", "-1,0"]) == 0
    lines = [json.loads(s) for s in capsys.readouterr().out.splitlines()]
    assert lines[0]["value"] == pytest.approx(0.42758357615580705, rel=1e-12)
    assert lines[1]["value"] == 1.0


def test_relax_with_verification(tmp_path):
    code, out = run(["relax", "--kernel", "power_law:0.5", "--lambda", "1", "--t-points", "64",
                     "--verify"], tmp_path)
    assert code == 0
    rows = (out / "relax.csv").read_text().splitlines()
    assert rows[0] == "t,Y,error_estimate" and len(rows) == 65
    jsonschema.validate(json.loads((out / "relax.report.json").read_bytes()), REPORT_SCHEMA)


@pytest.mark.parametrize("args", [
    ["relax", "--kernel", "power_law:0.5", "--lambda", "-1"],
    ["relax", "--kernel", "power_law:1.5", "--lambda", "1"],
    ["relax", "--kernel", "nonsense", "--lambda", "1"],
    ["relax", "--lambda", "1"],
    ["relax", "--kernel", "power_law:0.5", "--lambda", "1", "--bogus", "3"],
    ["ode", "--kernel", "power_law:0.5", "--lambda", "0"],
    ["ode", "--kernel", "power_law:0.5", "--lambda", "1", "--forcing", "cubic"],
    ["solve", "--kernel", "power_law:0.5", "--grid-M", "48"],
    ["solve", "--kernel", "power_law:0.5", "--dim", "4"],
    ["solve", "--kernel", "power_law:0.5", "--times", "0,-1"],
    ["subordinate", "--kernel", "power_law:0.5", "--t", "0"],
    ["verify", "--kernel", "power_law:0.5", "--suite", "unknown"],
])
def test_usage_errors_exit_2_without_files(tmp_path, args):
    code, out = run(args, tmp_path)
    assert code == 2
    assert not out.exists()


def test_no_subcommand(capsys):
    assert main([]) == 2


def test_ode_outputs(tmp_path):
    code, out = run(["ode", "--kernel", "power_law:0.5", "--lambda", "2", "--forcing", "sin:1",
                     "--steps", "256", "--h", "0.0078125", "--verify"], tmp_path)
    assert code == 0
    header = (out / "ode.csv").read_text().splitlines()[0]
    assert header == "t,w_repr,w_step,abs_diff"


def test_solve_outputs(tmp_path):
    code, out = run(["solve", "--kernel", "multi_term:1,0.3;1,0.7", "--dim", "2",
                     "--box-L", "10", "--grid-M", "32", "--times", "0.5,1",
                     "--source", "gaussian:1"], tmp_path)
    assert code == 0
    names = sorted(p.name for p in out.iterdir())
    assert names == ["norms.csv", "solve.report.json", "solve_t000.csv", "solve_t001.csv"]
    assert (out / "norms.csv").read_text().splitlines()[0] == "t,L2,H2,sup,DkL2"


def test_subordinate_outputs(tmp_path):
    code, out = run(["subordinate", "--kernel", "power_law:0.5", "--samples", "2000",
                     "--tau-points", "256"], tmp_path)
    assert code == 0
    assert {"density.csv", "samples.csv"} <= {p.name for p in out.iterdir()}


def test_outputs_are_byte_identical(tmp_path):
    args = ["subordinate", "--kernel", "power_law:0.5", "--samples", "2000",
            "--tau-points", "256", "--seed", "4"]
    _, a = run(args, tmp_path, "a")
    _, b = run(args, tmp_path, "b")
    for p in a.iterdir():
        assert p.read_bytes() == (b / p.name).read_bytes()


def test_config_file_and_flag_override(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"kernel": "power_law:0.3", "lambda": 5, "t-points": 8}))
    c = load_config(["relax", "--config", str(cfg), "--lambda", "2"])
    assert c.params["lambda"] == 2.0 and c.params["t_points"] == 8
    assert "0.3" in c.params["kernel"]


def test_threads_from_environment(monkeypatch):
    monkeypatch.setenv("GF_THREADS", "3")
    assert load_config(["verify", "--kernel", "power_law:0.5"]).threads == 3
    assert load_config(["verify", "--kernel", "power_law:0.5", "--threads", "2"]).threads == 2
    monkeypatch.setenv("GF_THREADS", "zero")
    assert main(["verify", "--kernel", "power_law:0.5"]) == 2


def test_module_entry_point(tmp_path):
    env = dict(os.environ)
    proc = subprocess.run([sys.executable, "-m", "gfrac", "relax", "--kernel", "power_law:0.5",
                           "--lambda", "-1", "--out", str(tmp_path / "o")],
                          capture_output=True, text=True, env=env)
    assert proc.returncode == 2
    assert "error" in proc.stderr
    assert not (tmp_path / "o").exists()


@pytest.mark.slow
def test_default_suite_distributed_kernel(tmp_path):
    code, out = run(["verify", "--kernel", "distributed:uniform:8"], tmp_path)
    assert code == 0
    assert json.loads((out / "verify.report.json").read_bytes())["status"] == "pass"


@pytest.mark.slow
def test_extended_suite_reports_linear_growth_counterexample(tmp_path, capsys):
    # the linear-in-t source bound is false at small t; the suite must say so
    code, out = run(["verify", "--suite", "extended", "--kernel", "power_law:0.5"], tmp_path)
    assert code == 1
    data = json.loads((out / "verify.report.json").read_bytes())
    jsonschema.validate(data, REPORT_SCHEMA)
    failed = sorted(c["name"] for c in data["checks"] if c["status"] == "fail")
    assert failed == ["source-n1/source-l2-linear[t=0.5]", "source-n2/source-l2-linear[t=0.5]"]
    assert all(c["status"] == "pass" for c in data["checks"] if "resolvent" in c["name"])
    assert "source-l2-linear" in capsys.readouterr().err
