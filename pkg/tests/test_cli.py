import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from infdelay.cli import run


def write(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return str(p)


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


ZERO = {"dim": 1, "eta": 0.5, "discrete": [], "kernels": []}


def test_spectrum_zero_functional(tmp_path):
    cfg = write(tmp_path, {"functional": ZERO, "region": [-0.4, 1, -1, 1]})
    assert run(["spectrum", "--config", cfg, "--out", str(tmp_path)]) == 0
    table = rows(tmp_path / "roots.csv")
    assert table[0] == ["re", "im", "pole_order", "residual", "simple"]
    assert len(table) == 2
    assert float(table[1][0]) == 0 and float(table[1][1]) == 0 and table[1][2] == "1"
    assert (tmp_path / "roots.csv").read_bytes().count(b"\r") == 0


def test_simulate_discrete_and_determinism(tmp_path):
    cfg = {"model": {"name": "discrete", "params": {"a": 1.0, "tau": 1.0}},
           "history": {"preset": "constant", "params": {"value": [1.0]}},
           "numerics": {"T": 2.0, "h": 0.01}}
    path = write(tmp_path, cfg)
    for d in ("a", "b"):
        assert run(["simulate", "--config", path, "--out", str(tmp_path / d)]) == 0
    last = rows(tmp_path / "a" / "trace.csv")[-1]
    # method of steps: x(2) = 1 - 2 + 1/2
    assert float(last[0]) == 2.0
    assert abs(float(last[1]) - (-0.5)) < 1e-6
    for f in ("trace.csv", "trace_summary.json", "trace.gp"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_stability_json(tmp_path):
    fun = {"dim": 1, "eta": 0.5, "discrete": [], "kernels": [{"C": [[-3.0]], "delta": 1.0, "power": 1}]}
    cfg = write(tmp_path, {"functional": fun})
    assert run(["stability", "--config", cfg, "--out", str(tmp_path)]) == 0
    out = json.loads((tmp_path / "stability.json").read_text())
    assert out["stable"] is False and out["rightmost"]["re"] > 0


def test_stability_from_model(tmp_path):
    cfg = write(tmp_path, {"model": {"name": "chemostat"}})
    assert run(["stability", "--config", cfg, "--out", str(tmp_path)]) == 0
    out = json.loads((tmp_path / "stability.json").read_text())
    assert isinstance(out["stable"], bool)


def test_hopf_scan_erlang(tmp_path):
    cfg = write(tmp_path, {"model": {"name": "erlang2", "params": {"delta": 1.0}},
                           "analysis": {"mu_range": [1.5, 2.5]}})
    assert run(["hopf-scan", "--config", cfg, "--out", str(tmp_path)]) == 0
    rec = json.loads((tmp_path / "hopf.json").read_text())["hopf"]
    assert abs(rec["mu_star"] - 2.0) < 1e-8 and abs(rec["omega"] - 1.0) < 1e-8
    assert len(rows(tmp_path / "hopf_branch.csv")) > 3


def test_projector_command(tmp_path):
    cfg = write(tmp_path, {"functional": ZERO, "region": [-0.4, 1, -1, 1], "alpha": [1.0],
                           "history": {"preset": "constant", "params": {"value": [0.0]}}})
    assert run(["projector", "--config", cfg, "--out", str(tmp_path)]) == 0
    table = rows(tmp_path / "projection.csv")
    assert table[0] == ["theta", "x_1"]
    assert all(abs(float(r[1]) - 1.0) < 1e-12 for r in table[1:])


def test_gauge_round_trip(tmp_path):
    theta = np.linspace(-10, 0, 51)
    with open(tmp_path / "h.csv", "w") as fh:
        fh.write("theta,x_1\n")
        for t in theta:
            fh.write(f"{float(t)!r},{float(np.exp(-0.5 * t))!r}\n")
    fwd = write(tmp_path, {"analysis": {"input": str(tmp_path / "h.csv"), "eta": 0.5},
                           "output": {"prefix": "g"}}, "f.json")
    assert run(["gauge", "--config", fwd, "--out", str(tmp_path)]) == 0
    g = np.array([[float(v) for v in r] for r in rows(tmp_path / "g.csv")[1:]])
    np.testing.assert_allclose(g[:, 1], 1.0, rtol=1e-13)
    inv = write(tmp_path, {"analysis": {"input": str(tmp_path / "g.csv"), "eta": 0.5, "direction": "inverse"},
                           "output": {"prefix": "back"}}, "i.json")
    assert run(["gauge", "--config", inv, "--out", str(tmp_path)]) == 0
    b = np.array([[float(v) for v in r] for r in rows(tmp_path / "back.csv")[1:]])
    np.testing.assert_allclose(b[:, 1], np.exp(-0.5 * theta), rtol=1e-12)


def test_verify_command(tmp_path):
    cfg = write(tmp_path, {"model": {"name": "erlang2-tanh", "params": {"a": 1.0}}})
    assert run(["verify", "--config", cfg, "--out", str(tmp_path), "--seed", "3", "--threads", "2"]) == 0
    out = json.loads((tmp_path / "verify.json").read_text())
    assert out["passed"], out["checks"]
    assert len(out["checks"]) == 7


def test_unknown_key_rejected(tmp_path, capsys):
    cfg = write(tmp_path, {"functional": ZERO, "region": [-0.4, 1, -1, 1], "colour": "red"})
    assert run(["spectrum", "--config", cfg, "--out", str(tmp_path)]) == 1
    err = json.loads(capsys.readouterr().err)
    assert err["exit_code"] == 1 and "colour" in err["message"]
    cfg = write(tmp_path, {"functional": {**ZERO, "extra": 1}, "region": [-0.4, 1, -1, 1]})
    assert run(["spectrum", "--config", cfg, "--out", str(tmp_path)]) == 1


def test_usage_errors(tmp_path, capsys):
    assert run(["bogus", "--config", "x.json"]) == 1
    assert run(["spectrum", "--config", str(tmp_path / "missing.json")]) == 1
    cfg = write(tmp_path, {"functional": ZERO})
    assert run(["spectrum", "--config", cfg, "--threads", "0"]) == 1


def test_numerical_failure_exit_code(tmp_path, capsys):
    # the kernel model's roots -1 +- i lie outside Re > -eta, so no eigenfunction exists in the space
    fun = {"dim": 1, "eta": 0.5, "discrete": [], "kernels": [{"C": [[-2.0]], "delta": 2.0, "power": 0}]}
    cfg = write(tmp_path, {"functional": fun, "region": [-1.5, 0, 0.5, 2]})
    assert run(["projector", "--config", cfg, "--out", str(tmp_path)]) == 2
    err = json.loads(capsys.readouterr().err)
    assert err["exit_code"] == 2


def test_png_output(tmp_path):
    pytest.importorskip("matplotlib")
    cfg = write(tmp_path, {"model": {"name": "exp_kernel"}, "numerics": {"T": 1.0, "h": 0.05},
                           "output": {"png": True}})
    assert run(["simulate", "--config", cfg, "--out", str(tmp_path)]) == 0
    assert (tmp_path / "trace.png").stat().st_size > 1000


def test_module_entry_point(tmp_path):
    cfg = write(tmp_path, {"functional": ZERO, "region": [-0.4, 1, -1, 1]})
    proc = subprocess.run([sys.executable, "-m", "infdelay", "spectrum", "--config", cfg, "--out", str(tmp_path)],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert proc.stdout.strip().endswith("roots.csv") or "roots.csv" in proc.stdout
