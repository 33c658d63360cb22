import json
import subprocess
import sys

import pytest

from sasaki_lab import cli
from sasaki_lab.comparison import ComparisonRecord, Quantity

VERIFY = ["verify", "--model", "heisenberg3", "--suite", "hessian", "--eps-grid", "0.25",
          "--samples", "2", "--seed", "7"]


def rec(measured, flags=()):
    return ComparisonRecord(model="m", eps=1.0, x0=(0.0,), x=(1.0,), r=1.0, lam=0.5,
                            quantity=Quantity.LapH, check="c", measured=measured, bound=1.0,
                            flags=flags, suite="laplacian")


def test_dist_straight_segment(capsys):
    code = cli.main(["dist", "--model", "heisenberg3", "--from", "0,0,0", "--to", "1,0,0",
                     "--eps", "0.25"])
    out = capsys.readouterr().out.splitlines()
    assert code == 0 and out[0] == "1.000000"


def test_dist_writes_json(tmp_path, capsys):
    out = tmp_path / "d.json"
    cli.main(["dist", "--to", "0.3,0.2,0.1", "--eps", "0.5", "--out", str(out)])
    doc = json.loads(out.read_text())
    assert doc["format_version"] == 1 and doc["config"]["eps"] == 0.5
    assert "workers" not in doc["config"]


def test_verify_is_byte_identical(tmp_path, capsys):
    out = tmp_path / "v.csv"
    texts = []
    for workers in ("1", "1", "2"):
        assert cli.main(VERIFY + ["--out", str(out), "--workers", workers]) == 0
        texts.append((tmp_path / "v.hessian.csv").read_bytes())
    assert texts[0] == texts[1] == texts[2]
    lines = capsys.readouterr().out.splitlines()
    assert lines[0].startswith("PASS hessian:")


def test_worker_env(monkeypatch):
    monkeypatch.setenv(cli.WORKERS_ENV, "3")
    assert cli.worker_count(cli.RunConfig()) == 3
    assert cli.worker_count(cli.RunConfig(workers=2)) == 2
    monkeypatch.setenv(cli.WORKERS_ENV, "junk")
    assert cli.worker_count(cli.RunConfig()) == 1


def test_config_file_and_override(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"model": "hopf3", "eps": 0.5, "samples": 3}))
    cfg = cli.config_from_args(["dist", "--config", str(path), "--eps", "0.125"])
    assert (cfg.command, cfg.model, cfg.eps, cfg.samples) == ("dist", "hopf3", 0.125, 3)


def test_config_echo_roundtrip():
    cfg = cli.config_from_args(VERIFY + ["--workers", "2"])
    echo = cfg.echo()
    assert "workers" not in echo and echo["format_version"] == 1
    again = cli.make_config(json.loads(json.dumps(echo)))
    assert again.workers is None and again.eps_grid == (0.25,)
    assert again.echo() == echo


def test_command_defaults():
    assert cli.config_from_args(["mcp"]).eps == 0.0
    assert cli.config_from_args(["diameter"]).model == "hopf3"
    assert cli.config_from_args(["jacobi"]).samples == 41


@pytest.mark.parametrize("argv", [
    ["dist", "--model", "klein7"],
    ["verify", "--samples", "0"],
    ["verify", "--eps-grid", "1,-2"],
    ["verify", "--tolerance", "-1"],
    ["dist", "--to", "1,2"],
    ["exp", "--velocity", "1,0"],
])
def test_config_errors_exit_2(argv, capsys):
    assert cli.main(argv) == cli.EXIT_CONFIG
    assert "config error" in capsys.readouterr().err


def test_unknown_config_key(tmp_path, capsys):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"modle": "hopf3"}))
    assert cli.main(["dist", "--config", str(path)]) == cli.EXIT_CONFIG
    path.write_text("[1, 2]")
    assert cli.main(["dist", "--config", str(path)]) == cli.EXIT_CONFIG


def test_engine_error_exit_3(capsys):
    assert cli.main(["jacobi", "--model", "hopf3", "--case", "A"]) == cli.EXIT_ENGINE
    assert "WindowError" in capsys.readouterr().err


def test_exit_code_soundness(capsys):
    cfg = cli.RunConfig()
    assert cli._finish([rec(0.5), rec(9.0, ("cut_locus",))], cfg, ("laplacian",)) == 0
    assert cli._finish([rec(0.5), rec(1.0 + 1e-3)], cfg, ("laplacian",)) == 1
    assert cli._finish([rec(1.0 + 1e-3)], cli.RunConfig(tolerance=1e-2), ("laplacian",)) == 0


def test_jacobi_csv(tmp_path):
    out = tmp_path / "j.csv"
    assert cli.main(["jacobi", "--model", "heisenberg5", "--case", "A", "--eps", "0.5",
                     "--out", str(out)]) == 0
    rows = [ln.split(",") for ln in out.read_text().splitlines() if not ln.startswith("#")]
    assert rows[0][0] == "t" and rows[0][-1] == "error" and len(rows) == 42
    assert max(float(r[-1]) for r in rows[1:]) < 1e-8


def test_exp_and_kernels(tmp_path):
    out = tmp_path / "e.dat"
    assert cli.main(["exp", "--velocity", "1,0,0", "--t", "2", "--samples", "4",
                     "--out", str(out)]) == 0
    lines = [ln for ln in out.read_text().splitlines() if not ln.startswith("#")]
    assert len(lines) == 5 and lines[-1].split()[:4] == ["2", "2", "0", "0"]
    out = tmp_path / "k.csv"
    assert cli.main(["kernels", "--mu-grid", "0", "--r-grid", "1,2", "--out", str(out)]) == 0
    rows = [ln for ln in out.read_text().splitlines() if not ln.startswith("#")]
    assert rows[1].split(",")[:3] == ["0", "1", "1"]


def test_hessian_command(capsys):
    assert cli.main(["hessian", "--to", "0.5,0.1,0.05", "--eps", "0.5"]) == 0
    out = capsys.readouterr().out
    assert out.startswith("r ") and "lap_h" in out


def test_mcp_command(tmp_path, capsys):
    out = tmp_path / "m.csv"
    code = cli.main(["mcp", "--eps", "0.5", "--center", "1,0,0", "--region", "0.05,0.05,0.01",
                     "--t-grid", "0.5", "--out", str(out)])
    assert code == 0
    assert capsys.readouterr().out.startswith("PASS mcp:")
    summary = json.loads((tmp_path / "m.summary.json").read_text())
    assert summary["probes"] == 1 and summary["N"] == 6


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "sasaki_lab", "dist", "--to", "1,0,0"],
                         capture_output=True, text=True, check=True)
    assert res.stdout.splitlines()[0] == "1.000000"
