import json
import subprocess
import sys
import time

import numpy as np
import pytest

from randlsv import cli, io, verify
from randlsv.system import RNG_ALGORITHM


def run(tmp_path, *argv):
    return cli.main([str(a) for a in argv])


def test_simulate_zero_steps(tmp_path):
    out = tmp_path / "o.csv"
    assert run(tmp_path, "simulate", "--steps", 0, "--x0", 0.25, "--omega0", 0.3,
               "--out", out) == 0
    meta, cols, data = io.read_csv(out)
    assert cols == ["step", "x", "omega", "symbol"]
    assert data.shape == (1, 4)
    assert data[0].tolist() == [0, 0.25, 0.3, 0]


def test_output_metadata(tmp_path):
    out = tmp_path / "o.csv"
    run(tmp_path, "simulate", "--steps", 5, "--seed", 12, "--out", out)
    meta, _, _ = io.read_csv(out)
    assert meta["format"] == "1"
    assert meta["tool"] == io.TOOL
    assert json.loads(meta["params"]) == {"alpha": 0.5, "beta": 0.7, "p1": 0.6,
                                          "p2": 0.4, "strict_regime": False}
    assert meta["seed"] == "12"
    assert meta["rng"] == RNG_ALGORITHM
    assert float(meta["runtime_s"]) >= 0


def test_same_seed_same_bytes(tmp_path):
    a, b, c = tmp_path / "a.csv", tmp_path / "b.csv", tmp_path / "c.csv"
    for path, seed in ((a, 5), (b, 5), (c, 6)):
        run(tmp_path, "simulate", "--steps", 2000, "--seed", seed, "--no-timing",
            "--threads", 1, "--out", path)
    assert a.read_bytes() == b.read_bytes()
    assert a.read_bytes() != c.read_bytes()


def test_seventeen_digit_round_trip(tmp_path):
    out = tmp_path / "o.csv"
    run(tmp_path, "simulate", "--steps", 200, "--p1", 0.5, "--out", out)
    _, _, data = io.read_csv(out)
    from randlsv.system import SystemParams, simulate
    meta, _, _ = io.read_csv(out)
    xs, ws, _ = simulate(float(meta["x0"]), float(meta["omega0"]), 200,
                         SystemParams(0.5, 0.7, 0.5), seed=1)
    assert np.array_equal(data[:, 1], xs) and np.array_equal(data[:, 2], ws)
    body = out.read_text().splitlines()[-1]
    assert "." in body and "e+" not in body.split(",")[0]


@pytest.mark.parametrize("text", ["0.1", "1e-300", "0.30000000000000004", "123456.789"])
def test_fmt_round_trip(text):
    v = float(text)
    assert float(io.fmt(v)) == v
    assert io.fmt(float("nan")) == "nan"


def test_million_steps_benchmark(tmp_path):
    t = time.perf_counter()
    assert run(tmp_path, "simulate", "--steps", 1_000_000, "--out", tmp_path / "big.csv") == 0
    assert time.perf_counter() - t < 5.0


def test_tower_command(tmp_path):
    out = tmp_path / "t.csv"
    assert run(tmp_path, "tower", "--i-max", 2, "--out", out) == 0
    _, cols, data = io.read_csv(out)
    assert cols[:6] == ["i", "j_word", "omega_lo", "omega_hi", "xprime_i", "xprime_im1"]
    assert data.shape[0] == 6
    assert data[:, 6].sum() <= 0.5
    assert np.all(data[:, 4] < data[:, 5])
    run(tmp_path, "tower", "--i-max", 7, "--out", out)
    _, _, data = io.read_csv(out)
    for i in range(1, 8):
        rows = data[data[:, 0] == i]
        assert np.all(np.diff(rows[:, 2]) > 0)


def test_asymptotics_small(tmp_path):
    out, tab, tail = tmp_path / "a.json", tmp_path / "e.csv", tmp_path / "tail.csv"
    assert run(tmp_path, "asymptotics", "--n-max", 500, "--samples", 500, "--out", out,
               "--table-out", tab, "--tail-out", tail) == 0
    doc = json.loads(out.read_text())
    assert doc["format"] == 1 and doc["seed"] == 0
    assert "exponent" in doc["expectation"]["fit"]
    assert "exponent" in doc["tail"]["fit"]
    _, cols, data = io.read_csv(tab)
    assert cols == ["n", "E_exact", "E_mc", "se", "x_n_alpha", "x_n_beta"]
    assert data.shape[0] == 500
    _, cols, _ = io.read_csv(tail)
    assert cols[:2] == ["n", "tail"]


def test_asymptotics_refuses_short_range(tmp_path, capsys):
    assert run(tmp_path, "asymptotics", "--n-max", 99) == 2
    assert "n-max" in capsys.readouterr().err


def test_density_command(tmp_path):
    out, summ = tmp_path / "d.csv", tmp_path / "d.json"
    assert run(tmp_path, "density", "--grid-size", 256, "--out", out,
               "--summary-out", summ) == 0
    _, cols, data = io.read_csv(out)
    assert cols == ["bin_lo", "bin_hi", "f_value"]
    assert np.sum(data[:, 2] * (data[:, 1] - data[:, 0])) == pytest.approx(1.0, abs=1e-10)
    doc = json.loads(summ.read_text())
    assert doc["converged"] and doc["residual"] < 1e-10


def test_density_not_converged_exit_code(tmp_path):
    assert run(tmp_path, "density", "--grid-size", 256, "--max-iter", 16,
               "--out", tmp_path / "d.csv") == 3


def test_correlation_command(tmp_path):
    out = tmp_path / "c.csv"
    assert run(tmp_path, "correlation", "--grid-size", 512, "--n-max", 4, "--samples", 500,
               "--burn-in", 100, "--out", out) == 0
    _, cols, data = io.read_csv(out)
    assert cols[:3] == ["n", "cor", "se"]
    assert data.shape == (5, 4)
    assert run(tmp_path, "correlation", "--psi", "indicator_right", "--out", out) == 2
    assert run(tmp_path, "correlation", "--phi", "nope", "--out", out) == 2


def test_verify_unknown_suite(tmp_path, capsys):
    assert run(tmp_path, "verify", "bogus") == 2
    err = capsys.readouterr().err
    assert "usage:" in err and "bogus" in err


def test_verify_single_suite(tmp_path):
    out = tmp_path / "v.json"
    assert run(tmp_path, "verify", "hoeffding", "--out", out) == 0
    doc = json.loads(out.read_text())
    assert doc["pass"] is True
    r = doc["results"][0]
    assert set(r) >= {"check", "params", "n_cases", "worst_margin", "pass"}


def test_verify_all_default_preset(tmp_path):
    out, dcsv = tmp_path / "v.json", tmp_path / "dist.csv"
    assert run(tmp_path, "verify", "all", "--out", out, "--distortion-csv", dcsv) == 0
    doc = json.loads(out.read_text())
    assert {r["check"] for r in doc["results"]} >= {
        "domination", "rough_bounds", "k0_bound", "hoeffding", "distortion", "schwarzian"}
    _, cols, data = io.read_csv(dcsv)
    assert cols == ["i", "word", "x1", "x2", "ratio_minus_1", "s", "theta_pow_s"]
    assert data.shape[0] == 10_000


def test_verify_failure_exit_code(tmp_path, monkeypatch):
    bad = verify.CheckResult("domination", {}, 1, -1.0, False)
    monkeypatch.setattr(verify, "lemma_suite", lambda *a, **k: [bad])
    assert run(tmp_path, "verify", "domination", "--out", tmp_path / "v.json") == 1


def test_bad_params_exit_code(tmp_path):
    assert run(tmp_path, "simulate", "--alpha", 0.8, "--beta", 0.7) == 2
    assert run(tmp_path, "simulate", "--p1", 1.5) == 2
    assert run(tmp_path, "simulate", "--beta", 1.5, "--strict-regime") == 2
    assert run(tmp_path, "simulate", "--steps", "many") == 2
    assert run(tmp_path, "nosuchcommand") == 2


def test_config_file(tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# preset\nalpha = 0.4\nsteps=3\nno-timing = true\n")
    out = tmp_path / "o.csv"
    assert run(tmp_path, "simulate", "--config", cfg, "--steps", 1, "--out", out) == 0
    meta, _, data = io.read_csv(out)
    assert json.loads(meta["params"])["alpha"] == 0.4
    assert data.shape[0] == 2          # flag wins over the file
    assert meta["runtime_s"] == "null"
    cfg.write_text("unknown_key = 1\n")
    assert run(tmp_path, "simulate", "--config", cfg) == 2
    assert run(tmp_path, "simulate", "--config", tmp_path / "missing.cfg") == 2


def test_console_entry_point():
    proc = subprocess.run([sys.executable, "-m", "randlsv", "tower", "--i-max", "1"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert proc.stdout.startswith("# format=1")
    proc = subprocess.run([sys.executable, "-m", "randlsv", "--version"],
                          capture_output=True, text=True)
    assert io.TOOL in proc.stdout
