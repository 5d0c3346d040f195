"""Command line interface contract: files, formats, exit codes."""

import json
import subprocess

import numpy as np
import pytest

from ltpid import PeriodicStateSpace, record_from_csv, impulse_from_csv
from ltpid.cli import main

SMALL_GRID = {"radii": [0.25, 0.45, 0.65, 0.85],
              "angles": [0.0, 0.8, 1.6, 2.4, float(np.pi)]}


def write_config(path, payload):
    path.write_text(json.dumps(payload))
    return str(path)


def stable_system_dict():
    A = [[[0.5]], [[-0.4]]]
    B = [[1.0], [0.5]]
    C = [[1.0], [2.0]]
    return {"P": 2, "nx": 1, "A": A, "B": B, "C": C}


def test_simulate_writes_records_and_truth(tmp_path):
    cfg = write_config(tmp_path / "sim.json", {
        "system": stable_system_dict(), "nP": 30, "noise_sigma2": 0.01,
        "N": 50})
    out = tmp_path / "out"
    assert main(["simulate", "--config", cfg, "--out", str(out),
                 "--seed", "5"]) == 0
    u, z = record_from_csv(out / "train.csv")
    assert u.shape == (30,)   # nP counts samples and must divide by P
    uv, zv = record_from_csv(out / "validation.csv")
    assert uv.shape == (30,)
    assert not np.array_equal(u, uv)
    g = impulse_from_csv(out / "truth_impulse.csv")
    assert g.n_taps == 50 and g.period == 2


def test_simulate_noise_variance_plausible(tmp_path):
    cfg = write_config(tmp_path / "sim.json", {
        "system": stable_system_dict(), "nP": 4000, "noise_sigma2": 0.25})
    out = tmp_path / "out"
    assert main(["simulate", "--config", cfg, "--out", str(out),
                 "--seed", "9"]) == 0
    sys_ = PeriodicStateSpace.from_dict(stable_system_dict())
    from ltpid import simulate
    u, z = record_from_csv(out / "train.csv")
    resid = z - simulate(sys_, u)
    assert resid.std() == pytest.approx(0.5, rel=0.2)


def test_simulate_is_byte_reproducible(tmp_path):
    cfg = write_config(tmp_path / "sim.json", {
        "system": stable_system_dict(), "nP": 26, "noise_sigma2": 0.05})
    out1, out2 = tmp_path / "a", tmp_path / "b"
    for out in (out1, out2):
        assert main(["simulate", "--config", cfg, "--out", str(out),
                     "--seed", "77"]) == 0
    for name in ("train.csv", "validation.csv", "truth_impulse.csv"):
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes()


def test_simulate_rejects_unstable_without_flag(tmp_path, capsys):
    bad = {"P": 1, "nx": 1, "A": [[[1.5]]], "B": [[1.0]], "C": [[1.0]]}
    cfg = write_config(tmp_path / "sim.json", {"system": bad, "nP": 10})
    out = tmp_path / "out"
    assert main(["simulate", "--config", cfg, "--out", str(out)]) == 1
    assert main(["simulate", "--config", cfg, "--out", str(out),
                 "--allow-unstable"]) == 0


def test_identify_pipeline(tmp_path):
    sim_cfg = write_config(tmp_path / "sim.json", {
        "system": stable_system_dict(), "nP": 150, "noise_sigma2": 1e-4,
        "N": 100})
    data_dir = tmp_path / "data"
    assert main(["simulate", "--config", sim_cfg, "--out", str(data_dir),
                 "--seed", "3"]) == 0
    id_cfg = write_config(tmp_path / "id.json", {
        "P": 2,
        "train": str(data_dir / "train.csv"),
        "validation": str(data_dir / "validation.csv"),
        "truth": str(data_dir / "truth_impulse.csv"),
        "methods": [{"method": "LS"},
                    {"method": "GAtom", "grid": SMALL_GRID,
                     "gamma_grid": [0.3, 1.0, 3.0]}]})
    out = tmp_path / "fit"
    assert main(["identify", "--config", id_cfg, "--out", str(out)]) == 0
    for name in ("report_LS.json", "impulse_LS.csv", "fit_LS.json",
                 "report_GAtom.json", "impulse_GAtom.csv", "eps_GAtom.csv",
                 "fit_GAtom.json"):
        assert (out / name).exists(), name
    rep = json.loads((out / "report_GAtom.json").read_text())
    assert rep["method"] == "GAtom"
    assert rep["gamma_star"] in [0.3, 1.0, 3.0]
    fit = json.loads((out / "fit_GAtom.json").read_text())
    assert fit["score"] > 90.0
    eps_lines = (out / "eps_GAtom.csv").read_text().splitlines()
    assert eps_lines[0] == "gamma,eps"
    assert len(eps_lines) == 4


def test_identify_requires_config_paths(tmp_path):
    cfg = write_config(tmp_path / "id.json", {"P": 2})
    assert main(["identify", "--config", cfg,
                 "--out", str(tmp_path / "o")]) == 1


def test_atoms_info_reports_grid_scan(tmp_path):
    cfg = write_config(tmp_path / "atoms.json", {
        "grid": SMALL_GRID, "N": 60, "m": 12})
    out = tmp_path / "out"
    assert main(["atoms-info", "--config", cfg, "--out", str(out)]) == 0
    info = json.loads((out / "atoms_info.json").read_text())
    assert info["n_poles"] == 4 * 5
    assert info["n_real"] == 8
    assert info["N"] == 60 and info["m"] == 12
    hn = info["hankel_nuclear_norm"]
    # closed form at the largest radius present
    expected_min = np.sqrt((1 - 0.85 ** 24) * (1 - 0.85 ** (2 * 49)))
    assert hn["min"] == pytest.approx(float(expected_min), abs=1e-9)
    assert hn["max"] <= 1.0 + 1e-9


def test_montecarlo_cli_and_exit_codes(tmp_path):
    cfg = write_config(tmp_path / "mc.json", {
        "n_systems": 2, "P": 2, "nP": 200, "noise_sigma2": [0.01],
        "seed": 31,
        "methods": [{"method": "LS"},
                    {"method": "GAtom", "grid": SMALL_GRID,
                     "gamma_grid": [0.5, 2.0]}]})
    out = tmp_path / "mc"
    assert main(["montecarlo", "--config", cfg, "--out", str(out)]) == 0
    raw = (out / "mc_raw.csv").read_text().splitlines()
    assert raw[0] == "system_id,method,sigma2,W"
    assert len(raw) == 1 + 4
    stats = json.loads((out / "mc_stats.json").read_text())
    assert stats["n_systems"] == 2
    assert "GAtom" in stats["stats"]
    assert (out / "mc_eps_curves.csv").exists()


def test_montecarlo_signals_widespread_failure(tmp_path):
    # N=60 estimates cannot be scored against the 100-lag metric, so every
    # cell fails and the command reports it through the exit code
    cfg = write_config(tmp_path / "mc.json", {
        "n_systems": 1, "P": 2, "nP": 100, "noise_sigma2": [0.01],
        "seed": 1, "methods": [{"method": "LS", "N": 60}]})
    out = tmp_path / "mc"
    assert main(["montecarlo", "--config", cfg, "--out", str(out)]) == 3


def test_missing_config_fails_cleanly(tmp_path):
    assert main(["simulate", "--config", str(tmp_path / "nope.json"),
                 "--out", str(tmp_path / "o")]) == 1


def test_installed_script_runs():
    proc = subprocess.run(["ltpid", "--help"], capture_output=True,
                          text=True)
    assert proc.returncode == 0
    for sub in ("simulate", "identify", "pendulum", "montecarlo",
                "atoms-info"):
        assert sub in proc.stdout
