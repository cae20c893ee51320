import math

import pytest

from cavityqec import cli


def test_empty_config_gives_defaults():
    spec = cli.parse_config("")
    assert spec["alpha_sq"] == 0.7
    assert spec["t_cav_ms"] == 100.0
    assert spec["t_atom_ms"] == 30.0
    assert spec["n_traj"] == 1000
    assert spec["v_mps"] == 500.0
    assert spec["w0_mm"] == 6.0
    assert spec["correction"] is True
    assert spec["phi_mode"] == "shared"


def test_config_overrides_and_sections():
    spec = cli.parse_config("alpha_sq = 0.6\nn_traj = 50\n")
    assert spec["alpha_sq"] == 0.6
    assert spec["n_traj"] == 50
    spec2 = cli.parse_config("[run]\nalpha_sq = 0.6\n[sweep]\nsweep_values = 0,1\n")
    assert spec2["sweep_values"] == (0.0, 1.0)


def test_config_rejects_unknown_keys_and_domains():
    with pytest.raises(cli.ConfigError):
        cli.parse_config("alpha_squared = 0.5\n")
    with pytest.raises(cli.ConfigError):
        cli.parse_config("alpha_sq = 1.3\n")
    with pytest.raises(cli.ConfigError):
        cli.parse_config("t_cav_ms = -1\n")
    with pytest.raises(cli.ConfigError):
        cli.parse_config("n_traj = zero\n")
    with pytest.raises(cli.ConfigError):
        cli.parse_config("correction = maybe\n")
    with pytest.raises(cli.ConfigError):
        cli.parse_config("sweep_start = 0\n")  # incomplete linear sweep
    with pytest.raises(cli.ConfigError):
        cli.parse_config("phi_mode = sometimes\n")


def test_infinite_lifetimes_accepted():
    spec = cli.parse_config("t_cav_ms = inf\nt_atom_ms = inf\n")
    cfg = cli.build_protocol_config(spec)
    assert math.isinf(cfg.t_cav)


def test_default_sweep_grid():
    grid = cli.sweep_grid(cli.parse_config(""))
    assert len(grid) == 13
    assert grid[0] == 0.0
    assert abs(grid[-1] - 4 * math.pi) < 1e-12


def test_linear_and_explicit_grids():
    spec = cli.parse_config("sweep_start = 0\nsweep_stop = 2\nsweep_count = 5\n")
    assert cli.sweep_grid(spec) == (0.0, 0.5, 1.0, 1.5, 2.0)
    spec = cli.parse_config("sweep_values = 0.3,0.9\n")
    assert cli.sweep_grid(spec) == (0.3, 0.9)


def _tiny_spec(**over):
    text = "\n".join(f"{k} = {v}" for k, v in over.items())
    spec = cli.parse_config(text)
    return spec


def test_run_sweep_single_noiseless_point():
    spec = _tiny_spec(t_cav_ms="inf", t_atom_ms="inf", n_traj=5,
                      sweep_values="0")
    rows = cli.run_sweep(spec)
    assert len(rows) == 1
    r = rows[0]
    assert abs(r.f_corr - 1.0) < 1e-9
    assert abs(r.f_uncorr - 1.0) < 1e-9
    assert r.syn_mm == 5 and r.syn_pp == 0
    assert r.n_traj == 5


def test_csv_two_lines_for_single_row():
    spec = _tiny_spec(t_cav_ms="inf", t_atom_ms="inf", n_traj=3,
                      sweep_values="0")
    text = cli.format_csv(cli.run_sweep(spec))
    lines = text.strip().splitlines()
    assert len(lines) == 2
    assert lines[0] == cli.CSV_HEADER


def test_csv_roundtrip_exact(tmp_path):
    spec = _tiny_spec(t_cav_ms="inf", t_atom_ms="inf", n_traj=20,
                      sweep_values="0.7,2.1", seed=99)
    rows = cli.run_sweep(spec)
    path = tmp_path / "out.csv"
    cli.emit_csv(rows, str(path))
    back = cli.parse_csv(str(path))
    assert len(back) == 2
    for a, b in zip(rows, back):
        for fld in ("phi_max", "t_cav_ms", "alpha_sq", "f_corr", "f_corr_se",
                    "f_uncorr", "f_uncorr_se"):
            assert getattr(a, fld) == getattr(b, fld)  # bitwise round-trip
        for fld in ("n_traj", "syn_mm", "syn_pm", "syn_mp", "syn_pp", "seed"):
            assert getattr(a, fld) == getattr(b, fld)


def test_csv_byte_identity_across_worker_counts():
    base = dict(t_cav_ms="inf", t_atom_ms="inf", n_traj=40,
                sweep_values="1.0,3.0", seed=7)
    text1 = cli.format_csv(cli.run_sweep(_tiny_spec(**base, workers=1)))
    text4 = cli.format_csv(cli.run_sweep(_tiny_spec(**base, workers=4)))
    assert text1 == text4


def test_point_seed_stability():
    assert cli.point_seed(1, 0) == cli.point_seed(1, 0)
    assert cli.point_seed(1, 0) != cli.point_seed(1, 1)
    assert cli.point_seed(1, 0) != cli.point_seed(2, 0)


def test_emit_plot_svg(tmp_path):
    spec = _tiny_spec(t_cav_ms="inf", t_atom_ms="inf", n_traj=5,
                      sweep_values="0,1.5")
    rows = cli.run_sweep(spec)
    path = tmp_path / "fig.svg"
    cli.emit_plot(rows, str(path))
    content = path.read_text()
    assert "<svg" in content


def test_main_roundtrip(tmp_path):
    cfgfile = tmp_path / "run.ini"
    cfgfile.write_text("t_cav_ms = inf\nt_atom_ms = inf\nn_traj = 4\n"
                       "sweep_values = 0\n")
    out = tmp_path / "r.csv"
    rc = cli.main(["--config", str(cfgfile), "--out", str(out), "--seed", "5"])
    assert rc == 0
    rows = cli.parse_csv(str(out))
    assert rows[0].n_traj == 4


def test_main_error_paths(tmp_path, capsys):
    bad = tmp_path / "bad.ini"
    bad.write_text("alpha_sq = 2.0\n")
    assert cli.main(["--config", str(bad)]) == 1
    assert "error:" in capsys.readouterr().err
    assert cli.main(["--config", str(tmp_path / "missing.ini")]) == 1


def test_main_env_seed(tmp_path, monkeypatch):
    cfgfile = tmp_path / "run.ini"
    cfgfile.write_text("t_cav_ms = inf\nt_atom_ms = inf\nn_traj = 3\n"
                       "sweep_values = 0\n")
    out1, out2, out3 = (tmp_path / f"r{i}.csv" for i in range(3))
    monkeypatch.setenv(cli.SEED_ENV_VAR, "12345")
    cli.main(["--config", str(cfgfile), "--out", str(out1)])
    monkeypatch.delenv(cli.SEED_ENV_VAR)
    cli.main(["--config", str(cfgfile), "--out", str(out2), "--seed", "12345"])
    cli.main(["--config", str(cfgfile), "--out", str(out3)])
    assert out1.read_text() == out2.read_text()
    assert out1.read_text() != out3.read_text()  # default seed differs


def test_no_correction_flag(tmp_path):
    cfgfile = tmp_path / "run.ini"
    cfgfile.write_text("t_cav_ms = inf\nt_atom_ms = inf\nn_traj = 30\n"
                       "sweep_values = 2.0\n")
    out = tmp_path / "r.csv"
    assert cli.main(["--config", str(cfgfile), "--out", str(out),
                     "--no-correction"]) == 0
    row = cli.parse_csv(str(out))[0]
    assert row.f_corr == row.f_uncorr  # feedback withheld in both variants


def test_analytic_only(tmp_path):
    out = tmp_path / "model.csv"
    plot = tmp_path / "model.svg"
    assert cli.main(["--analytic-only", "--out", str(out),
                     "--plot", str(plot)]) == 0
    lines = out.read_text().strip().splitlines()
    assert lines[0] == "phi_max,f_nofb_ave,f_fb_ave"
    assert len(lines) == 66
    first = lines[1].split(",")
    assert float(first[1]) == pytest.approx(1.0)
    assert "<svg" in plot.read_text()


def test_trajectory_log_from_sweep(tmp_path):
    log = tmp_path / "traj"
    spec = _tiny_spec(t_cav_ms="inf", t_atom_ms="inf", n_traj=4,
                      sweep_values="1.0", traj_log=str(log))
    cli.run_sweep(spec)
    assert (tmp_path / "traj.000.ndjson").exists()
    assert len((tmp_path / "traj.000.ndjson").read_text().splitlines()) == 4
