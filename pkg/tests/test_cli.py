"""Config parsing, validation, exit codes, deterministic CSV emission, and a
couple of reduced end-to-end experiment runs."""
import json
import math
import os

import numpy as np
import pytest

from winfree_uq import __version__
from winfree_uq import cli
from winfree_uq import deathstate as ds
from winfree_uq.csvio import config_digest, read_csv, write_csv
from winfree_uq.errors import ConfigError


def _run(*argv):
    return cli.main(list(argv))


def _rows(path, columns=None):
    meta, cols, rows = read_csv(path)
    if columns is not None:
        assert cols == list(columns)
    return meta, rows


# ---------------------------------------------------------------------------
# config plumbing
# ---------------------------------------------------------------------------

def test_parse_override():
    assert cli.parse_override("model.kappa=2.5") == ("model.kappa", 2.5)
    assert cli.parse_override("seed=7") == ("seed", 7)
    assert cli.parse_override("sweep.z_list=[1.0, 2.0]") == ("sweep.z_list",
                                                             [1.0, 2.0])
    # unquoted strings are not valid TOML values; keep them verbatim
    assert cli.parse_override("exponent.family=uniform-affine") \
        == ("exponent.family", "uniform-affine")
    with pytest.raises(ConfigError):
        cli.parse_override("no-equals-sign")


def test_build_config_coercion():
    config = cli.build_config({"model.kappa": 2, "model.n_particles": 50.0,
                               "sweep.z_list": [1, 2]})
    assert config.kappa == 2.0 and isinstance(config.kappa, float)
    assert config.n_particles == 50 and isinstance(config.n_particles, int)
    assert config.z_list == (1.0, 2.0)
    with pytest.raises(ConfigError):
        cli.build_config({"model.oops": 1.0})
    with pytest.raises(ConfigError):
        cli.build_config({"model.n_particles": 2.5})
    with pytest.raises(ConfigError):
        cli.build_config({"model.kappa": True})
    with pytest.raises(ConfigError):
        cli.build_config({"model.kappa": "strong"})
    with pytest.raises(ConfigError):
        cli.build_config({"sweep.z_list": 3.0})


def test_load_config_file(tmp_path):
    path = tmp_path / "run.toml"
    path.write_text('seed = 4\n[model]\nkappa = 0.3\nn_theta = 31\n')
    flat = cli.load_config_file(str(path))
    assert flat == {"seed": 4, "model.kappa": 0.3, "model.n_theta": 31}
    with pytest.raises(ConfigError):
        cli.load_config_file(str(tmp_path / "missing.toml"))
    bad = tmp_path / "bad.toml"
    bad.write_text("seed = = 4\n")
    with pytest.raises(ConfigError):
        cli.load_config_file(str(bad))


def test_validate_config_field_rules():
    def bad(**kw):
        config = cli.ExperimentConfig(**kw)
        with pytest.raises(ConfigError):
            cli.validate_config(config)

    bad(experiment="tea-leaves")
    bad(seed=-1)
    bad(ref_degree=5, max_degree=9)
    bad(snapshot_times=(0.0, 0.3), t_end=1.0, dt_particle=0.07,
        experiment="mean-field")  # 0.3 not a multiple of 0.07
    bad(snapshot_times=(0.5, 0.25))
    bad(c=3.5)
    bad(z_lo=0.5)              # exponent support must sit in [1, inf)
    bad(family="gaussian-square", z_shift=0.2)
    bad(freq_kind="uniform", freq_gamma=0.0)
    bad(n_theta=4)
    bad(gamma_list=(0.2, 1.1))
    bad(u_points=1)


def test_assemble_config_precedence(tmp_path):
    path = tmp_path / "run.toml"
    path.write_text('seed = 5\n[model]\nkappa = 0.3\nt_end = 2.0\n')
    parser = cli.build_parser()
    args = parser.parse_args(["influence-profile", "--config", str(path),
                              "--override", "model.kappa=0.7",
                              "--seed", "9"])
    config = cli.assemble_config(args)
    assert config.kappa == 0.7          # override beats the file
    assert config.seed == 9             # flag beats the file
    assert config.t_end == 2.0          # file beats the default
    assert config.experiment == "influence-profile"


def test_assemble_config_experiment_mismatch(tmp_path):
    path = tmp_path / "run.toml"
    path.write_text('experiment = "bands"\n')
    args = cli.build_parser().parse_args(["trapping", "--config", str(path)])
    with pytest.raises(ConfigError):
        cli.assemble_config(args)


def test_config_digest_is_stable_and_sensitive():
    a = config_digest({"x": 1, "y": [1.0, 2.0]})
    b = config_digest({"y": [1.0, 2.0], "x": 1})
    assert a == b
    assert len(a) == 16 and all(ch in "0123456789abcdef" for ch in a)
    assert config_digest({"x": 2, "y": [1.0, 2.0]}) != a


def test_csv_roundtrip_and_sorted_meta(tmp_path):
    path = tmp_path / "t.csv"
    rows = [(0.1, 1, "label"), (1.0 / 3.0, -2, "other"), (1e308, 0, "x")]
    write_csv(str(path), ["a", "b", "c"], rows, {"zeta": 1.5, "alpha": "s"})
    meta, cols, back = read_csv(str(path))
    assert cols == ["a", "b", "c"]
    assert meta == {"zeta": "1.5", "alpha": "s"}
    for want, got in zip(rows, back):
        assert got[0] == want[0]        # %.17g round-trips doubles exactly
        assert got[1] == want[1]
        assert got[2] == want[2]
    lines = path.read_text().splitlines()
    assert lines[0] == "# alpha = s" and lines[1] == "# zeta = 1.5"


# ---------------------------------------------------------------------------
# exit codes
# ---------------------------------------------------------------------------

def test_exit_zero_on_success(tmp_path, capsys):
    out = tmp_path / "res"
    rc = _run("influence-profile", "--out", str(out),
              "--override", "sweep.z_list=[1.0, 3.0, 9.0]",
              "--override", "sweep.profile_points=41")
    assert rc == 0
    printed = capsys.readouterr().out
    assert "influence_profile.csv" in printed


def test_exit_two_on_config_error(tmp_path, capsys):
    out = tmp_path / "res"
    rc = _run("trapping", "--out", str(out), "--override", "model.bogus=1")
    assert rc == 2
    assert "config error" in capsys.readouterr().err
    assert not out.exists()  # validation failed before any computation


def test_exit_three_on_numeric_failure(tmp_path, capsys):
    # a dt_kinetic far above the d_theta^2 step rule passes static validation
    # but trips the CFL guard inside the solver
    rc = _run("mean-field", "--out", str(tmp_path / "res"),
              "--override", "model.n_particles=10",
              "--override", "model.n_theta=16",
              "--override", "model.chaos_degree=0",
              "--override", "model.dt_particle=0.05",
              "--override", "model.snapshot_times=[0.0, 1.0]",
              "--override", "model.t_end=1.0",
              "--override", "model.dt_kinetic=1.0")
    assert rc == 3
    assert "numeric failure" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# reduced end-to-end runs
# ---------------------------------------------------------------------------

MEAN_FIELD_ARGS = (
    "--override", "model.n_particles=500",
    "--override", "model.n_theta=16",
    "--override", "model.chaos_degree=1",
    "--override", "model.kappa=0.5",
    "--override", "model.dt_particle=0.02",
    "--override", "model.snapshot_times=[0.0, 0.1]",
    "--override", "model.t_end=0.1",
)


def test_mean_field_determinism_byte_identical(tmp_path):
    outs = []
    for name in ("one", "two"):
        out = tmp_path / name
        assert _run("mean-field", "--out", str(out), "--seed", "11",
                    *MEAN_FIELD_ARGS) == 0
        outs.append(out)
    names = sorted(os.listdir(outs[0]))
    assert names == sorted(os.listdir(outs[1]))
    assert "manifest.json" in names
    for name in names:
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()
    # a different seed must actually change the sampled data
    out3 = tmp_path / "three"
    assert _run("mean-field", "--out", str(out3), "--seed", "12",
                *MEAN_FIELD_ARGS) == 0
    assert (out3 / "mean_field_density.csv").read_bytes() \
        != (outs[0] / "mean_field_density.csv").read_bytes()


def test_manifest_and_headers(tmp_path):
    out = tmp_path / "res"
    assert _run("mean-field", "--out", str(out), "--seed", "11",
                *MEAN_FIELD_ARGS) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["experiment"] == "mean-field"
    assert manifest["version"] == __version__
    assert manifest["seed"] == 11
    for name in manifest["files"].values():
        assert (out / name).exists()
    meta, _ = _rows(str(out / "mean_field_l1.csv"),
                    ("sigma0_sq", "t", "l1_distance"))
    assert meta["config_digest"] == manifest["config_digest"]
    assert meta["rng"] == "philox"
    assert meta["version"] == __version__


def test_threads_do_not_change_output(tmp_path):
    base = ("sensitivity",
            "--override", "ensemble.n_oscillators=3",
            "--override", "ensemble.v_inf=0.05",
            "--override", "ensemble.quad_nodes=2",
            "--override", "model.t_end=1.0",
            "--override", "model.record_every=50")
    outs = []
    for name, threads in (("t1", "1"), ("t2", "2")):
        out = tmp_path / name
        assert _run(*base, "--out", str(out), "--threads", threads) == 0
        outs.append(out)
    for name in sorted(os.listdir(outs[0])):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes()


def test_bands_degree_zero_has_zero_width(tmp_path):
    out = tmp_path / "res"
    assert _run("bands", "--out", str(out),
                "--override", "model.n_theta=16",
                "--override", "model.chaos_degree=0",
                "--override", "model.band_time=0.05",
                "--override", "model.sigma0_sq_list=[0.1]") == 0
    _, rows = _rows(str(out / "bands.csv"),
                    ("sigma0_sq", "theta", "mean", "lower", "upper"))
    for _, _, mean, lower, upper in rows:
        assert lower == mean == upper


def test_influence_mass_concentrates_with_z(tmp_path):
    out = tmp_path / "res"
    assert _run("influence-profile", "--out", str(out),
                "--override", "sweep.z_list=[1.0, 3.0, 9.0]") == 0
    _, rows = _rows(str(out / "influence_mass.csv"),
                    ("z", "window", "mass", "fraction"))
    fractions = [r[3] for r in rows]
    assert fractions == sorted(fractions)
    assert all(0.0 < f < 1.0 for f in fractions)


def test_death_sweep_reduced(tmp_path):
    out = tmp_path / "res"
    assert _run("death-sweep", "--out", str(out),
                "--override", "sweep.z_list=[1.0, 2.0]",
                "--override", "sweep.gamma_list=[0.1, 0.4]",
                "--override", "sweep.kappa_factors=[0.8, 1.5]",
                "--override", "sweep.nu0_list=[0.0, 0.5]",
                "--override", "sweep.c_list=[0.8, 2.0]",
                "--override", "sweep.u_points=21",
                "--override", "sweep.profile_points=41") == 0
    _, thr = _rows(str(out / "death_thresholds.csv"),
                   ("gamma", "z", "kappa_threshold", "x_star"))
    for gamma, z, kthr, xs in thr:
        assert kthr == pytest.approx(ds.kappa_threshold_uniform(gamma, z))
        if gamma < ds.gamma_star(z):
            assert xs == pytest.approx(ds.x_star(gamma, z))
        else:
            assert math.isnan(xs)
    _, rep = _rows(str(out / "death_uniform_reports.csv"))
    for kappa, gamma, z, exists, s1, s2 in rep:
        assert exists == (1.0 if kappa >= ds.kappa_threshold_uniform(gamma, z)
                          else 0.0)
        for s in (s1, s2):
            if not math.isnan(s):
                assert kappa * ds.f_func(s, gamma, z) == pytest.approx(1.0,
                                                                       abs=1e-9)
    _, adj = _rows(str(out / "death_adjoint_bounds.csv"))
    for c, z, beta_z, c_st, gain_residual, decay in adj:
        assert abs(gain_residual) < 1e-10
        assert 0.0 < c_st <= beta_z + 1e-12


def test_trapping_reduced(tmp_path):
    out = tmp_path / "res"
    assert _run("trapping", "--out", str(out),
                "--override", "ensemble.n_oscillators=4",
                "--override", "ensemble.v_inf=0.1",
                "--override", "ensemble.quad_nodes=2",
                "--override", "model.t_end=10.0",
                "--override", "model.record_every=20") == 0
    _, rows = _rows(str(out / "trapping_nodes.csv"))
    for row in rows:
        z, kappa, confined, entrance, bound, *_ , pattern = row
        assert confined == 1.0
        assert entrance <= bound
        # trapped phases settle at fixed points, so rotation numbers vanish
        assert pattern == "death"
    _, cond = _rows(str(out / "trapping_conditions.csv"))
    assert {int(r[0]) for r in cond} == {1, 2, 3}
