"""Experiment runner and data emitter.

Every experiment is a pure function of an ExperimentConfig: it writes
plot-ready CSV files (deterministic bytes for a fixed config + seed) plus a
small JSON manifest into the output directory and returns the file map.
Monte Carlo draws go through a counter-based generator seeded per task, so
reruns and N-sweeps reuse matched randomness.

Exit codes: 0 success, 2 configuration error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import asdict, dataclass, fields

import numpy as np
import tomli
from scipy.integrate import trapezoid

from . import __version__
from .analysis import (beta, c_star, decay_rate, deterministic_thresholds,
                       gain, kappa_threshold, sensitivity_coeffs,
                       sensitivity_envelope, trapped_regime_report)
from .csvio import config_digest, write_csv
from .deathstate import (gamma_star, h_func, h_peak_location,
                         kappa_threshold_dirac, kappa_threshold_uniform,
                         solve_sigma_dirac, solve_sigma_uniform, x_star,
                         y_star)
from .errors import ConfigError, WinfreeError
from .kinetic import (FrequencyModel, ThetaGrid, evolve, init_bimodal,
                      l1_distance, moments, reconstruct_particle_density,
                      temperature)
from .particle import (ParticleConfig, classify_pattern, deviation_l1,
                       entrance_time, h1z_norms, integrate, integrate_sg,
                       integrate_with_sensitivity, rotation_numbers,
                       trapping_check)
from .uncertainty import (GAUSSIAN_SQUARE, UNIFORM_AFFINE, RandomParameter,
                          basis_for, default_order, influence, make_quadrature)

EXPERIMENTS = ("mean-field", "bands", "spectral-error", "death-sweep",
               "sensitivity", "trapping", "influence-profile")


@dataclass
class ExperimentConfig:
    experiment: str = ""
    seed: int = 1729
    out: str = "results"
    threads: int = 1
    # model scale and discretization
    n_particles: int = 10_000
    chaos_degree: int = 2
    ref_degree: int = 25
    max_degree: int = 9
    error_samples: int = 20_000
    kappa: float = 1.0
    kappa_list: tuple = (0.1, 1.0)
    n_theta: int = 101
    t_end: float = 1.0
    dt_particle: float = 1e-2
    dt_kinetic: float = 0.0  # 0 -> d_theta^2
    snapshot_times: tuple = (0.0, 0.25, 0.5, 1.0)
    band_time: float = 0.5
    sigma0_sq_list: tuple = (0.1, 0.01)
    theta_bar_1: float = math.pi / 4.0
    theta_bar_2: float = math.pi / 2.0
    record_every: int = 10
    # exponent law
    family: str = UNIFORM_AFFINE
    z_lo: float = 1.0
    z_hi: float = 3.0
    z_shift: float = 1.5
    # frequency model of the kinetic solver
    freq_kind: str = "zero"
    nu0: float = 0.5
    freq_gamma: float = 0.2
    freq_nodes: int = 16
    # small trapped ensembles (sensitivity / trapping)
    n_oscillators: int = 10
    v_inf: float = 0.1
    c: float = 1.2
    kappa_factor: float = 1.5
    quad_nodes: int = 0  # 0 -> default order for chaos_degree
    # sweep grids
    z_list: tuple = (1.0, 2.0, 3.0, 5.0, 9.0)
    gamma_list: tuple = (0.05, 0.1, 0.2, 0.3, 0.45, 0.6, 0.8)
    kappa_factors: tuple = (0.8, 1.0, 1.5, 2.0)
    nu0_list: tuple = (0.0, 0.5, 1.0)
    c_list: tuple = (0.8, 1.2, 2.0)
    u_points: int = 201
    window: float = 0.5
    profile_points: int = 241


# Dotted config-file keys -> dataclass fields. The file groups knobs into
# small tables purely for readability.
_KEYS = {
    "experiment": "experiment", "seed": "seed", "out": "out", "threads": "threads",
    "model.n_particles": "n_particles", "model.chaos_degree": "chaos_degree",
    "model.ref_degree": "ref_degree", "model.max_degree": "max_degree",
    "model.error_samples": "error_samples",
    "model.kappa": "kappa", "model.kappa_list": "kappa_list",
    "model.n_theta": "n_theta", "model.t_end": "t_end",
    "model.dt_particle": "dt_particle", "model.dt_kinetic": "dt_kinetic",
    "model.snapshot_times": "snapshot_times", "model.band_time": "band_time",
    "model.sigma0_sq_list": "sigma0_sq_list",
    "model.theta_bar_1": "theta_bar_1", "model.theta_bar_2": "theta_bar_2",
    "model.record_every": "record_every",
    "exponent.family": "family", "exponent.lo": "z_lo", "exponent.hi": "z_hi",
    "exponent.shift": "z_shift",
    "frequency.kind": "freq_kind", "frequency.nu0": "nu0",
    "frequency.gamma": "freq_gamma", "frequency.n_nodes": "freq_nodes",
    "ensemble.n_oscillators": "n_oscillators", "ensemble.v_inf": "v_inf",
    "ensemble.c": "c", "ensemble.kappa_factor": "kappa_factor",
    "ensemble.quad_nodes": "quad_nodes",
    "sweep.z_list": "z_list", "sweep.gamma_list": "gamma_list",
    "sweep.kappa_factors": "kappa_factors", "sweep.nu0_list": "nu0_list",
    "sweep.c_list": "c_list", "sweep.u_points": "u_points",
    "sweep.window": "window", "sweep.profile_points": "profile_points",
}

_FIELD_TYPES = {f.name: type(f.default) for f in fields(ExperimentConfig)}


def _coerce(key: str, value, target_type):
    if target_type is tuple:
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{key}: expected a list")
        try:
            return tuple(float(v) for v in value)
        except (TypeError, ValueError):
            raise ConfigError(f"{key}: list entries must be numbers") from None
    if target_type is int:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{key}: expected an integer")
        if isinstance(value, float) and not value.is_integer():
            raise ConfigError(f"{key}: expected an integer, got {value}")
        return int(value)
    if target_type is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{key}: expected a number")
        return float(value)
    if target_type is str:
        if not isinstance(value, str):
            raise ConfigError(f"{key}: expected a string")
        return value
    raise ConfigError(f"{key}: unsupported config value")  # pragma: no cover


def _flatten(doc: dict) -> dict:
    flat = {}
    for key, value in doc.items():
        if isinstance(value, dict):
            for sub, v in value.items():
                flat[f"{key}.{sub}"] = v
        else:
            flat[key] = value
    return flat


def load_config_file(path: str) -> dict:
    try:
        with open(path, "rb") as fh:
            doc = tomli.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid TOML: {exc}") from None
    return _flatten(doc)


def parse_override(text: str):
    key, sep, raw = text.partition("=")
    if not sep or not key:
        raise ConfigError(f"override {text!r} is not of the form key=value")
    try:
        value = tomli.loads(f"v = {raw}")["v"]
    except tomli.TOMLDecodeError:
        value = raw  # bare strings may arrive unquoted
    return key.strip(), value


def build_config(flat: dict) -> ExperimentConfig:
    config = ExperimentConfig()
    for key, value in flat.items():
        field = _KEYS.get(key)
        if field is None:
            raise ConfigError(f"unknown config key {key!r}")
        setattr(config, field, _coerce(key, value, _FIELD_TYPES[field]))
    return config


def validate_config(config: ExperimentConfig) -> ExperimentConfig:
    """Field-level validation of everything the runners will touch; raises
    before any computation starts."""
    def need(cond, key, msg):
        if not cond:
            raise ConfigError(f"{key}: {msg}")

    if config.experiment:
        need(config.experiment in EXPERIMENTS, "experiment",
             f"must be one of {', '.join(EXPERIMENTS)}")
    need(config.seed >= 0, "seed", "must be nonnegative")
    need(config.threads >= 1, "threads", "must be >= 1")
    need(config.n_particles >= 1, "model.n_particles", "must be >= 1")
    need(config.chaos_degree >= 0, "model.chaos_degree", "must be >= 0")
    need(config.max_degree >= 0, "model.max_degree", "must be >= 0")
    need(config.ref_degree > config.max_degree, "model.ref_degree",
         "reference degree must exceed model.max_degree")
    need(config.error_samples >= 2, "model.error_samples", "must be >= 2")
    need(config.kappa >= 0.0, "model.kappa", "must be >= 0")
    need(len(config.kappa_list) >= 1 and all(k > 0 for k in config.kappa_list),
         "model.kappa_list", "needs positive entries")
    need(config.t_end > 0.0, "model.t_end", "must be positive")
    need(config.dt_particle > 0.0, "model.dt_particle", "must be positive")
    need(config.dt_kinetic >= 0.0, "model.dt_kinetic", "must be >= 0 (0 = d_theta^2)")
    need(all(0.0 <= t <= config.t_end for t in config.snapshot_times)
         and list(config.snapshot_times) == sorted(config.snapshot_times),
         "model.snapshot_times", "must be sorted within [0, t_end]")
    for t in config.snapshot_times:
        steps = t / config.dt_particle
        need(abs(steps - round(steps)) < 1e-9, "model.snapshot_times",
             f"{t} is not a multiple of model.dt_particle")
    need(config.band_time >= 0.0, "model.band_time", "must be >= 0")
    need(all(s > 0.0 for s in config.sigma0_sq_list) and config.sigma0_sq_list,
         "model.sigma0_sq_list", "needs positive entries")
    need(config.record_every >= 0, "model.record_every", "must be >= 0")
    need(config.n_oscillators >= 1, "ensemble.n_oscillators", "must be >= 1")
    need(config.v_inf >= 0.0, "ensemble.v_inf", "must be >= 0")
    need(0.0 < config.c < math.pi, "ensemble.c", "must lie in (0, pi)")
    need(config.kappa_factor > 0.0, "ensemble.kappa_factor", "must be positive")
    need(config.quad_nodes >= 0, "ensemble.quad_nodes", "must be >= 0 (0 = default)")
    need(all(z >= 1.0 for z in config.z_list) and config.z_list,
         "sweep.z_list", "exponents must satisfy z >= 1")
    need(all(0.0 < g < 1.0 for g in config.gamma_list), "sweep.gamma_list",
         "entries must lie in (0, 1)")
    need(all(f > 0.0 for f in config.kappa_factors), "sweep.kappa_factors",
         "entries must be positive")
    need(all(v >= 0.0 for v in config.nu0_list), "sweep.nu0_list",
         "entries must be >= 0")
    need(all(0.0 < c < math.pi for c in config.c_list), "sweep.c_list",
         "entries must lie in (0, pi)")
    need(config.u_points >= 2, "sweep.u_points", "must be >= 2")
    need(config.window > 0.0, "sweep.window", "must be positive")
    need(config.profile_points >= 2, "sweep.profile_points", "must be >= 2")
    # delegate the cross-field rules to the owning constructors
    try:
        _law(config)
    except (ConfigError, ValueError) as exc:
        raise ConfigError(f"exponent.*: {exc}") from None
    try:
        FrequencyModel(config.freq_kind, nu0=config.nu0,
                       gamma=config.freq_gamma, n_nodes=config.freq_nodes)
    except ConfigError as exc:
        raise ConfigError(f"frequency.*: {exc}") from None
    try:
        ThetaGrid(config.n_theta)
    except ConfigError as exc:
        raise ConfigError(f"model.n_theta: {exc}") from None
    return config


# ---------------------------------------------------------------------------
# shared plumbing
# ---------------------------------------------------------------------------

def _law(config: ExperimentConfig) -> RandomParameter:
    return RandomParameter(config.family, lo=config.z_lo, hi=config.z_hi,
                           shift=config.z_shift)


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Counter-based generator; independent streams come from spawn keys, so
    matched seeds give matched draws across experiments and N-sweeps."""
    return np.random.Generator(
        np.random.Philox(np.random.SeedSequence([int(seed), int(stream)])))


def sample_bimodal_phases(n: int, theta_bar_1: float, theta_bar_2: float,
                          sigma0_sq: float, rng: np.random.Generator) -> np.ndarray:
    """Stratified inverse-CDF draw from the two-Gaussian initial density.

    One shared uniform shift keeps the sample unbiased while the strata kill
    most of the histogram noise, which is what the mean-field comparison
    actually measures.
    """
    edges = np.linspace(0.0, 2.0 * math.pi, 4097)
    mids = 0.5 * (edges[:-1] + edges[1:])
    pdf = (np.exp(-0.5 * (mids - theta_bar_1) ** 2 / sigma0_sq)
           + np.exp(-0.5 * (mids - theta_bar_2) ** 2 / sigma0_sq))
    cdf = np.concatenate(([0.0], np.cumsum(pdf)))
    cdf /= cdf[-1]
    u = (np.arange(n) + rng.random()) / n
    return np.interp(u, cdf, edges)


def _meta(config: ExperimentConfig, **extra) -> dict:
    payload = asdict(config)
    payload.pop("out", None)      # location and parallelism do not affect
    payload.pop("threads", None)  # results, so keep them out of the digest
    meta = {"config_digest": config_digest(payload),
            "experiment": config.experiment, "seed": config.seed,
            "rng": "philox", "version": __version__}
    meta.update(extra)
    return meta


def _write(config: ExperimentConfig, name: str, columns, rows, **extra) -> str:
    os.makedirs(config.out, exist_ok=True)
    path = os.path.join(config.out, name)
    write_csv(path, list(columns), rows, _meta(config, **extra))
    return path


def _finish(config: ExperimentConfig, files: dict) -> dict:
    manifest = {"experiment": config.experiment, "version": __version__,
                "seed": config.seed,
                "config_digest": _meta(config)["config_digest"],
                "files": {k: os.path.basename(v) for k, v in sorted(files.items())}}
    os.makedirs(config.out, exist_ok=True)
    path = os.path.join(config.out, "manifest.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    files = dict(files)
    files["manifest"] = path
    return files


def _flag(x) -> int:
    return -1 if x is None else int(bool(x))


def _map(config: ExperimentConfig, fn, items: list) -> list:
    """Order-preserving map, fanned over a thread pool when threads > 1.

    Node runs are pure, so the only thing parallelism could disturb is row
    order, and map keeps that fixed.
    """
    if config.threads > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


# ---------------------------------------------------------------------------
# experiments
# ---------------------------------------------------------------------------

def run_mean_field(config: ExperimentConfig) -> dict:
    """Kinetic vs particle expected densities for both initial spreads."""
    rp = _law(config)
    basis = basis_for(rp, config.chaos_degree)
    quad = make_quadrature(rp, default_order(config.chaos_degree))
    grid = ThetaGrid(config.n_theta)
    phi = basis.eval_matrix(quad.h_nodes)
    density_rows, l1_rows = [], []
    for j, s2 in enumerate(config.sigma0_sq_list):
        field = init_bimodal(grid, config.theta_bar_1, config.theta_bar_2, s2,
                             rp, basis, quad, FrequencyModel("zero"), config.kappa)
        theta0 = sample_bimodal_phases(config.n_particles, config.theta_bar_1,
                                       config.theta_bar_2, s2,
                                       make_rng(config.seed, stream=j))
        pconf = ParticleConfig(nu=np.zeros(config.n_particles),
                               kappa=config.kappa, dt=config.dt_particle)
        coeffs = np.zeros((config.n_particles, config.chaos_degree + 1))
        coeffs[:, 0] = theta0
        t_now = 0.0
        for t_snap in config.snapshot_times:
            if t_snap > t_now:
                field = evolve(field, t_snap, dt=config.dt_kinetic or None)
                _, snaps = integrate_sg(coeffs, pconf, basis, quad,
                                        t_snap - t_now, record_every=0)
                coeffs = snaps[-1]
                t_now = t_snap
            kin = moments(field).mean_density
            part = reconstruct_particle_density((coeffs @ phi.T).T, grid,
                                                quad.weights).mean
            density_rows.extend(
                (s2, t_snap, th, kin[m], part[m])
                for m, th in enumerate(grid.centers))
            l1_rows.append((s2, t_snap, l1_distance(kin, part, grid)))
    files = {
        "density": _write(config, "mean_field_density.csv",
                          ("sigma0_sq", "t", "theta", "f_kinetic", "f_particle"),
                          density_rows),
        "l1": _write(config, "mean_field_l1.csv",
                     ("sigma0_sq", "t", "l1_distance"), l1_rows),
    }
    return _finish(config, files)


def run_bands(config: ExperimentConfig) -> dict:
    """Kinetic mean density with +-one-standard-deviation bands at band_time."""
    rp = _law(config)
    basis = basis_for(rp, config.chaos_degree)
    quad = make_quadrature(rp, default_order(config.chaos_degree))
    grid = ThetaGrid(config.n_theta)
    rows = []
    for s2 in config.sigma0_sq_list:
        field = init_bimodal(grid, config.theta_bar_1, config.theta_bar_2, s2,
                             rp, basis, quad, FrequencyModel("zero"), config.kappa)
        field = evolve(field, config.band_time, dt=config.dt_kinetic or None)
        mom = moments(field)
        std = np.sqrt(mom.variance_density)
        rows.extend(
            (s2, th, mom.mean_density[m], mom.mean_density[m] - std[m],
             mom.mean_density[m] + std[m])
            for m, th in enumerate(grid.centers))
    files = {"bands": _write(config, "bands.csv",
                             ("sigma0_sq", "theta", "mean", "lower", "upper"),
                             rows, band_time=config.band_time)}
    return _finish(config, files)


def run_spectral_error(config: ExperimentConfig) -> dict:
    """Chaos-truncation error of the uncertain temperature at t_end.

    The reference is a high-degree run of the same ensemble.  Errors are
    Monte Carlo estimates of the L2 distance over the exponent law: the
    temperature of each truncated ensemble is evaluated at germ values
    sampled from the law itself, so every chaos reconstruction stays inside
    the bulk of the measure.  (Evaluating on the reference quadrature
    instead puts the unbounded law's outermost nodes far beyond any
    truncation's resolved span, and the polynomial extrapolation there
    swamps the error for every degree.)
    """
    laws = (RandomParameter(UNIFORM_AFFINE, lo=1.0, hi=3.0),
            RandomParameter(GAUSSIAN_SQUARE, shift=1.5))
    n = config.n_particles
    nu = np.zeros(n)
    rows = []
    for li, rp in enumerate(laws):
        theta0 = sample_bimodal_phases(n, config.theta_bar_1, config.theta_bar_2,
                                       config.sigma0_sq_list[0],
                                       make_rng(config.seed, stream=100 + li))
        rng = make_rng(config.seed, stream=200 + li)
        if rp.family == UNIFORM_AFFINE:
            h_samples = rng.uniform(-1.0, 1.0, size=config.error_samples)
        else:
            h_samples = rng.standard_normal(config.error_samples)
        for kappa in config.kappa_list:
            pconf = ParticleConfig(nu=nu, kappa=kappa, dt=config.dt_particle)
            ref_basis = basis_for(rp, config.ref_degree)
            ref_quad = make_quadrature(rp, default_order(config.ref_degree))
            coeffs = np.zeros((n, config.ref_degree + 1))
            coeffs[:, 0] = theta0
            _, snaps = integrate_sg(coeffs, pconf, ref_basis, ref_quad,
                                    config.t_end, record_every=0)
            th_ref = snaps[-1] @ ref_basis.eval_matrix(h_samples).T
            t_ref = np.asarray(temperature(th_ref.T))
            for m in range(config.max_degree + 1):
                basis = basis_for(rp, m)
                quad = make_quadrature(rp, default_order(m))
                coeffs = np.zeros((n, m + 1))
                coeffs[:, 0] = theta0
                _, snaps = integrate_sg(coeffs, pconf, basis, quad,
                                        config.t_end, record_every=0)
                th_m = snaps[-1] @ basis.eval_matrix(h_samples).T
                t_m = np.asarray(temperature(th_m.T))
                err = float(np.sqrt(np.mean((t_ref - t_m) ** 2)))
                rows.append((rp.family, kappa, m, err))
    files = {"error": _write(config, "spectral_error.csv",
                             ("family", "kappa", "degree", "error"), rows)}
    return _finish(config, files)


def _influence_rows(config: ExperimentConfig):
    th = np.linspace(-math.pi, math.pi, config.profile_points)
    profile = [(z, t, float(influence(t, z)))
               for z in config.z_list for t in th]
    mass = []
    for z in config.z_list:
        xs = np.linspace(-config.window, config.window, 2001)
        inside = float(trapezoid(influence(xs, z), xs))
        mass.append((z, config.window, inside, inside / (2.0 * math.pi)))
    return profile, mass


def run_influence_profile(config: ExperimentConfig) -> dict:
    profile, mass = _influence_rows(config)
    files = {
        "profile": _write(config, "influence_profile.csv",
                          ("z", "theta", "influence"), profile),
        "mass": _write(config, "influence_mass.csv",
                       ("z", "window", "mass", "fraction"), mass),
    }
    return _finish(config, files)


def run_death_sweep(config: ExperimentConfig) -> dict:
    """Amplitude-map surfaces, existence thresholds, self-consistent
    amplitudes, adjoint trapping levels, and influence concentration."""
    u = np.linspace(0.0, 1.0, config.u_points)
    h_rows = [(z, ui, float(h_func(ui, z))) for z in config.z_list for ui in u]
    peak_rows = [(z, h_peak_location(z), float(h_func(h_peak_location(z), z)),
                  y_star(z), gamma_star(z)) for z in config.z_list]

    thr_rows, uniform_rows = [], []
    for z in config.z_list:
        gs = gamma_star(z)
        for g in config.gamma_list:
            thr = kappa_threshold_uniform(g, z)
            xs = x_star(g, z) if g < gs else math.nan
            thr_rows.append((g, z, thr, xs))
            for fac in config.kappa_factors:
                rep = solve_sigma_uniform(fac * thr, g, z)
                roots = list(rep.roots) + [math.nan] * (2 - len(rep.roots))
                uniform_rows.append((fac * thr, g, z, int(rep.exists),
                                     roots[0], roots[1]))
    dirac_rows = []
    for z in config.z_list:
        for nu0 in config.nu0_list:
            thr = kappa_threshold_dirac(nu0, z)
            for fac in config.kappa_factors:
                kap = fac * thr if thr > 0.0 else fac
                rep = solve_sigma_dirac(kap, nu0, z)
                roots = list(rep.roots) + [math.nan] * (2 - len(rep.roots))
                dirac_rows.append((kap, nu0, z, int(rep.exists),
                                   roots[0], roots[1]))
    adjoint_rows = []
    for z in config.z_list:
        for c in config.c_list:
            cs = c_star(c, z)
            adjoint_rows.append((c, z, float(beta(z)), cs,
                                 float(gain(cs, z) - gain(c, z)),
                                 decay_rate(c, z, config.kappa)))
    profile, mass = _influence_rows(config)
    files = {
        "h_surface": _write(config, "death_h_surface.csv",
                            ("z", "u", "h"), h_rows),
        "h_peaks": _write(config, "death_h_peaks.csv",
                          ("z", "u_peak", "h_peak", "y_star", "gamma_star"),
                          peak_rows),
        "thresholds": _write(config, "death_thresholds.csv",
                             ("gamma", "z", "kappa_threshold", "x_star"),
                             thr_rows),
        "uniform_reports": _write(config, "death_uniform_reports.csv",
                                  ("kappa", "gamma", "z", "exists",
                                   "sigma_1", "sigma_2"), uniform_rows),
        "dirac_reports": _write(config, "death_dirac_reports.csv",
                                ("kappa", "nu0", "z", "exists",
                                 "sigma_1", "sigma_2"), dirac_rows),
        "adjoint": _write(config, "death_adjoint_bounds.csv",
                          ("c", "z", "beta", "c_star", "gain_residual",
                           "decay_rate"), adjoint_rows),
        "influence_profile": _write(config, "influence_profile.csv",
                                    ("z", "theta", "influence"), profile),
        "influence_mass": _write(config, "influence_mass.csv",
                                 ("z", "window", "mass", "fraction"), mass),
    }
    return _finish(config, files)


def _trapped_ensemble(config: ExperimentConfig):
    """Shared setup of the small fixed-z node runs: frequencies, start inside
    the trapping box, coupling set relative to the worst node threshold."""
    rp = _law(config)
    quad = make_quadrature(rp, config.quad_nodes
                           or default_order(config.chaos_degree))
    n = config.n_oscillators
    nu = np.linspace(-config.v_inf, config.v_inf, n) if n > 1 else np.zeros(1)
    thr = max(kappa_threshold(config.c, float(z), config.v_inf)
              for z in quad.z_nodes)
    kappa = config.kappa_factor * thr if thr > 0.0 else config.kappa
    theta0 = np.linspace(-0.8 * config.c, 0.8 * config.c, n)
    pconf = ParticleConfig(nu=nu, kappa=kappa, dt=config.dt_particle)
    return quad, pconf, theta0


def run_sensitivity(config: ExperimentConfig) -> dict:
    """Joint phase + exponent-sensitivity runs per quadrature node with the
    analytic two-window envelopes and the H1-in-z time series."""
    quad, pconf, theta0 = _trapped_ensemble(config)
    record = config.record_every or 1

    def one_node(z):
        times, th, dz = integrate_with_sensitivity(
            theta0, z, pconf, config.t_end, record_every=record)
        tau = entrance_time(times, th, c_star(config.c, z))
        tau_env = tau if math.isfinite(tau) else times[-1] + 1.0
        coeffs = sensitivity_coeffs(config.c, z, pconf.kappa, pconf.n)
        env = sensitivity_envelope(times, coeffs, tau_env)
        return times, th, dz, env

    results = _map(config, one_node, [float(z) for z in quad.z_nodes])
    node_rows = []
    times = results[0][0]
    for zq, (times, th, dz, env) in zip(quad.z_nodes, results):
        th_norm = np.sqrt(np.sum(th ** 2, axis=-1))
        dz_norm = np.sqrt(np.sum(dz ** 2, axis=-1))
        node_rows.extend(
            (float(zq), t, th_norm[i], dz_norm[i], env[i])
            for i, t in enumerate(times))
    th_all = np.stack([r[1] for r in results])  # (Q, n_times, N)
    dz_all = np.stack([r[2] for r in results])
    h1_rows = []
    for i, t in enumerate(times):
        norms = h1z_norms(th_all[:, i], dz_all[:, i], quad.weights)
        h1_rows.append((t, norms.theta, norms.dz_theta, norms.total))
    files = {
        "nodes": _write(config, "sensitivity_nodes.csv",
                        ("z", "t", "theta_norm", "dz_norm", "envelope"),
                        node_rows, kappa=pconf.kappa),
        "h1z": _write(config, "sensitivity_h1z.csv",
                      ("t", "theta_l2z", "dz_l2z", "h1z"), h1_rows,
                      kappa=pconf.kappa),
    }
    return _finish(config, files)


def run_trapping(config: ExperimentConfig) -> dict:
    """Per-node trapping verdicts against the closed-form predictions, plus
    the integer-exponent sufficient-condition report."""
    quad, pconf, theta0 = _trapped_ensemble(config)
    record = config.record_every or 1

    def one_node(z):
        report = trapped_regime_report(pconf.nu, pconf.kappa, config.c, z)
        times, th = integrate(theta0, z, pconf, config.t_end,
                              record_every=record)
        check = trapping_check(times, th, config.c, report.c_star)
        rho = rotation_numbers(times, th, burn_in=0.5 * config.t_end)
        pattern = classify_pattern(rho.rho, tol=0.05)
        slope = math.nan
        eq_res = math.nan
        if report.equilibrium is not None:
            eq_res = report.equilibrium.residual
            mask = times >= min(check.entrance, times[-1])
            dev = deviation_l1(th[mask], report.equilibrium.phases)
            if np.all(dev > 0.0) and int(np.sum(mask)) >= 2:
                slope = float(np.polyfit(times[mask], np.log(dev), 1)[0])
        return (z, pconf.kappa, int(check.confined), check.entrance,
                report.entrance_bound, slope, report.decay_rate,
                eq_res, pattern)

    rows = _map(config, one_node, [float(z) for z in quad.z_nodes])
    cond_rows = []
    for n_int in (1, 2, 3):
        rep = deterministic_thresholds(n_int, pconf.nu, pconf.kappa,
                                       alpha=config.c, theta_in=theta0)
        cond_rows.append((n_int, pconf.kappa,
                          _flag(rep.incoherence.holds), rep.incoherence.slack,
                          _flag(rep.death.holds), rep.death.slack,
                          _flag(rep.locking.holds), rep.locking.slack))
    files = {
        "nodes": _write(config, "trapping_nodes.csv",
                        ("z", "kappa", "confined", "entrance_measured",
                         "entrance_bound", "decay_slope", "decay_rate_bound",
                         "equilibrium_residual", "pattern"), rows),
        "conditions": _write(config, "trapping_conditions.csv",
                             ("n", "kappa", "incoherence", "incoherence_slack",
                              "death", "death_slack", "locking",
                              "locking_slack"), cond_rows),
    }
    return _finish(config, files)


RUNNERS = {
    "mean-field": run_mean_field,
    "bands": run_bands,
    "spectral-error": run_spectral_error,
    "death-sweep": run_death_sweep,
    "sensitivity": run_sensitivity,
    "trapping": run_trapping,
    "influence-profile": run_influence_profile,
}


# ---------------------------------------------------------------------------
# command line front end
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="winfree-uq",
        description="Pulse-coupled oscillator experiments with an uncertain "
                    "coupling exponent: emits deterministic CSV data files.")
    sub = parser.add_subparsers(dest="experiment", required=True)
    for name in EXPERIMENTS:
        p = sub.add_parser(name, help=f"run the {name} experiment")
        p.add_argument("--config", help="TOML config file")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int, help="Monte Carlo seed")
        p.add_argument("--threads", type=int, help="worker threads")
        p.add_argument("--override", action="append", default=[],
                       metavar="KEY=VALUE",
                       help="override a config key (dotted path)")
    return parser


def assemble_config(args) -> ExperimentConfig:
    flat = load_config_file(args.config) if args.config else {}
    for text in args.override:
        key, value = parse_override(text)
        flat[key] = value
    config = build_config(flat)
    if config.experiment and config.experiment != args.experiment:
        raise ConfigError(
            f"config file says experiment = {config.experiment!r} but the "
            f"subcommand is {args.experiment!r}")
    config.experiment = args.experiment
    if args.out is not None:
        config.out = args.out
    if args.seed is not None:
        config.seed = args.seed
    if args.threads is not None:
        config.threads = args.threads
    return validate_config(config)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = assemble_config(args)
        files = RUNNERS[config.experiment](config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except WinfreeError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3
    for name in sorted(files):
        print(f"{name}: {files[name]}")
    return 0


if __name__ == "__main__":  # pragma: no cover
    raise SystemExit(main())
