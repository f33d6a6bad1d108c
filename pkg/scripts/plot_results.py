#!/usr/bin/env python3
"""Plot the CSV output of scripts/run_all.py.

Usage:
    python scripts/plot_results.py [--results results] [--out figures]

Skips any figure whose input file is missing, so it works on partial runs.
"""
import argparse
import pathlib

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from winfree_uq.csvio import read_csv


def _load(path):
    meta, columns, rows = read_csv(path)
    data = np.asarray(rows, dtype=float) if rows else np.empty((0, len(columns)))
    return meta, {c: data[:, i] for i, c in enumerate(columns)}


def plot_mean_field(results, outdir):
    path = results / "mean_field" / "mean_field_density.csv"
    if not path.exists():
        return
    _, d = _load(path)
    sigmas = np.unique(d["sigma0_sq"])
    times = np.unique(d["t"])
    fig, axes = plt.subplots(len(sigmas), len(times), figsize=(3.2 * len(times), 2.6 * len(sigmas)),
                             sharex=True, squeeze=False)
    for i, s2 in enumerate(sigmas):
        for j, t in enumerate(times):
            m = (d["sigma0_sq"] == s2) & (d["t"] == t)
            ax = axes[i][j]
            ax.plot(d["theta"][m], d["f_kinetic"][m], lw=1.2, label="kinetic")
            ax.plot(d["theta"][m], d["f_particle"][m], lw=0.8, ls="--", label="particles")
            ax.set_title(f"$\\sigma_0^2$={s2:g}, t={t:g}", fontsize=9)
    axes[0][0].legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(outdir / "mean_field_density.png", dpi=150)
    plt.close(fig)


def plot_bands(results, outdir):
    path = results / "bands" / "bands.csv"
    if not path.exists():
        return
    _, d = _load(path)
    fig, ax = plt.subplots(figsize=(5, 3.2))
    for s2 in np.unique(d["sigma0_sq"]):
        m = d["sigma0_sq"] == s2
        ax.plot(d["theta"][m], d["mean"][m], lw=1.2, label=f"$\\sigma_0^2$={s2:g}")
        ax.fill_between(d["theta"][m], d["lower"][m], d["upper"][m], alpha=0.25)
    ax.set_xlabel(r"$\theta$")
    ax.set_ylabel("density")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(outdir / "bands.png", dpi=150)
    plt.close(fig)


def plot_spectral_error(results, outdir):
    path = results / "spectral_error" / "spectral_error.csv"
    if not path.exists():
        return
    meta, columns, rows = read_csv(path)
    fig, ax = plt.subplots(figsize=(5, 3.2))
    series = {}
    for fam, kap, deg, err in rows:
        series.setdefault((fam, float(kap)), []).append((int(float(deg)), float(err)))
    for (fam, kap), pts in sorted(series.items()):
        pts.sort()
        ax.semilogy([p[0] for p in pts], [max(p[1], 1e-17) for p in pts],
                    marker="o", ms=3, lw=1.0, label=f"{fam}, $\\kappa$={kap:g}")
    ax.set_xlabel("chaos degree M")
    ax.set_ylabel(r"$L^2_z$ temperature error")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(outdir / "spectral_error.png", dpi=150)
    plt.close(fig)


def plot_death(results, outdir):
    path = results / "death_sweep" / "death_thresholds.csv"
    if not path.exists():
        return
    _, d = _load(path)
    fig, ax = plt.subplots(figsize=(5, 3.2))
    for z in np.unique(d["z"]):
        m = d["z"] == z
        ax.plot(d["gamma"][m], d["kappa_threshold"][m], marker="o", ms=3, lw=1.0, label=f"z={z:g}")
    ax.set_xlabel(r"$\gamma$")
    ax.set_ylabel(r"$\kappa$ threshold")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(outdir / "death_thresholds.png", dpi=150)
    plt.close(fig)


def plot_sensitivity(results, outdir):
    path = results / "sensitivity" / "sensitivity_nodes.csv"
    if not path.exists():
        return
    _, d = _load(path)
    fig, ax = plt.subplots(figsize=(5, 3.2))
    for z in np.unique(d["z"]):
        m = d["z"] == z
        line, = ax.semilogy(d["t"][m], np.maximum(d["dz_norm"][m], 1e-17), lw=1.0, label=f"z={z:.2f}")
        ax.semilogy(d["t"][m], np.maximum(d["envelope"][m], 1e-17), lw=0.8, ls=":",
                    color=line.get_color())
    ax.set_xlabel("t")
    ax.set_ylabel(r"$|\partial_z\Theta|$ (solid) vs envelope (dotted)")
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(outdir / "sensitivity_envelope.png", dpi=150)
    plt.close(fig)


def plot_influence(results, outdir):
    for sub in ("influence_profile", "death_sweep"):
        path = results / sub / "influence_profile.csv"
        if path.exists():
            break
    else:
        return
    _, d = _load(path)
    fig, ax = plt.subplots(figsize=(5, 3.2))
    for z in np.unique(d["z"]):
        m = d["z"] == z
        ax.plot(d["theta"][m], d["influence"][m], lw=1.0, label=f"z={z:g}")
    ax.set_xlabel(r"$\theta$")
    ax.set_ylabel(r"$I(\theta)$")
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(outdir / "influence_profiles.png", dpi=150)
    plt.close(fig)


def run(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--results", default="results")
    ap.add_argument("--out", default="figures")
    args = ap.parse_args(argv)
    results = pathlib.Path(args.results)
    outdir = pathlib.Path(args.out)
    outdir.mkdir(parents=True, exist_ok=True)
    for fn in (plot_mean_field, plot_bands, plot_spectral_error, plot_death,
               plot_sensitivity, plot_influence):
        fn(results, outdir)
    print(f"figures written to {outdir}")
    return 0


if __name__ == "__main__":
    raise SystemExit(run())
