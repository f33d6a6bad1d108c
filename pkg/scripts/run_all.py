#!/usr/bin/env python3
"""Run every experiment from its config file into one results tree.

Usage:
    python scripts/run_all.py [--out results] [--fast] [--only NAME ...]

--fast shrinks ensemble sizes / horizons so the whole sweep finishes in a
couple of minutes (useful as a smoke test before a full run).
"""
import argparse
import pathlib
import sys
import time

from winfree_uq.cli import EXPERIMENTS, main as cli_main

ROOT = pathlib.Path(__file__).resolve().parent.parent
CONFIGS = {name: ROOT / "configs" / (name.replace("-", "_") + ".toml") for name in EXPERIMENTS}

FAST_OVERRIDES = {
    "mean-field": ["model.n_particles=2000", "model.n_theta=61"],
    "bands": ["model.n_theta=61", "model.chaos_degree=3"],
    "spectral-error": ["model.n_particles=400", "model.max_degree=6", "model.ref_degree=15"],
    "death-sweep": ["sweep.u_points=101", "sweep.profile_points=121"],
    "sensitivity": ["model.t_end=10.0", "ensemble.quad_nodes=4", "ensemble.n_oscillators=6"],
    "trapping": ["model.t_end=15.0", "ensemble.quad_nodes=4", "ensemble.n_oscillators=6"],
    "influence-profile": [],
}


def run(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="results")
    ap.add_argument("--fast", action="store_true")
    ap.add_argument("--threads", type=int, default=1)
    ap.add_argument("--only", nargs="*", choices=EXPERIMENTS, default=None)
    args = ap.parse_args(argv)

    names = args.only if args.only else list(EXPERIMENTS)
    for name in names:
        cmd = [name, "--config", str(CONFIGS[name]),
               "--out", str(pathlib.Path(args.out) / name.replace("-", "_")),
               "--threads", str(args.threads)]
        if args.fast:
            for ov in FAST_OVERRIDES[name]:
                cmd += ["--override", ov]
        print(f"== {name} ==", flush=True)
        t0 = time.perf_counter()
        rc = cli_main(cmd)
        print(f"   done in {time.perf_counter() - t0:.1f}s (rc={rc})", flush=True)
        if rc != 0:
            return rc
    return 0


if __name__ == "__main__":
    sys.exit(run())
