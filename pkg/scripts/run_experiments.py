#!/usr/bin/env python3
"""Regenerate every figure bundle and (if the figures package is installed)
render the images.

Usage:
    python scripts/run_experiments.py [--outdir DIR] [--fast] [--jobs N]

--fast shrinks every scale knob so the whole pipeline finishes in about a
minute; omit it for paper-scale runs.
"""

import argparse
import importlib.util
import subprocess
import sys
from pathlib import Path

FIGURES = ["fig-convergence", "fig-deploy-compare", "fig-total-cost", "fig-breakdown"]

FAST_OVERRIDES = [
    "--set", "mdp.aoci_cap=20", "--set", "mdp.aoi_cap=20",
    "--set", "simulation.num_runs=100", "--set", "simulation.horizon_slots=300",
    "--set", "sweep.num_seeds=3", "--set", "sweep.num_devices=[10,20]",
    "--set", "sweep.convergence_pairs=[[6,3],[10,4]]",
    "--set", "learner.iterations=400", "--set", "learner.restarts=1",
    "--set", "topology.num_devices=6", "--set", "topology.num_bs=4",
]


def main() -> int:
    parser = argparse.ArgumentParser()
    parser.add_argument("--outdir", default="results")
    parser.add_argument("--fast", action="store_true")
    parser.add_argument("--jobs", type=int, default=1)
    args = parser.parse_args()
    outdir = Path(args.outdir)
    overrides = FAST_OVERRIDES if args.fast else []

    for fig in FIGURES:
        bundle = outdir / fig
        cmd = [sys.executable, "-m", "dtmec.cli", "experiment", fig,
               "--outdir", str(bundle), "--jobs", str(args.jobs), *overrides]
        print("::", " ".join(cmd))
        subprocess.run(cmd, check=True)

    if importlib.util.find_spec("dtmec_figures") is None:
        print("dtmec-figures not installed; CSV bundles are ready for later rendering")
        return 0
    for fig in FIGURES:
        cmd = [sys.executable, "-m", "dtmec_figures.cli", fig,
               "--bundle", str(outdir / fig),
               "--out", str(outdir / "images" / f"{fig}.png")]
        print("::", " ".join(cmd))
        subprocess.run(cmd, check=True)
    return 0


if __name__ == "__main__":
    sys.exit(main())
