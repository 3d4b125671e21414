"""Contraction-spectrum KS distances against the semicircle law."""

import argparse
from pathlib import Path

import numpy as np

from spiked_deflation.config import ExperimentConfig
from spiked_deflation.experiments import run_spectrum

HERE = Path(__file__).resolve().parent

ap = argparse.ArgumentParser()
ap.add_argument("--config", default=HERE / "configs" / "spectrum.json")
args = ap.parse_args()

reports, paths = run_spectrum(ExperimentConfig.load(args.config))
ks = [r.ks_distance for r in reports]
for k, r in enumerate(reports):
    out = ", ".join(f"{v:.3f}" for v in r.outliers) or "none"
    print(f"seed {k}: KS={r.ks_distance:.4f} outliers: {out}")
print(f"median KS={np.median(ks):.4f} (edge gamma={reports[0].gamma:.4f})")
for p in paths:
    print(p)
