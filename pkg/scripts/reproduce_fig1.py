"""Rank-2 sweep over beta1 with predictions; writes CSV, JSON and SVG figures.

    python3 scripts/reproduce_fig1.py [--config scripts/configs/fig1.json] [--workers N]
"""

import argparse
import time
from pathlib import Path

from spiked_deflation.config import ExperimentConfig
from spiked_deflation.experiments import run_sweep

HERE = Path(__file__).resolve().parent


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--config", default=HERE / "configs" / "fig1.json")
    ap.add_argument("--workers", type=int, default=None)
    args = ap.parse_args()
    cfg = ExperimentConfig.load(args.config)
    t0 = time.perf_counter()
    rows, paths = run_sweep(cfg, workers=args.workers)
    print(f"{'beta1':>6} {'lam1':>7} {'lam1*':>7} {'lam2':>7} {'lam2*':>7} "
          f"{'rho11':>7} {'rho11*':>7} {'rho12':>7} {'rho12*':>7}  note")
    for r in rows:
        p = r.pred or {}
        cells = []
        for s in ("lambda1", "lambda2", "rho11", "rho12"):
            cells += [r.mean.get(s), p.get(s)]
        txt = " ".join("      -" if v is None else f"{v:7.3f}" for v in cells)
        print(f"{r.beta1:6.2f} {txt}  {r.note}")
    print(f"done in {time.perf_counter() - t0:.0f}s")
    for path in paths:
        print(path)


if __name__ == "__main__":
    main()
