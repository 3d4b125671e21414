"""Command-line entry point: ``spiked-deflation <subcommand> ...``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .asymptotic_solver import (
    LimitStats,
    ModelParams,
    SolverError,
    SolverOptions,
    continuation_forward,
    default_inverse_init,
    estimate_params,
    solve_forward,
)
from .config import ConfigError, ExperimentConfig
from .experiments import read_sweep_csv, run_spectrum, run_sweep, run_trial
from .plotting import PLOT_KINDS, emit_plot
from .rmt_kernel import DomainError

log = logging.getLogger("spiked_deflation")


def _load_json_arg(text):
    p = Path(text)
    if p.suffix == ".json" and p.exists():
        return json.loads(p.read_text())
    return json.loads(text)


def cmd_sweep(args):
    cfg = ExperimentConfig.load(args.config)
    rows, paths = run_sweep(cfg, workers=args.workers)
    for p in paths:
        print(p)
    failed = [r.beta1 for r in rows if r.trials_ok == 0]
    if failed:
        log.error("no completed trials at beta1 = %s", failed)
        return 1
    return 0


def cmd_spectrum(args):
    cfg = ExperimentConfig.load(args.config)
    reports, paths = run_spectrum(cfg)
    for k, r in enumerate(reports):
        print(f"seed {k}: ks={r.ks_distance:.4f} outliers={len(r.outliers)}")
    for p in paths:
        print(p)
    return 0


def cmd_deflate(args):
    cfg = ExperimentConfig.load(args.config)
    model = cfg.model
    _, _, result, stats = run_trial(model, model.beta, cfg.base_seed, cfg.power_iter)
    doc = {
        "fits": [
            {"lambda_hat": f.lambda_hat, "eig_residual": f.eig_residual,
             "matrix_residual": f.matrix_residual, "iterations": f.iterations}
            for f in result.fits
        ]
    }
    if args.dump_stats:
        doc["summary_statistics"] = stats.to_dict()
    print(json.dumps(doc, indent=2))
    return 0


def _solver_opts(spec):
    return SolverOptions(**spec.get("solver", {}))


def cmd_solve(args):
    spec = _load_json_arg(args.params)
    d = int(spec.get("d", 3))
    opts = _solver_opts(spec)
    if args.mode == "forward":
        params = ModelParams(spec["beta"], spec.get("gram", spec.get("alpha")))
        if "init" in spec:
            init = spec["init"]
            rep = solve_forward(params, d, LimitStats(init["lambda"], init["rho"], init["eta"]),
                                opts, init_source="user")
        else:
            rep = continuation_forward(params, d, opts)
    else:
        lam, eta = spec["lambda"], spec["eta"]
        if "init" in spec:
            init = spec["init"]
            rep = estimate_params(lam, eta, d, ModelParams(init["beta"], init["alpha"]),
                                  init["rho"], opts, init_source="user")
        else:
            guess, rho0 = default_inverse_init(lam, eta, d, opts)
            rep = estimate_params(lam, eta, d, guess, rho0, opts, init_source="continuation")
    print(json.dumps(rep.to_dict(), indent=2))
    return 0 if rep.converged else 2


def cmd_plot(args):
    rows = read_sweep_csv(args.input)
    out = Path(args.output) if args.output else Path(args.input).with_name(
        f"{Path(args.input).stem}_{args.kind}.svg")
    print(emit_plot(rows, args.kind, out))
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="spiked-deflation", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("sweep", help="Monte-Carlo sweep vs limiting predictions")
    s.add_argument("--config", required=True)
    s.add_argument("--workers", type=int, default=None,
                   help="worker processes (default: $SPIKED_DEFLATION_WORKERS or CPU count)")
    s.set_defaults(func=cmd_sweep)

    s = sub.add_parser("spectrum", help="contraction spectra vs the semicircle law")
    s.add_argument("--config", required=True)
    s.set_defaults(func=cmd_spectrum)

    s = sub.add_parser("solve", help="forward or inverse solve of the limiting equations")
    s.add_argument("--mode", choices=("forward", "inverse"), required=True)
    s.add_argument("--params", required=True, help="JSON text or path to a .json file")
    s.set_defaults(func=cmd_solve)

    s = sub.add_parser("deflate", help="deflate one realization")
    s.add_argument("--config", required=True)
    s.add_argument("--dump-stats", action="store_true")
    s.set_defaults(func=cmd_deflate)

    s = sub.add_parser("plot", help="render a sweep CSV to SVG")
    s.add_argument("--input", required=True)
    s.add_argument("--kind", choices=sorted(PLOT_KINDS), required=True)
    s.add_argument("--output")
    s.set_defaults(func=cmd_plot)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, DomainError, SolverError, ValueError, KeyError) as exc:
        log.error("%s", exc)
        return 1


if __name__ == "__main__":
    sys.exit(main())
