"""Seeded Monte-Carlo sweeps comparing deflation output with the limiting predictions.

Every (grid point, trial) pair gets its own seed derived from ``base_seed`` and
the pair's indices, and results land in pre-assigned slots, so the output is
identical for any number of workers.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .asymptotic_solver import (
    LimitStats,
    ModelParams,
    SolverError,
    estimate_params,
    solve_forward,
    verify_residual,
)
from .config import ConfigError, ExperimentConfig
from .deflation import ConvergenceError, PowerIterOptions, SummaryStatistics, deflate
from .plotting import PLOT_KINDS, emit_plot
from .rmt_kernel import DomainError, contraction_spectrum, threshold
from .spike_model import (
    STREAM_PROBE,
    SpikeParams,
    ground_truth,
    sample_noise,
    sample_spiked_tensor,
    stream_rng,
)
from .symtensor import SymmetricTensor, unit_vector

log = logging.getLogger(__name__)

WORKERS_ENV = "SPIKED_DEFLATION_WORKERS"
VERIFY_TOL = 1e-9

STAT_NAMES = ("lambda1", "lambda2", "rho11", "rho12", "rho21", "rho22", "eta12")
CSV_HEADER = (
    ["beta1"]
    + [f"{s}_{k}" for s in STAT_NAMES for k in ("mean", "std")]
    + [f"{s}_pred" for s in STAT_NAMES]
    + ["residual", "converged"]
)


def trial_seed(base_seed: int, grid_index: int, trial_index: int) -> int:
    """64-bit seed for one (grid point, trial) pair."""
    ss = np.random.SeedSequence([int(base_seed) & (2**64 - 1), grid_index, trial_index])
    return int(ss.generate_state(1, np.uint64)[0])


def default_workers() -> int:
    env = os.environ.get(WORKERS_ENV)
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def align_signs(stats: SummaryStatistics, d: int) -> SummaryStatistics:
    """For even ``d`` flip each ``u_i`` so that ``rho_ii >= 0``.

    For odd ``d`` the sign is already fixed by ``lambda_hat >= 0``.
    """
    if d % 2:
        return stats
    s = np.where(np.diag(stats.rho_hat) < 0, -1.0, 1.0)
    return SummaryStatistics(
        lambda_hat=stats.lambda_hat.copy(),
        rho_hat=s[:, None] * stats.rho_hat,
        eta_hat=s[:, None] * stats.eta_hat * s[None, :],
    )


def _flatten(stats: SummaryStatistics):
    lam, rho, eta = stats.lambda_hat, stats.rho_hat, stats.eta_hat
    return np.array([lam[0], lam[1], rho[0, 0], rho[0, 1], rho[1, 0], rho[1, 1], eta[1, 0]])


# ---------------------------------------------------------------------------
# single realizations


def run_trial(model, beta, seed: int, power: PowerIterOptions, keep_tensors=False):
    """Sample one spiked tensor and deflate it ``r`` times."""
    params = SpikeParams(n=model.n, d=model.d, beta=tuple(beta), gram=model.gram,
                         noise_scale=model.noise_scale, seed=seed)
    truth = ground_truth(params)
    S = sample_spiked_tensor(truth)
    opts = dataclasses.replace(power, seed=seed)
    result, stats = deflate(S, params.r, truth, opts, keep_tensors=keep_tensors)
    return S, truth, result, align_signs(stats, model.d)


def _trial_job(args):
    model, beta, seed, power = args
    try:
        _, _, result, stats = run_trial(model, beta, seed, power)
    except ConvergenceError as exc:
        return {"error": str(exc)}
    return {
        "stats": stats.to_dict(),
        "eig_residual": max(f.eig_residual for f in result.fits),
        "matrix_residual": max(f.matrix_residual for f in result.fits),
    }


def _map(jobs, workers):
    if workers <= 1 or len(jobs) <= 1:
        return [_trial_job(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_trial_job, jobs, chunksize=1))


# ---------------------------------------------------------------------------
# sweep


@dataclass
class SweepRow:
    beta1: float
    mean: dict
    std: dict
    pred: dict = None
    residual: float = None
    converged: bool = False
    init_source: str = None
    trials_ok: int = 0
    trials_failed: int = 0
    max_eig_residual: float = float("nan")
    max_matrix_residual: float = float("nan")
    note: str = ""
    first_stats: dict = field(default=None, repr=False)

    def as_dict(self):
        out = {"beta1": self.beta1}
        for s in STAT_NAMES:
            out[f"{s}_mean"] = self.mean.get(s)
            out[f"{s}_std"] = self.std.get(s)
        for s in STAT_NAMES:
            out[f"{s}_pred"] = self.pred.get(s) if self.pred else None
        out["residual"] = self.residual
        out["converged"] = self.converged
        return out

    def detail(self):
        out = self.as_dict()
        out.update(init_source=self.init_source, trials_ok=self.trials_ok,
                   trials_failed=self.trials_failed,
                   max_eig_residual=self.max_eig_residual,
                   max_matrix_residual=self.max_matrix_residual, note=self.note,
                   first_trial_stats=self.first_stats)
        return out


def _aggregate(beta1, outcomes):
    ok = [o for o in outcomes if "stats" in o]
    row = SweepRow(beta1=beta1, mean={}, std={}, trials_ok=len(ok),
                   trials_failed=len(outcomes) - len(ok))
    if not ok:
        row.note = "all trials failed: " + outcomes[0]["error"]
        return row
    vals = np.array([_flatten(_stats_from_dict(o["stats"])) for o in ok])
    for k, s in enumerate(STAT_NAMES):
        row.mean[s] = float(vals[:, k].mean())
        row.std[s] = float(vals[:, k].std())
    row.max_eig_residual = max(o["eig_residual"] for o in ok)
    row.max_matrix_residual = max(o["matrix_residual"] for o in ok)
    row.first_stats = ok[0]["stats"]
    if row.trials_failed:
        row.note = f"{row.trials_failed} trial(s) did not converge"
    return row


def _stats_from_dict(d):
    return SummaryStatistics(np.array(d["lambda_hat"]), np.array(d["rho_hat"]),
                             np.array(d["eta_hat"]))


def _pred_dict(sol: LimitStats):
    return dict(zip(STAT_NAMES, [float(v) for v in (
        sol.lam[0], sol.lam[1], sol.rho[0, 0], sol.rho[0, 1], sol.rho[1, 0],
        sol.rho[1, 1], sol.eta[1, 0])]))


def _try_solve(params, d, init, solver, source):
    try:
        rep = solve_forward(params, d, init, solver, init_source=source)
    except (SolverError, DomainError) as exc:
        return None, str(exc)
    if not rep.converged:
        return None, f"solver did not converge ({rep.message}, residual {rep.residual_norm:.2e})"
    check = verify_residual(rep, d)
    if check > VERIFY_TOL:
        return None, f"re-verified residual {check:.2e} above {VERIFY_TOL:g}"
    return rep, ""


def _predict(rows, cfg: ExperimentConfig):
    """Forward solves: empirical init first, then continuation from converged neighbours."""
    model = cfg.model
    d = model.d
    params_of = lambda row: ModelParams([row.beta1, *model.beta[1:]], model.gram)
    pending = []
    for row in rows:
        if row.first_stats is None:
            continue
        init = LimitStats.from_summary(_stats_from_dict(row.first_stats))
        if np.any(init.lam <= threshold(d)):
            row.note = _join(row.note, "empirical eigenvalues below gamma_d*(d-1): "
                             "outside the regime of the limiting equations")
            continue
        rep, why = _try_solve(params_of(row), d, init, cfg.solver, "empirical")
        if rep is None:
            pending.append((row, why))
        else:
            _accept(row, rep)
    # continuation, preferring the larger-weight neighbour
    for row, why in pending:
        order = sorted((r for r in rows if r.converged),
                       key=lambda r: (abs(r.beta1 - row.beta1), -r.beta1))
        for src in order:
            init = LimitStats([src.pred["lambda1"], src.pred["lambda2"]],
                              [[src.pred["rho11"], src.pred["rho12"]],
                               [src.pred["rho21"], src.pred["rho22"]]],
                              src.pred["eta12"])
            rep, why2 = _try_solve(params_of(row), d, init, cfg.solver, "continuation")
            if rep is not None:
                _accept(row, rep)
                break
        else:
            row.note = _join(row.note, why)


def _accept(row, rep):
    row.pred = _pred_dict(rep.solution)
    row.residual = rep.residual_norm
    row.converged = True
    row.init_source = rep.init_source


def _join(a, b):
    return f"{a}; {b}" if a else b


def run_sweep(cfg: ExperimentConfig, workers: int = None, write: bool = True):
    """Monte-Carlo sweep over the first weight; returns ``(rows, written_paths)``."""
    model = cfg.model
    if model.r != 2:
        raise ConfigError(f"sweeps compare rank-2 statistics; got r={model.r}")
    workers = default_workers() if workers is None else workers
    grid = model.beta1_values()
    jobs = []
    for g, b1 in enumerate(grid):
        beta = (b1, *model.beta[1:])
        for t in range(cfg.trials):
            jobs.append((model, beta, trial_seed(cfg.base_seed, g, t), cfg.power_iter))
    outcomes = _map(jobs, workers)
    rows = [_aggregate(b1, outcomes[g * cfg.trials:(g + 1) * cfg.trials])
            for g, b1 in enumerate(grid)]
    _predict(rows, cfg)
    paths = write_sweep(rows, cfg) if write else []
    return rows, paths


def _csv_value(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    return repr(float(v))


def sweep_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for row in rows:
        d = row.as_dict()
        w.writerow([_csv_value(d[k]) for k in CSV_HEADER])
    return buf.getvalue()


def read_sweep_csv(path):
    """Parse a sweep CSV back into plain dict rows (empty cells -> None)."""
    out = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != CSV_HEADER:
            raise ValueError(f"{path}: unexpected CSV header")
        for rec in reader:
            row = {}
            for k, v in rec.items():
                if k == "converged":
                    row[k] = v == "true"
                else:
                    row[k] = float(v) if v != "" else None
            out.append(row)
    return out


def write_sweep(rows, cfg: ExperimentConfig):
    out = cfg.output_dir()
    out.mkdir(parents=True, exist_ok=True)
    fmts = cfg.outputs.formats
    paths = []
    if "csv" in fmts:
        p = out / "sweep.csv"
        p.write_text(sweep_csv(rows))
        paths.append(p)
    if "json" in fmts:
        p = out / "sweep.json"
        doc = {"config": dataclasses.asdict(cfg), "rows": [r.detail() for r in rows]}
        p.write_text(json.dumps(doc, indent=2, sort_keys=True, default=_json_default) + "\n")
        paths.append(p)
    if "svg" in fmts:
        dict_rows = [r.as_dict() for r in rows if r.trials_ok]
        if dict_rows:
            for kind in PLOT_KINDS:
                paths.append(emit_plot(dict_rows, kind, out / f"sweep_{kind}.svg"))
    return paths


def _json_default(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


# ---------------------------------------------------------------------------
# spectrum


def probe_vector(n: int, seed: int) -> np.ndarray:
    return unit_vector(stream_rng(seed, STREAM_PROBE).standard_normal(n))


def run_spectrum(cfg: ExperimentConfig, write: bool = True):
    """Contraction spectra versus the semicircle for ``cfg.spectrum.seeds`` seeds.

    Pure noise: ``(noise_scale/sqrt n) W . u^{d-2}`` with an independent probe
    ``u``. Spiked: ``S . u_1^{d-2}`` with ``u_1`` from the first deflation step.
    Returns ``(reports, written_paths)``.
    """
    model, sc = cfg.model, cfg.spectrum
    reports = []
    for s in range(sc.seeds):
        seed = trial_seed(cfg.base_seed, 0, s)
        if sc.spiked:
            S, _, result, _ = run_trial(model, model.beta, seed,
                                        dataclasses.replace(cfg.power_iter, seed=seed))
            rep = contraction_spectrum(S, result.fits[0].u, sc.margin)
        else:
            W = sample_noise(model.n, model.d, seed)
            T = SymmetricTensor(W.entries * (model.noise_scale / np.sqrt(model.n)))
            rep = contraction_spectrum(T, probe_vector(model.n, seed), sc.margin)
        reports.append(rep)
    paths = []
    if write:
        out = cfg.output_dir()
        out.mkdir(parents=True, exist_ok=True)
        if "json" in cfg.outputs.formats:
            p = out / "spectrum.json"
            doc = {
                "config": dataclasses.asdict(cfg),
                "reports": [r.to_dict() for r in reports],
                "ks_median": float(np.median([r.ks_distance for r in reports])),
            }
            p.write_text(json.dumps(doc, indent=2, sort_keys=True, default=_json_default) + "\n")
            paths.append(p)
        if "csv" in cfg.outputs.formats:
            p = out / "spectrum.csv"
            lines = ["seed_index,ks_distance,n_outliers,max_abs_eigenvalue"]
            for k, r in enumerate(reports):
                lines.append(f"{k},{r.ks_distance!r},{r.outliers.size},"
                             f"{float(np.abs(r.eigenvalues).max())!r}")
            p.write_text("\n".join(lines) + "\n")
            paths.append(p)
        if "svg" in cfg.outputs.formats:
            paths.append(emit_plot(reports[0], "spectrum", out / "spectrum.svg"))
    return reports, paths


# ---------------------------------------------------------------------------
# single-realization estimation


def estimate_from_realization(model, beta, seed, power=PowerIterOptions(max_iters=5000),
                              solver=None):
    """Deflate one realization and invert the limiting equations from its output.

    The search starts from weights equal to the observed eigenvalues, the
    observed step-to-step alignment as correlation and the simulated alignments
    as the alignment guess.
    """
    _, _, _, stats = run_trial(model, beta, seed, power)
    eta = stats.eta_hat[np.tril_indices(stats.r, -1)]
    alpha0 = np.clip(eta, -0.99, 0.99)
    init = ModelParams(stats.lambda_hat, alpha0)
    kw = {} if solver is None else {"opts": solver}
    rep = estimate_params(stats.lambda_hat, eta, model.d, init, stats.rho_hat,
                          init_source="empirical", **kw)
    return rep, stats
