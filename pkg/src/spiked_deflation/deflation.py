"""Tensor power iteration and Hotelling deflation.

``best_rank1`` runs plain power iteration ``u <- T.u^{d-1} / |T.u^{d-1}|`` from
several random starts at once (columns of one matrix) and keeps the converged
candidate with the largest objective ``T.u^d``. ``deflate`` repeats this ``r``
times, subtracting each fitted rank-one term before the next step.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .spike_model import GroundTruth, stream_rng
from .symtensor import SymmetricTensor, contract, contract_batch, subtract_rank1

log = logging.getLogger(__name__)

STREAM_POWER = 3


class ConvergenceError(RuntimeError):
    """No power-iteration restart converged."""

    def __init__(self, msg, best_residual=np.inf, step=None):
        super().__init__(msg)
        self.best_residual = best_residual
        self.step = step


@dataclass(frozen=True)
class PowerIterOptions:
    max_iters: int = 1000
    tol: float = 1e-10
    restarts: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.tol <= 0:
            raise ValueError("tol must be positive")
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")


@dataclass
class RankOneFit:
    lambda_hat: float
    u: np.ndarray
    objective: float
    eig_residual: float  # |T.u^{d-1} - lambda u|
    matrix_residual: float  # |(T.u^{d-2}) u - lambda u|
    iterations: int
    monotone: bool = True
    # best over random restarts; global optimality is not certified
    global_certified: bool = False


@dataclass
class SummaryStatistics:
    lambda_hat: np.ndarray  # (r,)
    rho_hat: np.ndarray  # (r, r), rho[i, j] = <u_i, x_j>
    eta_hat: np.ndarray  # (r, r), eta[i, j] = <u_i, u_j>

    @property
    def r(self):
        return self.lambda_hat.shape[0]

    def to_dict(self):
        return {
            "lambda_hat": self.lambda_hat.tolist(),
            "rho_hat": self.rho_hat.tolist(),
            "eta_hat": self.eta_hat.tolist(),
        }


@dataclass
class DeflationResult:
    fits: list
    tensors: list = field(default_factory=list)  # S_0 .. S_r when retained

    def reconstruct(self, S: SymmetricTensor) -> SymmetricTensor:
        """Rebuild the final residual tensor from ``S`` and the fitted terms."""
        out = S
        for fit in self.fits:
            out = subtract_rank1(out, fit.lambda_hat, fit.u)
        return out


def _residuals(T: SymmetricTensor, lam: float, u: np.ndarray):
    Mu = contract(T, u, T.order - 2).entries @ u
    v = contract(T, u, T.order - 1)
    return float(np.linalg.norm(v - lam * u)), float(np.linalg.norm(Mu - lam * u))


def best_rank1(T: SymmetricTensor, opts: PowerIterOptions = PowerIterOptions()) -> RankOneFit:
    d, n = T.order, T.dim
    rng = stream_rng(opts.seed, STREAM_POWER)
    U = rng.standard_normal((n, opts.restarts))
    U /= np.linalg.norm(U, axis=0)

    active = np.ones(opts.restarts, dtype=bool)
    iters = np.full(opts.restarts, opts.max_iters)
    monotone = np.ones(opts.restarts, dtype=bool)
    prev_obj = np.full(opts.restarts, -np.inf)
    last_step = np.full(opts.restarts, np.inf)

    for k in range(opts.max_iters):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        Ua = U[:, idx]
        V = contract_batch(T.entries, Ua, d - 1)
        obj = np.einsum("nk,nk->k", V, Ua)
        # the random start has an arbitrary sign; monitor from the first iterate on
        if k > 0:
            monotone[idx] &= obj >= prev_obj[idx] - 1e-12
        prev_obj[idx] = obj
        norms = np.linalg.norm(V, axis=0)
        norms[norms == 0] = 1.0
        Vn = V / norms
        step = np.minimum(
            np.linalg.norm(Vn - Ua, axis=0), np.linalg.norm(Vn + Ua, axis=0)
        )
        U[:, idx] = Vn
        last_step[idx] = step
        done = step <= opts.tol
        iters[idx[done]] = k + 1
        active[idx[done]] = False

    converged = np.flatnonzero(~active)
    if converged.size == 0:
        raise ConvergenceError(
            f"no restart converged within {opts.max_iters} iterations "
            f"(smallest step {last_step.min():.3e})",
            best_residual=float(last_step.min()),
        )

    cands = U[:, converged]
    obj = np.einsum("nk,nk->k", contract_batch(T.entries, cands, d - 1), cands)
    if d % 2:
        flip = obj < 0
        cands[:, flip] *= -1
        obj[flip] *= -1
    # deterministic winner: largest objective, ties broken on lexicographically larger u
    order = sorted(range(converged.size), key=lambda c: (obj[c], tuple(cands[:, c])))
    best = order[-1]
    u = cands[:, best].copy()
    lam = float(obj[best])
    eig_res, mat_res = _residuals(T, lam, u)
    j = converged[best]
    if not monotone[j]:
        log.debug("power iteration objective decreased along restart %d", j)
    return RankOneFit(
        lambda_hat=lam,
        u=u,
        objective=lam,
        eig_residual=eig_res,
        matrix_residual=mat_res,
        iterations=int(iters[j]),
        monotone=bool(monotone[j]),
    )


def summary_statistics(fits, truth: GroundTruth) -> SummaryStatistics:
    U = np.array([f.u for f in fits])
    return SummaryStatistics(
        lambda_hat=np.array([f.lambda_hat for f in fits]),
        rho_hat=U @ truth.components.T,
        eta_hat=U @ U.T,
    )


def deflate(S: SymmetricTensor, r: int, truth: GroundTruth = None,
            opts: PowerIterOptions = PowerIterOptions(), keep_tensors=False):
    """Run ``r`` Hotelling deflation steps on ``S``.

    Returns ``(DeflationResult, SummaryStatistics)``; the statistics are
    ``None`` when no ground truth is given. Each step draws its restarts from
    a sub-seed of ``opts.seed`` so steps do not share initializations.
    """
    if r < 1:
        raise ValueError("r must be >= 1")
    fits = []
    tensors = [S] if keep_tensors else []
    current = S
    for i in range(r):
        step_opts = PowerIterOptions(opts.max_iters, opts.tol, opts.restarts,
                                     seed=_step_seed(opts.seed, i))
        try:
            fit = best_rank1(current, step_opts)
        except ConvergenceError as exc:
            raise ConvergenceError(f"deflation step {i + 1}: {exc}",
                                   exc.best_residual, step=i + 1) from exc
        fits.append(fit)
        current = subtract_rank1(current, fit.lambda_hat, fit.u)
        if keep_tensors:
            tensors.append(current)
    result = DeflationResult(fits=fits, tensors=tensors)
    stats = summary_statistics(fits, truth) if truth is not None else None
    return result, stats


def _step_seed(seed, i):
    if i == 0:
        return seed
    return int(np.random.SeedSequence([int(seed) & (2**64 - 1), i]).generate_state(1, np.uint64)[0])
