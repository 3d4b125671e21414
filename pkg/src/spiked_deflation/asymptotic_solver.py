"""Limiting summary statistics of Hotelling deflation as roots of a nonlinear system.

Unknowns and parameters of the system for rank ``r`` and order ``d``:

* ``lam[i]``: limiting eigenvalue of deflation step ``i``;
* ``rho[i, j]``: limiting alignment ``<u_i, x_j>``;
* ``eta[i, j]`` for ``j < i``: limiting alignment ``<u_i, u_j>``;
* ``beta[k]`` and the off-diagonal correlations ``alpha[j, k]``.

The residual of each equation is written as (right side) - (left side), which
for ``r = 2, d = 3`` is exactly the seven-component map :func:`psi`.

Two solve directions are offered. :func:`solve_forward` fixes ``(beta, alpha)``
and solves for ``(lam, rho, eta)``; :func:`estimate_params` fixes the
observable ``(lam, eta)`` and solves for ``(beta, alpha, rho)``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .rmt_kernel import (
    DomainError,
    f_func,
    f_prime,
    h_func,
    h_prime,
    q_func,
    q_prime,
    threshold,
)

log = logging.getLogger(__name__)

DOMAIN_MARGIN = 1e-8


class SolverError(RuntimeError):
    pass


class RankDeficiencyError(SolverError):
    """Jacobian is numerically singular; try another initialization."""


class InfeasibleObservationError(DomainError):
    """Observed eigenvalues below the detectability threshold."""


@dataclass
class LimitStats:
    lam: np.ndarray  # (r,)
    rho: np.ndarray  # (r, r)
    eta: np.ndarray  # (r, r) symmetric, unit diagonal; only j < i entries are unknowns

    def __post_init__(self):
        self.lam = np.asarray(self.lam, dtype=np.float64).reshape(-1)
        r = self.lam.shape[0]
        self.rho = np.asarray(self.rho, dtype=np.float64).reshape(r, r)
        eta = np.asarray(self.eta, dtype=np.float64)
        if eta.ndim == 0 or eta.size == r * (r - 1) // 2:
            eta = _eta_from_lower(eta.reshape(-1), r)
        eta = np.tril(eta.reshape(r, r), -1)
        self.eta = eta + eta.T + np.eye(r)

    @property
    def r(self):
        return self.lam.shape[0]

    @property
    def eta_lower(self):
        return self.eta[np.tril_indices(self.r, -1)]

    @classmethod
    def from_summary(cls, stats) -> "LimitStats":
        return cls(stats.lambda_hat, stats.rho_hat, stats.eta_hat)

    def to_dict(self):
        return {"lambda": self.lam.tolist(), "rho": self.rho.tolist(),
                "eta": self.eta_lower.tolist()}


@dataclass
class ModelParams:
    beta: np.ndarray  # (r,)
    gram: np.ndarray  # (r, r)

    def __post_init__(self):
        self.beta = np.asarray(self.beta, dtype=np.float64).reshape(-1)
        r = self.beta.shape[0]
        gram = np.asarray(self.gram, dtype=np.float64)
        if gram.ndim == 0 or gram.size == r * (r - 1) // 2:
            gram = _eta_from_lower(gram.reshape(-1), r)
        self.gram = gram.reshape(r, r)

    @property
    def r(self):
        return self.beta.shape[0]

    @property
    def alpha_lower(self):
        return self.gram[np.tril_indices(self.r, -1)]

    @classmethod
    def rank2(cls, beta1, beta2, alpha):
        return cls([beta1, beta2], [[1.0, alpha], [alpha, 1.0]])

    def to_dict(self):
        return {"beta": self.beta.tolist(), "alpha": self.alpha_lower.tolist()}


def _eta_from_lower(vals, r):
    out = np.eye(r)
    il = np.tril_indices(r, -1)
    out[il] = vals
    out.T[il] = vals
    return out


@dataclass
class SolveReport:
    mode: str
    solution: object  # LimitStats (forward) or (ModelParams, rho) (inverse)
    params: object
    residual_norm: float
    iterations: int
    converged: bool
    init_source: str = "user"
    message: str = ""
    history: list = field(default_factory=list, repr=False)

    def to_dict(self):
        if self.mode == "forward":
            sol = self.solution.to_dict()
            par = self.params.to_dict()
        else:
            est, rho = self.solution
            sol = {**est.to_dict(), "rho": rho.tolist()}
            par = {"lambda": self.params.lam.tolist(), "eta": self.params.eta_lower.tolist()}
        return {
            "mode": self.mode,
            "params": par,
            "solution": sol,
            "residual_norm": float(self.residual_norm),
            "iterations": int(self.iterations),
            "converged": bool(self.converged),
            "init_source": self.init_source,
        }


# ---------------------------------------------------------------------------
# residual and Jacobian over the full variable set


class _Layout:
    """Column layout of the full variable vector ``(lam, rho, eta, beta, alpha)``."""

    def __init__(self, r):
        self.r = r
        self.m = r * (r - 1) // 2
        self.lam0 = 0
        self.rho0 = r
        self.eta0 = r + r * r
        self.beta0 = self.eta0 + self.m
        self.alpha0 = self.beta0 + r
        self.size = self.alpha0 + self.m
        self.n_eq = r + r * r + self.m

    @staticmethod
    def tri(i, j):
        # (i, j) with j < i -> position in row-major strict lower triangle
        return i * (i - 1) // 2 + j

    def lam(self, i):
        return self.lam0 + i

    def rho(self, i, j):
        return self.rho0 + i * self.r + j

    def eta(self, i, j):
        if i == j:
            return None
        if i < j:
            i, j = j, i
        return self.eta0 + self.tri(i, j)

    def beta(self, k):
        return self.beta0 + k

    def alpha(self, j, k):
        if j == k:
            return None
        if j < k:
            j, k = k, j
        return self.alpha0 + self.tri(j, k)

    def forward_cols(self):
        return np.arange(0, self.beta0)

    def inverse_cols(self):
        return np.concatenate([np.arange(self.beta0, self.size),
                               np.arange(self.rho0, self.eta0)])


def _check_domain(lam, d):
    lo = threshold(d) * (1.0 + DOMAIN_MARGIN)
    bad = [float(v) for v in np.atleast_1d(lam) if not v > lo]
    if bad:
        raise DomainError(f"eigenvalues {bad} not above gamma_d*(d-1)*(1+1e-8)={lo:.10g}")


def _evaluate(stats: LimitStats, params: ModelParams, d: int, jacobian: bool):
    r = stats.r
    if params.r != r:
        raise ValueError(f"rank mismatch: stats r={r}, params r={params.r}")
    _check_domain(stats.lam, d)
    lam, rho, eta = stats.lam, stats.rho, stats.eta
    beta, alpha = params.beta, params.gram
    L = _Layout(r)
    F = np.zeros(L.n_eq)
    J = np.zeros((L.n_eq, L.size)) if jacobian else None
    row = 0

    def add(col, val):
        if col is not None:
            J[row, col] += val

    # block 1: sum_j beta_j rho_ij^d - f(lam_i) - sum_{j<i} lam_j eta_ij^d
    for i in range(r):
        s = 0.0
        for j in range(r):
            s = s + beta[j] * rho[i, j] ** d
        val = s - f_func(lam[i], d)
        for j in range(i):
            val = val - lam[j] * eta[i, j] ** d
        F[row] = val
        if jacobian:
            for j in range(r):
                add(L.rho(i, j), d * beta[j] * rho[i, j] ** (d - 1))
                add(L.beta(j), rho[i, j] ** d)
            add(L.lam(i), -f_prime(lam[i], d))
            for j in range(i):
                add(L.lam(j), -eta[i, j] ** d)
                add(L.eta(i, j), -d * lam[j] * eta[i, j] ** (d - 1))
        row += 1

    # block 2: sum_k beta_k alpha_jk rho_ik^{d-1} - h(lam_i) rho_ij
    #          - sum_{k<i} lam_k rho_kj eta_ik^{d-1}
    for i in range(r):
        hi = h_func(lam[i], d)
        for j in range(r):
            s = 0.0
            for k in range(r):
                s = s + beta[k] * alpha[j, k] * rho[i, k] ** (d - 1)
            val = s - hi * rho[i, j]
            for k in range(i):
                val = val - lam[k] * rho[k, j] * eta[i, k] ** (d - 1)
            F[row] = val
            if jacobian:
                for k in range(r):
                    add(L.rho(i, k), (d - 1) * beta[k] * alpha[j, k] * rho[i, k] ** (d - 2))
                    add(L.beta(k), alpha[j, k] * rho[i, k] ** (d - 1))
                    add(L.alpha(j, k), beta[k] * rho[i, k] ** (d - 1))
                add(L.lam(i), -h_prime(lam[i], d) * rho[i, j])
                add(L.rho(i, j), -hi)
                for k in range(i):
                    add(L.lam(k), -rho[k, j] * eta[i, k] ** (d - 1))
                    add(L.rho(k, j), -lam[k] * eta[i, k] ** (d - 1))
                    add(L.eta(i, k), -(d - 1) * lam[k] * rho[k, j] * eta[i, k] ** (d - 2))
            row += 1

    # block 3 (j < i): sum_k beta_k rho_jk rho_ik^{d-1} - h(lam_i) eta_ij
    #     - [lam_j + q(lam_j)] eta_ij^{d-1} - sum_{k<i, k!=j} lam_k eta_kj eta_ik^{d-1}
    # the k = j term of the deflation sum is merged with the q-term
    for i in range(r):
        hi = h_func(lam[i], d)
        for j in range(i):
            qj = q_func(lam[j], d)
            e = eta[i, j]
            s = 0.0
            for k in range(r):
                s = s + beta[k] * rho[j, k] * rho[i, k] ** (d - 1)
            val = s - hi * e - (lam[j] + qj) * e ** (d - 1)
            for k in range(i):
                if k != j:
                    val = val - lam[k] * eta[k, j] * eta[i, k] ** (d - 1)
            F[row] = val
            if jacobian:
                for k in range(r):
                    add(L.beta(k), rho[j, k] * rho[i, k] ** (d - 1))
                    add(L.rho(j, k), beta[k] * rho[i, k] ** (d - 1))
                    add(L.rho(i, k), (d - 1) * beta[k] * rho[j, k] * rho[i, k] ** (d - 2))
                add(L.lam(i), -h_prime(lam[i], d) * e)
                add(L.lam(j), -(1.0 + q_prime(lam[j], d)) * e ** (d - 1))
                add(L.eta(i, j), -hi - (d - 1) * (lam[j] + qj) * e ** (d - 2))
                for k in range(i):
                    if k != j:
                        add(L.lam(k), -eta[k, j] * eta[i, k] ** (d - 1))
                        add(L.eta(k, j), -lam[k] * eta[i, k] ** (d - 1))
                        add(L.eta(i, k), -(d - 1) * lam[k] * eta[k, j] * eta[i, k] ** (d - 2))
            row += 1
    return F, J


def system_residual(stats: LimitStats, params: ModelParams, d: int) -> np.ndarray:
    """Stacked residuals: r eigenvalue equations, r*r alignment equations
    ``(i, j)`` in row-major order, then r(r-1)/2 cross-step equations ``(i, j<i)``.
    """
    return _evaluate(stats, params, d, jacobian=False)[0]


def system_jacobian(stats: LimitStats, params: ModelParams, d: int):
    """Residual and its Jacobian w.r.t. ``(lam, rho, eta_lower, beta, alpha_lower)``."""
    return _evaluate(stats, params, d, jacobian=True)


# row order of psi in terms of system_residual rows at r = 2
PSI_ORDER = (0, 2, 3, 1, 4, 5, 6)


def psi(lam_vec, beta_vec, rho) -> np.ndarray:
    """The seven-component map for ``r = 2, d = 3``.

    ``lam_vec = (lam1, lam2, eta12)``, ``beta_vec = (beta1, beta2, alpha12)``,
    ``rho`` is the 2x2 alignment matrix.
    """
    l1, l2, e = (float(v) for v in lam_vec)
    b1, b2, a = (float(v) for v in beta_vec)
    rho = np.asarray(rho, dtype=np.float64)
    p11, p12, p21, p22 = rho[0, 0], rho[0, 1], rho[1, 0], rho[1, 1]
    _check_domain([l1, l2], 3)
    h1, h2 = h_func(l1, 3), h_func(l2, 3)
    return np.array([
        b1 * p11**3 + b2 * p12**3 - f_func(l1, 3),
        b1 * 1.0 * p11**2 + b2 * a * p12**2 - h1 * p11,
        b1 * a * p11**2 + b2 * 1.0 * p12**2 - h1 * p12,
        b1 * p21**3 + b2 * p22**3 - f_func(l2, 3) - l1 * e**3,
        b1 * 1.0 * p21**2 + b2 * a * p22**2 - h2 * p21 - l1 * p11 * e**2,
        b1 * a * p21**2 + b2 * 1.0 * p22**2 - h2 * p22 - l1 * p12 * e**2,
        b1 * p11 * p21**2 + b2 * p12 * p22**2 - h2 * e - (l1 + q_func(l1, 3)) * e**2,
    ])


# ---------------------------------------------------------------------------
# damped Newton with a Levenberg-Marquardt fallback


@dataclass(frozen=True)
class SolverOptions:
    tol: float = 1e-10
    max_iters: int = 200
    armijo: float = 1e-4
    min_step: float = 1e-12
    cond_limit: float = 1e14


def _newton(fun, x0, opts: SolverOptions):
    """Minimize ``|F(x)|`` for square ``F``; ``fun(x) -> (F, J)`` raising DomainError outside.

    Returns ``(x, F, iterations, converged, message)``.
    """
    x = np.array(x0, dtype=np.float64)
    F, J = fun(x)
    history = [float(np.max(np.abs(F)))]
    singular_hits = 0
    for it in range(opts.max_iters):
        if np.max(np.abs(F)) <= opts.tol:
            return x, F, it, True, "converged", history
        phi = 0.5 * F @ F
        step = None
        cond = np.linalg.cond(J)
        if np.isfinite(cond) and cond < opts.cond_limit:
            p = np.linalg.solve(J, -F)
            t = 1.0
            while t >= opts.min_step:
                try:
                    Fn, Jn = fun(x + t * p)
                except DomainError:
                    # left the domain: hand over to the trust-region step
                    break
                if 0.5 * Fn @ Fn <= (1.0 - 2.0 * opts.armijo * t) * phi:
                    step = (x + t * p, Fn, Jn)
                    break
                t *= 0.5
        else:
            singular_hits += 1
        if step is None:
            step = _lm_step(fun, x, F, J, phi)
        if step is None:
            if singular_hits:
                raise RankDeficiencyError(
                    f"Jacobian singular (cond={cond:.3e}) at iteration {it}; re-initialize")
            return x, F, it, False, "line search and trust-region step both failed", history
        x, F, J = step
        history.append(float(np.max(np.abs(F))))
    done = np.max(np.abs(F)) <= opts.tol
    return x, F, opts.max_iters, bool(done), "max iterations reached", history


def _lm_step(fun, x, F, J, phi):
    g = J.T @ F
    A = J.T @ J
    mu = 1e-3 * max(np.max(np.diag(A)), 1e-12)
    for _ in range(40):
        p = np.linalg.solve(A + mu * np.eye(A.shape[0]), -g)
        try:
            Fn, Jn = fun(x + p)
        except DomainError:
            mu *= 10.0
            continue
        if 0.5 * Fn @ Fn < phi:
            return x + p, Fn, Jn
        mu *= 10.0
    return None


# ---------------------------------------------------------------------------
# forward mode


def _pack_forward(stats: LimitStats):
    return np.concatenate([stats.lam, stats.rho.ravel(), stats.eta_lower])


def _unpack_forward(x, r):
    m = r * (r - 1) // 2
    return LimitStats(x[:r], x[r:r + r * r], x[r + r * r:r + r * r + m])


def solve_forward(params: ModelParams, d: int, init: LimitStats,
                  opts: SolverOptions = SolverOptions(), init_source="user") -> SolveReport:
    """Solve for the limiting ``(lam, rho, eta)`` given ``(beta, alpha)``.

    Newton is local: the returned root is the one reached from ``init``.
    """
    r = params.r
    _check_domain(init.lam, d)
    cols = _Layout(r).forward_cols()

    def fun(x):
        F, J = system_jacobian(_unpack_forward(x, r), params, d)
        return F, J[:, cols]

    x, F, its, ok, msg, hist = _newton(fun, _pack_forward(init), opts)
    return SolveReport(
        mode="forward",
        solution=_unpack_forward(x, r),
        params=params,
        residual_norm=float(np.max(np.abs(F))),
        iterations=its,
        converged=ok,
        init_source=init_source,
        message=msg,
        history=hist,
    )


# ---------------------------------------------------------------------------
# inverse mode: observed (lam, eta) -> (beta, alpha, rho)
#
# search variables: beta = exp(b), alpha = tanh(a), rho = tanh(p), which keeps
# weights positive and correlations/alignments inside (-1, 1).


def _inverse_unpack(z, r):
    m = r * (r - 1) // 2
    b, a, p = z[:r], z[r:r + m], z[r + m:]
    return np.exp(b), np.tanh(a), np.tanh(p).reshape(r, r)


def _inverse_pack(params: ModelParams, rho):
    clip = 1.0 - 1e-12
    return np.concatenate([
        np.log(params.beta),
        np.arctanh(np.clip(params.alpha_lower, -clip, clip)),
        np.arctanh(np.clip(np.asarray(rho).ravel(), -clip, clip)),
    ])


def estimate_params(lam_obs, eta_obs, d: int, init: ModelParams, rho_init,
                    opts: SolverOptions = SolverOptions(), init_source="user") -> SolveReport:
    """Recover ``(beta, alpha, rho)`` from observed eigenvalues and cross-step alignments.

    ``lam_obs`` has length r and ``eta_obs`` holds the strict lower triangle of
    the step-to-step alignments (a scalar for r = 2).
    """
    lam_obs = np.atleast_1d(np.asarray(lam_obs, dtype=np.float64))
    r = lam_obs.shape[0]
    lo = threshold(d)
    if np.any(lam_obs <= lo * (1.0 + DOMAIN_MARGIN)):
        raise InfeasibleObservationError(
            f"observed eigenvalues {lam_obs.tolist()} must exceed gamma_d*(d-1)={lo:.6g}")
    m = r * (r - 1) // 2
    eta_obs = np.atleast_1d(np.asarray(eta_obs, dtype=np.float64)).reshape(m)
    L = _Layout(r)
    cols = L.inverse_cols()

    def fun(z):
        beta, alpha, rho = _inverse_unpack(z, r)
        if not (np.all(np.isfinite(beta)) and np.all(beta > 0)):
            raise DomainError("weights overflowed")
        stats = LimitStats(lam_obs, rho, eta_obs)
        F, J = system_jacobian(stats, ModelParams(beta, alpha), d)
        J = J[:, cols]
        # chain rule through the reparameterization
        scale = np.concatenate([beta, 1.0 - alpha**2, (1.0 - rho**2).ravel()])
        return F, J * scale

    z0 = _inverse_pack(init, rho_init)
    z, F, its, ok, msg, hist = _newton(fun, z0, opts)
    beta, alpha, rho = _inverse_unpack(z, r)
    est = ModelParams(beta, alpha)
    observed = LimitStats(lam_obs, rho, eta_obs)
    return SolveReport(
        mode="inverse",
        solution=(est, rho),
        params=observed,
        residual_norm=float(np.max(np.abs(F))),
        iterations=its,
        converged=ok,
        init_source=init_source,
        message=msg,
        history=hist,
    )


def verify_residual(report: SolveReport, d: int) -> float:
    """Re-evaluate a report's solution through :func:`system_residual` (inf-norm)."""
    if report.mode == "forward":
        F = system_residual(report.solution, report.params, d)
    else:
        est, rho = report.solution
        obs = report.params
        F = system_residual(LimitStats(obs.lam, rho, obs.eta), est, d)
    return float(np.max(np.abs(F)))


# ---------------------------------------------------------------------------
# initialization by continuation from the strong-signal regime


def strong_signal_guess(params: ModelParams, scale: float = 1.0) -> LimitStats:
    """Guess for weights ``scale * beta``: step ``i`` recovers the i-th strongest component."""
    order = np.argsort(-params.beta, kind="stable")
    G = params.gram
    return LimitStats(scale * params.beta[order], G[order, :], G[np.ix_(order, order)])


def continuation_forward(params: ModelParams, d: int, opts: SolverOptions = SolverOptions(),
                         scales=(16.0, 8.0, 4.0, 2.0, 1.4, 1.0)) -> SolveReport:
    """Forward solve tracked from ``scales[0] * beta`` down to ``beta``."""
    stats = strong_signal_guess(params, scales[0])
    rep = None
    for s in scales:
        scaled = ModelParams(s * params.beta, params.gram)
        rep = solve_forward(scaled, d, stats, opts, init_source="continuation")
        if not rep.converged:
            rep.message = f"continuation stalled at scale {s:g}: {rep.message}"
            rep.params = params
            return rep
        stats = rep.solution
    return rep


def default_inverse_init(lam_obs, eta_obs, d: int, opts: SolverOptions = SolverOptions()):
    """Initial ``(ModelParams, rho)`` for :func:`estimate_params` without side information.

    Weights are guessed as the observed eigenvalues and the correlation as the
    observed cross-step alignment; the alignment guess is the forward solution
    at those guessed parameters.
    """
    lam_obs = np.atleast_1d(np.asarray(lam_obs, dtype=np.float64))
    eta = np.clip(np.atleast_1d(np.asarray(eta_obs, dtype=np.float64)), -0.95, 0.95)
    guess = ModelParams(lam_obs, eta)
    rep = continuation_forward(guess, d, opts)
    rho = rep.solution.rho if rep.converged else strong_signal_guess(guess).rho
    return guess, rho
