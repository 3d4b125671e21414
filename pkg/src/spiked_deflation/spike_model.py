"""Ground-truth spikes with prescribed correlations and the spiked tensor model.

The observed tensor is ``S = sum_i beta_i x_i^{(x)d} + (noise_scale / sqrt(n)) W``
with ``W`` a symmetric Gaussian tensor. All randomness is drawn from Philox
counter-based streams keyed by ``(seed, stream_id)`` so the component frame
and the noise are reproducible independently of each other.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .symtensor import SymmetricTensor, rank1, symmetrize

STREAM_FRAME = 0
STREAM_NOISE = 1
STREAM_PROBE = 2


class ModelError(ValueError):
    """Invalid model parameters (non-PSD Gram, non-positive weights, ...)."""


def stream_rng(seed: int, *stream) -> np.random.Generator:
    """Philox generator for the sub-stream ``stream`` of master ``seed``."""
    ss = np.random.SeedSequence([int(seed) & (2**64 - 1), *map(int, stream)])
    return np.random.Generator(np.random.Philox(ss))


def _check_gram(gram: np.ndarray, atol=1e-12):
    if gram.ndim != 2 or gram.shape[0] != gram.shape[1]:
        raise ModelError(f"gram must be square, got shape {gram.shape}")
    if not np.allclose(gram, gram.T, atol=atol, rtol=0):
        raise ModelError("gram must be symmetric")
    if not np.allclose(np.diag(gram), 1.0, atol=atol, rtol=0):
        raise ModelError("gram must have unit diagonal")
    if np.linalg.eigvalsh(gram).min() < -1e-10:
        raise ModelError("gram is not positive semidefinite")


@dataclass(frozen=True)
class SpikeParams:
    n: int
    d: int
    beta: tuple
    gram: np.ndarray
    noise_scale: float = 1.0
    seed: int = 0

    def __post_init__(self):
        beta = tuple(float(b) for b in self.beta)
        gram = np.array(self.gram, dtype=np.float64)
        object.__setattr__(self, "beta", beta)
        object.__setattr__(self, "gram", gram)
        if self.d < 2:
            raise ModelError(f"order d must be >= 2, got {self.d}")
        if self.n < 1:
            raise ModelError(f"dimension n must be >= 1, got {self.n}")
        if any(b <= 0 for b in beta):
            raise ModelError(f"signal weights must be positive, got {beta}")
        if gram.shape != (len(beta), len(beta)):
            raise ModelError(f"gram shape {gram.shape} does not match r={len(beta)}")
        _check_gram(gram)
        if self.noise_scale < 0:
            raise ModelError("noise_scale must be >= 0")
        gram.setflags(write=False)

    @property
    def r(self) -> int:
        return len(self.beta)

    @classmethod
    def rank2(cls, n, d, beta1, beta2, alpha, **kw):
        return cls(n=n, d=d, beta=(beta1, beta2), gram=[[1.0, alpha], [alpha, 1.0]], **kw)


@dataclass(frozen=True)
class GroundTruth:
    components: np.ndarray  # shape (r, n), rows are the unit vectors x_i
    params: SpikeParams = field(repr=False)


def _gram_factor(gram: np.ndarray) -> np.ndarray:
    """Upper-triangular-ish R with R^T R = gram (Cholesky, eigen fallback if singular)."""
    try:
        return np.linalg.cholesky(gram).T
    except np.linalg.LinAlgError:
        w, V = np.linalg.eigh(gram)
        return np.sqrt(np.clip(w, 0.0, None))[:, None] * V.T


def correlated_unit_vectors(n: int, gram, seed: int) -> np.ndarray:
    """``r`` unit vectors in R^n whose Gram matrix equals ``gram``.

    Returned as an ``(r, n)`` array. A uniformly random orthonormal frame is
    mixed by the Cholesky factor of ``gram``, so the correlations are exact.
    """
    gram = np.array(gram, dtype=np.float64)
    _check_gram(gram)
    r = gram.shape[0]
    if r > n:
        raise ValueError(f"cannot place r={r} components in dimension n={n}")
    rng = stream_rng(seed, STREAM_FRAME)
    Q, R = np.linalg.qr(rng.standard_normal((n, r)))
    Q = Q * np.sign(np.diag(R))  # Haar-distributed frame
    X = Q @ _gram_factor(gram)
    return X.T.copy()


def ground_truth(params: SpikeParams) -> GroundTruth:
    X = correlated_unit_vectors(params.n, params.gram, params.seed)
    X.setflags(write=False)
    return GroundTruth(components=X, params=params)


def sample_noise(n: int, d: int, seed: int) -> SymmetricTensor:
    """Symmetric Gaussian tensor: i.i.d. N(0,1) entries averaged over permutations."""
    rng = stream_rng(seed, STREAM_NOISE)
    return symmetrize(rng.standard_normal((n,) * d))


def signal_tensor(truth: GroundTruth) -> SymmetricTensor:
    p = truth.params
    out = np.zeros((p.n,) * p.d)
    for b, x in zip(p.beta, truth.components):
        out += rank1(b, x, p.d).entries
    return SymmetricTensor(out)


def sample_spiked_tensor(truth: GroundTruth) -> SymmetricTensor:
    p = truth.params
    S = signal_tensor(truth)
    if p.noise_scale == 0:
        return S
    W = sample_noise(p.n, p.d, p.seed)
    return SymmetricTensor(S.entries + (p.noise_scale / np.sqrt(p.n)) * W.entries)
