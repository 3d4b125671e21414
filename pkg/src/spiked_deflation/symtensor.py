"""Dense symmetric tensors over R^n and their multilinear contractions."""

from __future__ import annotations

import itertools
import math

import numpy as np


class SymmetricTensor:
    """Order-``d`` symmetric tensor stored as a full ``n**d`` float64 array.

    The entries are copied and frozen at construction, so instances can be
    shared freely between readers. Symmetry is the caller's responsibility
    (use :func:`symmetrize` for raw arrays); :meth:`is_symmetric` spot-checks it.
    """

    __slots__ = ("_entries",)

    def __init__(self, entries):
        arr = np.array(entries, dtype=np.float64)
        if arr.ndim < 2:
            raise ValueError(f"symmetric tensor needs order >= 2, got {arr.ndim}")
        if len(set(arr.shape)) != 1:
            raise ValueError(f"all axes must have the same length, got {arr.shape}")
        arr.setflags(write=False)
        self._entries = arr

    @property
    def entries(self) -> np.ndarray:
        return self._entries

    @property
    def order(self) -> int:
        return self._entries.ndim

    @property
    def dim(self) -> int:
        return self._entries.shape[0]

    def __repr__(self):
        return f"SymmetricTensor(order={self.order}, dim={self.dim})"

    def __add__(self, other):
        _check_compatible(self, other)
        return SymmetricTensor(self._entries + other._entries)

    def __sub__(self, other):
        _check_compatible(self, other)
        return SymmetricTensor(self._entries - other._entries)

    def __mul__(self, scalar):
        return SymmetricTensor(float(scalar) * self._entries)

    __rmul__ = __mul__

    def is_symmetric(self, samples=100, atol=1e-12, seed=0) -> bool:
        """Check permutation symmetry on ``samples`` random index tuples."""
        rng = np.random.default_rng(seed)
        d, n = self.order, self.dim
        T = self._entries
        for _ in range(samples):
            idx = tuple(rng.integers(0, n, size=d))
            ref = T[idx]
            for perm in itertools.permutations(idx):
                if abs(T[perm] - ref) > atol:
                    return False
        return True


def _check_compatible(a: SymmetricTensor, b: SymmetricTensor):
    if a.order != b.order or a.dim != b.dim:
        raise ValueError(
            f"incompatible tensors: order/dim {a.order}/{a.dim} vs {b.order}/{b.dim}"
        )


def unit_vector(v) -> np.ndarray:
    """Return ``v`` normalized to unit Euclidean norm."""
    v = np.asarray(v, dtype=np.float64)
    norm = np.linalg.norm(v)
    if v.ndim != 1 or norm == 0.0:
        raise ValueError("expected a nonzero 1-D vector")
    return v / norm


def rank1(weight: float, u, d: int) -> SymmetricTensor:
    """``weight * u^{(x)d}``."""
    if d < 2:
        raise ValueError(f"order must be >= 2, got {d}")
    u = np.asarray(u, dtype=np.float64)
    out = u
    for _ in range(d - 1):
        out = np.multiply.outer(out, u)
    return SymmetricTensor(weight * out)


def _contract_array(arr: np.ndarray, u: np.ndarray, m: int) -> np.ndarray:
    n = u.shape[0]
    for _ in range(m):
        # one order reduction: contract the trailing axis
        arr = (arr.reshape(-1, n) @ u).reshape(arr.shape[:-1])
    return arr


def contract(T: SymmetricTensor, u, m: int):
    """m-fold contraction ``T . u^m``.

    Returns a :class:`SymmetricTensor` when ``d - m >= 2``, a vector when
    ``d - m == 1`` and a float when ``m == d``. ``u`` need not be unit norm.
    """
    u = np.asarray(u, dtype=np.float64)
    if u.shape != (T.dim,):
        raise ValueError(f"vector of shape {u.shape} does not match dim {T.dim}")
    if not 0 <= m <= T.order:
        raise ValueError(f"contraction count {m} outside [0, {T.order}]")
    if m == 0:
        return T
    out = _contract_array(T.entries, u, m)
    rest = T.order - m
    if rest == 0:
        return float(out)
    if rest == 1:
        return out
    return SymmetricTensor(out)


def contract_batch(entries: np.ndarray, U: np.ndarray, m: int) -> np.ndarray:
    """Contract ``m`` axes of a raw order-d array with each column of ``U``.

    Returns an array of shape ``(n,)*(d-m) + (k,)`` for ``U`` of shape ``(n, k)``.
    """
    n, k = U.shape
    d = entries.ndim
    out = (entries.reshape(-1, n) @ U).reshape((n,) * (d - 1) + (k,))
    for step in range(1, m):
        lead = n ** (d - 1 - step)
        out = np.einsum("pnk,nk->pk", out.reshape(lead, n, k), U)
        out = out.reshape((n,) * (d - 1 - step) + (k,))
    return out


def subtract_rank1(T: SymmetricTensor, lam: float, u) -> SymmetricTensor:
    """``T - lam * u^{(x)d}``."""
    u = np.asarray(u, dtype=np.float64)
    if u.shape != (T.dim,):
        raise ValueError(f"vector of shape {u.shape} does not match dim {T.dim}")
    if lam == 0.0:
        return T
    return T - rank1(lam, u, T.order)


def symmetrize(G) -> SymmetricTensor:
    """Average a raw ``n**d`` array over all ``d!`` axis permutations."""
    G = np.asarray(G, dtype=np.float64)
    if G.ndim < 2 or len(set(G.shape)) != 1:
        raise ValueError(f"expected a cubical array of order >= 2, got {G.shape}")
    d = G.ndim
    acc = np.zeros_like(G)
    for perm in itertools.permutations(range(d)):
        acc += G.transpose(perm)
    acc /= math.factorial(d)
    return SymmetricTensor(acc)
