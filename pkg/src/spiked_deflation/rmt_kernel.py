"""Semicircle law, its Stieltjes transform and the derived scalar kernels.

For order-``d`` noise the contraction matrices ``(1/sqrt n) W . u^{d-2}`` have a
semicircle bulk on ``[-gamma_d, gamma_d]`` with ``gamma_d = 2/sqrt(d(d-1))``.
Everything here is evaluated on the real axis outside the bulk.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .symtensor import SymmetricTensor, contract


class DomainError(ValueError):
    """Argument falls inside the bulk support (or below the detection threshold)."""


def gamma_d(d: int) -> float:
    if d < 2:
        raise ValueError(f"order must be >= 2, got {d}")
    return 2.0 / math.sqrt(d * (d - 1))


def threshold(d: int) -> float:
    """Smallest admissible limiting eigenvalue, ``gamma_d * (d - 1)``."""
    return gamma_d(d) * (d - 1)


def _root(z, gam):
    # real branch with sign(root) = sign(z) so that g(z) ~ -1/z at infinity
    return math.copysign(math.sqrt(z * z - gam * gam), z)


def stieltjes_g(z: float, d: int) -> float:
    gam = gamma_d(d)
    if abs(z) < gam:
        raise DomainError(f"|z|={abs(z):.6g} lies inside the bulk [-{gam:.6g}, {gam:.6g}]")
    return 2.0 / gam**2 * (-z + _root(z, gam))


def stieltjes_g_prime(z: float, d: int) -> float:
    gam = gamma_d(d)
    if abs(z) <= gam:
        raise DomainError(f"g'(z) is singular for |z| <= {gam:.6g}")
    return 2.0 / gam**2 * (z / _root(z, gam) - 1.0)


def _check_threshold(z, d):
    if z < threshold(d):
        raise DomainError(f"z={z:.6g} is below the threshold gamma_d*(d-1)={threshold(d):.6g}")


def h_func(z: float, d: int) -> float:
    _check_threshold(z, d)
    return z + stieltjes_g(z / (d - 1), d) / d


def q_func(z: float, d: int) -> float:
    _check_threshold(z, d)
    return stieltjes_g(z / (d - 1), d) / (d * (d - 1))


def f_func(z: float, d: int) -> float:
    """Left side of the eigenvalue equation, ``z + g(z/(d-1))/(d-1)``."""
    _check_threshold(z, d)
    return z + stieltjes_g(z / (d - 1), d) / (d - 1)


def h_prime(z, d):
    return 1.0 + stieltjes_g_prime(z / (d - 1), d) / (d * (d - 1))


def q_prime(z, d):
    return stieltjes_g_prime(z / (d - 1), d) / (d * (d - 1) ** 2)


def f_prime(z, d):
    return 1.0 + stieltjes_g_prime(z / (d - 1), d) / (d - 1) ** 2


@dataclass(frozen=True)
class SemicircleLaw:
    gamma: float

    def pdf(self, x):
        x = np.asarray(x, dtype=np.float64)
        g2 = self.gamma**2
        inside = np.clip(g2 - x * x, 0.0, None)
        return 2.0 / (np.pi * g2) * np.sqrt(inside)

    def cdf(self, x):
        t = np.clip(np.asarray(x, dtype=np.float64) / self.gamma, -1.0, 1.0)
        return 0.5 + (t * np.sqrt(1.0 - t * t) + np.arcsin(t)) / np.pi

    @classmethod
    def for_order(cls, d: int) -> "SemicircleLaw":
        return cls(gamma_d(d))


@dataclass
class SpectrumReport:
    eigenvalues: np.ndarray
    outliers: np.ndarray
    ks_distance: float
    gamma: float
    margin: float = 0.02
    bulk_size: int = field(default=0)

    def to_dict(self):
        return {
            "eigenvalues": [float(v) for v in self.eigenvalues],
            "outliers": [float(v) for v in self.outliers],
            "ks_distance": float(self.ks_distance),
            "gamma": float(self.gamma),
        }


def spectrum_report(eigenvalues, d: int, margin: float = 0.02) -> SpectrumReport:
    """Split a spectrum into bulk and outliers and measure the bulk KS distance."""
    ev = np.sort(np.asarray(eigenvalues, dtype=np.float64))
    law = SemicircleLaw.for_order(d)
    is_out = np.abs(ev) > law.gamma * (1.0 + margin)
    bulk = ev[~is_out]
    ks = stats.kstest(bulk, law.cdf).statistic if bulk.size else 1.0
    return SpectrumReport(
        eigenvalues=ev,
        outliers=ev[is_out],
        ks_distance=float(ks),
        gamma=law.gamma,
        margin=margin,
        bulk_size=int(bulk.size),
    )


def contraction_matrix(T: SymmetricTensor, u) -> np.ndarray:
    if T.order == 2:
        return np.array(T.entries)
    return contract(T, u, T.order - 2).entries


def contraction_spectrum(T: SymmetricTensor, u, margin: float = 0.02) -> SpectrumReport:
    """Eigenvalues of ``T . u^{d-2}`` compared against the semicircle law."""
    M = contraction_matrix(T, u)
    try:
        ev = np.linalg.eigvalsh(M)
    except np.linalg.LinAlgError as exc:
        raise ArithmeticError(f"symmetric eigensolver failed: {exc}") from exc
    return spectrum_report(ev, T.order, margin)
