"""Symmetric-skew construction of hidden-to-hidden matrices.

A free square matrix ``M`` and scalars ``beta``, ``gamma`` give::

    S = (1 - beta) (M + Mᵀ) + beta (M - Mᵀ) - gamma I

``beta`` trades the symmetric part (growth/decay) against the skew part
(rotation) and ``gamma`` shifts the spectrum left.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .linalg import LinalgError, as_matrix, sym_eigs

__all__ = [
    "SymSkewParam",
    "SpectrumInterval",
    "materialize",
    "spectrum_interval",
    "printed_interval",
    "grad_to_M",
]


@dataclass
class SymSkewParam:
    M: np.ndarray
    beta: float = 0.75
    gamma: float = 0.001

    def __post_init__(self):
        self.M = as_matrix(self.M, "M")
        if self.M.shape[0] != self.M.shape[1]:
            raise LinalgError(f"M must be square, got {self.M.shape}")
        self.beta = float(self.beta)
        self.gamma = float(self.gamma)
        if not 0.0 <= self.beta <= 1.0:
            raise ValueError(f"beta must lie in [0, 1], got {self.beta}")
        if self.gamma < 0.0:
            raise ValueError(f"gamma must be >= 0, got {self.gamma}")
        if self.beta < 0.5:
            warnings.warn(
                f"beta={self.beta} is below the recommended range [0.5, 1]",
                stacklevel=3,
            )

    @property
    def n(self) -> int:
        return self.M.shape[0]

    def materialize(self) -> np.ndarray:
        return materialize(self)


@dataclass(frozen=True)
class SpectrumInterval:
    lo: float
    hi: float

    def __post_init__(self):
        if self.lo > self.hi:
            raise ValueError(f"empty interval [{self.lo}, {self.hi}]")

    @property
    def width(self) -> float:
        return self.hi - self.lo

    def contains(self, x, tol: float = 0.0) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all((x >= self.lo - tol) & (x <= self.hi + tol)))


def materialize(p: SymSkewParam) -> np.ndarray:
    m = p.M
    return (
        (1.0 - p.beta) * (m + m.T)
        + p.beta * (m - m.T)
        - p.gamma * np.eye(m.shape[0])
    )


def spectrum_interval(p: SymSkewParam) -> SpectrumInterval:
    """Interval holding every Re λ(S) and every eigenvalue of ½(S + Sᵀ).

    ½(S + Sᵀ) = 2(1-beta)·Msym - gamma·I with Msym = ½(M + Mᵀ), so the
    endpoints carry a factor 2 on the Msym eigenvalues.
    """
    w, _ = sym_eigs(0.5 * (p.M + p.M.T))
    scale = 2.0 * (1.0 - p.beta)
    return SpectrumInterval(float(scale * w[0] - p.gamma), float(scale * w[-1] - p.gamma))


def printed_interval(p: SymSkewParam) -> SpectrumInterval:
    """The same bound without the factor 2, kept for side-by-side reporting.

    It is tighter than the true real-part range and can fail to contain it.
    """
    w, _ = sym_eigs(0.5 * (p.M + p.M.T))
    scale = 1.0 - p.beta
    return SpectrumInterval(float(scale * w[0] - p.gamma), float(scale * w[-1] - p.gamma))


def grad_to_M(grad_S, beta: float) -> np.ndarray:
    """Pull dL/dS back to dL/dM.  ``gamma`` does not enter."""
    g = np.asarray(grad_S, dtype=float)
    if g.ndim != 2 or g.shape[0] != g.shape[1]:
        raise LinalgError(f"grad_S must be square, got shape {g.shape}")
    return (1.0 - beta) * (g + g.T) + beta * (g - g.T)
