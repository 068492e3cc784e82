"""Dense real-matrix kernels and small eigen/singular-value solvers.

Matrices are plain ``numpy.ndarray`` objects of dtype float64 and shape
``(rows, cols)``.  The solvers here are written out explicitly (cyclic Jacobi
for symmetric input, Householder-Hessenberg + Francis double-shift QR for
general input) so every spectral number the toolkit reports comes from code
in this package.
"""
from __future__ import annotations

import io
from typing import Iterable

import numpy as np

__all__ = [
    "LinalgError",
    "NotSymmetricError",
    "EigenConvergenceError",
    "as_matrix",
    "matvec",
    "sym_eigs",
    "hessenberg",
    "general_eigs",
    "sort_spectrum",
    "singular_values",
    "symmetric_part",
    "format_matrix",
    "parse_matrix",
]

_EPS = np.finfo(float).eps


class LinalgError(ValueError):
    pass


class NotSymmetricError(LinalgError):
    pass


class EigenConvergenceError(LinalgError):
    """QR iteration ran out of sweeps; ``partial`` holds what did converge."""

    def __init__(self, message: str, partial: np.ndarray):
        super().__init__(message)
        self.partial = partial
        self.converged = False


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    m = np.array(a, dtype=float)
    if m.ndim != 2 or m.shape[0] < 1 or m.shape[1] < 1:
        raise LinalgError(f"{name} must be a non-empty 2-D array, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise LinalgError(f"{name} has non-finite entries")
    return m


def _square(a, name: str) -> np.ndarray:
    m = as_matrix(a, name)
    if m.shape[0] != m.shape[1]:
        raise LinalgError(f"{name} must be square, got shape {m.shape}")
    return m


def symmetric_part(a) -> np.ndarray:
    """½(A + Aᵀ)."""
    m = _square(a, "A")
    return 0.5 * (m + m.T)


def matvec(a, x) -> np.ndarray:
    m = np.asarray(a, dtype=float)
    v = np.asarray(x, dtype=float)
    if m.ndim != 2 or v.ndim != 1 or m.shape[1] != v.shape[0]:
        raise LinalgError(
            f"matvec shape mismatch: matrix {m.shape} vs vector {v.shape}"
        )
    return m @ v


# ---------------------------------------------------------------------------
# symmetric eigenproblem: cyclic Jacobi, round-robin parallel ordering
# ---------------------------------------------------------------------------

def _round_robin(n: int) -> list[tuple[np.ndarray, np.ndarray]]:
    # n - 1 rounds of disjoint pairs that together cover every (p, q) once.
    m = n + (n % 2)
    players = list(range(m))
    rounds = []
    for _ in range(m - 1):
        ps, qs = [], []
        for i in range(m // 2):
            p, q = players[i], players[m - 1 - i]
            if p < n and q < n:
                ps.append(min(p, q))
                qs.append(max(p, q))
        rounds.append((np.array(ps, dtype=int), np.array(qs, dtype=int)))
        players = [players[0], players[-1]] + players[1:-1]
    return rounds


def sym_eigs(s, max_sweeps: int = 60) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues (ascending) and orthonormal eigenvectors of a symmetric matrix.

    Cyclic Jacobi.  Within a sweep the index pairs are grouped into rounds of
    disjoint pairs; rotations in one round commute, so a round is applied as
    a single vectorized update.
    """
    a = _square(s, "S")
    scale = 1.0 + np.max(np.abs(a))
    if np.max(np.abs(a - a.T)) > 1e-10 * scale:
        raise NotSymmetricError(
            "sym_eigs needs a symmetric matrix (asymmetry above 1e-10 relative); "
            "use general_eigs for non-symmetric input"
        )
    a = 0.5 * (a + a.T)
    n = a.shape[0]
    v = np.eye(n)
    if n == 1:
        return a[0].copy(), v
    rounds = _round_robin(n)
    tiny = 1e-2 * _EPS * np.linalg.norm(a)
    for _ in range(max_sweeps):
        rotated = False
        for p, q in rounds:
            apq = a[p, q]
            active = np.abs(apq) > tiny
            if not np.any(active):
                continue
            rotated = True
            p, q, apq = p[active], q[active], apq[active]
            app, aqq = a[p, p], a[q, q]
            theta = (aqq - app) / (2.0 * apq)
            t = np.sign(theta) / (np.abs(theta) + np.sqrt(theta * theta + 1.0))
            t[theta == 0.0] = 1.0
            c = 1.0 / np.sqrt(t * t + 1.0)
            sn = t * c
            # rows then columns: A <- Jᵀ A J
            rp, rq = a[p, :].copy(), a[q, :].copy()
            a[p, :] = c[:, None] * rp - sn[:, None] * rq
            a[q, :] = sn[:, None] * rp + c[:, None] * rq
            cp, cq = a[:, p].copy(), a[:, q].copy()
            a[:, p] = cp * c - cq * sn
            a[:, q] = cp * sn + cq * c
            a[p, q] = 0.0
            a[q, p] = 0.0
            vp, vq = v[:, p].copy(), v[:, q].copy()
            v[:, p] = vp * c - vq * sn
            v[:, q] = vp * sn + vq * c
        if not rotated:
            break
    w = np.diag(a).copy()
    order = np.argsort(w, kind="stable")
    return w[order], v[:, order]


# ---------------------------------------------------------------------------
# general eigenproblem: Hessenberg reduction + Francis double-shift QR
# ---------------------------------------------------------------------------

def _householder(x: np.ndarray) -> tuple[np.ndarray, float]:
    # v, beta with (I - beta v vᵀ) x = ∓‖x‖ e1
    v = np.array(x, dtype=float)
    sigma = np.linalg.norm(v)
    if sigma == 0.0:
        return v, 0.0
    alpha = -np.copysign(sigma, v[0])
    v[0] -= alpha
    vv = v @ v
    if vv == 0.0:
        return v, 0.0
    return v, 2.0 / vv


def hessenberg(a) -> np.ndarray:
    """Upper Hessenberg matrix orthogonally similar to ``a``."""
    h = _square(a, "A").copy()
    n = h.shape[0]
    for k in range(n - 2):
        v, beta = _householder(h[k + 1:, k])
        if beta == 0.0:
            continue
        h[k + 1:, k:] -= beta * np.outer(v, v @ h[k + 1:, k:])
        h[:, k + 1:] -= beta * np.outer(h[:, k + 1:] @ v, v)
        h[k + 2:, k] = 0.0
    return h


def _eig2x2(a: float, b: float, c: float, d: float) -> tuple[complex, complex]:
    p = 0.5 * (a + d)
    bc = b * c
    disc = (0.5 * (a - d)) ** 2 + bc
    if disc >= 0.0:
        r = np.sqrt(disc)
        big = p + np.copysign(r, p) if p != 0.0 else r
        det = a * d - bc
        small = det / big if big != 0.0 else p - r
        return complex(big), complex(small)
    r = np.sqrt(-disc)
    return complex(p, r), complex(p, -r)


def sort_spectrum(eigs: Iterable[complex]) -> np.ndarray:
    """Descending real part, ties broken by descending imaginary part."""
    e = np.asarray(list(eigs), dtype=complex)
    order = np.lexsort((-e.imag, -e.real))
    return e[order]


def general_eigs(a, max_sweeps_per_dim: int = 30) -> np.ndarray:
    """All eigenvalues of a real square matrix, as a sorted complex array.

    Raises :class:`EigenConvergenceError` after ``30·n`` Francis sweeps without
    full deflation.
    """
    h = hessenberg(a)
    n = h.shape[0]
    if n > 2048:
        raise LinalgError(f"general_eigs supports n <= 2048, got {n}")
    norm = np.sum(np.abs(h)) or 1.0
    eigs: list[complex] = []
    hi = n - 1
    its = 0
    total = 0
    limit = max_sweeps_per_dim * n
    while hi >= 0:
        # locate the start of the trailing unreduced block
        l = hi
        while l > 0:
            s = abs(h[l - 1, l - 1]) + abs(h[l, l])
            if s == 0.0:
                s = norm
            if abs(h[l, l - 1]) <= _EPS * s:
                h[l, l - 1] = 0.0
                break
            l -= 1
        if l == hi:
            eigs.append(complex(h[hi, hi]))
            hi -= 1
            its = 0
            continue
        if l == hi - 1:
            eigs.extend(_eig2x2(h[hi - 1, hi - 1], h[hi - 1, hi], h[hi, hi - 1], h[hi, hi]))
            hi -= 2
            its = 0
            continue
        if total >= limit:
            raise EigenConvergenceError(
                f"Francis QR did not converge within {limit} sweeps",
                sort_spectrum(eigs),
            )
        its += 1
        total += 1
        if its % 10 == 0:
            # exceptional shift breaks rare cycles
            w = abs(h[hi, hi - 1]) + abs(h[hi - 1, hi - 2])
            s, t = 1.5 * w + 2.0 * h[hi, hi], (0.75 * w + h[hi, hi]) ** 2 + 0.4375 * w * w
        else:
            s = h[hi - 1, hi - 1] + h[hi, hi]
            t = h[hi - 1, hi - 1] * h[hi, hi] - h[hi - 1, hi] * h[hi, hi - 1]
        x = h[l, l] * h[l, l] + h[l, l + 1] * h[l + 1, l] - s * h[l, l] + t
        y = h[l + 1, l] * (h[l, l] + h[l + 1, l + 1] - s)
        z = h[l + 1, l] * h[l + 2, l + 1]
        for k in range(l, hi - 1):
            v, beta = _householder(np.array([x, y, z]))
            if beta != 0.0:
                q = max(l, k - 1)
                blk = h[k:k + 3, q:hi + 1]
                blk -= beta * np.outer(v, v @ blk)
                r = min(k + 3, hi)
                blk = h[l:r + 1, k:k + 3]
                blk -= beta * np.outer(blk @ v, v)
            x = h[k + 1, k]
            y = h[k + 2, k]
            if k < hi - 2:
                z = h[k + 3, k]
        v, beta = _householder(np.array([x, y]))
        if beta != 0.0:
            blk = h[hi - 1:hi + 1, hi - 2:hi + 1]
            blk -= beta * np.outer(v, v @ blk)
            blk = h[l:hi + 1, hi - 1:hi + 1]
            blk -= beta * np.outer(blk @ v, v)
    return sort_spectrum(eigs)


def singular_values(a) -> np.ndarray:
    """Descending singular values, ``min(rows, cols)`` of them.

    Square roots of the eigenvalues of the smaller Gram matrix, clamped at 0.
    """
    m = as_matrix(a, "A")
    g = m.T @ m if m.shape[1] <= m.shape[0] else m @ m.T
    w, _ = sym_eigs(0.5 * (g + g.T))
    return np.sqrt(np.clip(w, 0.0, None))[::-1]


# ---------------------------------------------------------------------------
# text format: "rows cols" then one line per row, 17 significant digits
# ---------------------------------------------------------------------------

def format_matrix(a) -> str:
    m = as_matrix(a)
    out = io.StringIO()
    out.write(f"{m.shape[0]} {m.shape[1]}\n")
    for row in m:
        out.write(" ".join(f"{x:.17g}" for x in row))
        out.write("\n")
    return out.getvalue()


def parse_matrix(text: str) -> np.ndarray:
    lines = [ln for ln in text.strip().splitlines() if ln.strip()]
    if not lines:
        raise LinalgError("empty matrix text")
    try:
        rows, cols = (int(t) for t in lines[0].split())
    except ValueError as exc:
        raise LinalgError(f"bad matrix header {lines[0]!r}") from exc
    if len(lines) - 1 != rows:
        raise LinalgError(f"expected {rows} rows, found {len(lines) - 1}")
    data = [[float(t) for t in ln.split()] for ln in lines[1:]]
    if any(len(r) != cols for r in data):
        raise LinalgError(f"every row must have {cols} entries")
    return as_matrix(data)
