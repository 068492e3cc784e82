"""Stability certificates and empirical probes for the Lipschitz unit.

Convention: ``A_sym`` is the *halved* symmetrization ½(A + Aᵀ) used by the
global-stability conditions.  (The spectrum-interval code in ``params`` works
with the same halved form; the unhalved S + Sᵀ never appears here.)
"""
from __future__ import annotations

import csv
import json
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np

from .cell import LipschitzCell
from .linalg import general_eigs, singular_values, sym_eigs

__all__ = [
    "StabilityReport",
    "certify",
    "certify_cell",
    "cgh_transform",
    "DecayFit",
    "decay_rate",
    "EigTrace",
    "track_eigs",
    "max_real_parts",
    "sym_drift",
    "DEFINITE_MARGIN",
]

DEFINITE_MARGIN = 1e-10


@dataclass
class StabilityReport:
    sym_spectrum_A: list[float]
    sigma_min_Asym: float
    sigma_max_W: float
    sigma_min_W: float
    lipschitz_M: float
    A_sym_negative: bool
    W_nonsingular: bool
    cond_a_holds: bool
    cond_a_margin: float
    cond_b_holds: bool
    lambda_max_W_plus_WT: float
    lambda_min_ATW_plus_WTA: float
    max_re_A: float | None = None
    max_re_W: float | None = None
    extra: dict = field(default_factory=dict)

    def to_json(self, **kw) -> str:
        return json.dumps(asdict(self), **kw)


def certify(A, W, lipschitz_M: float = 1.0) -> StabilityReport:
    """Evaluate both sufficient conditions for global exponential stability.

    (a) σ_min(A_sym) > M·σ_max(W);  (b) W + Wᵀ ≺ 0 and AᵀW + WᵀA ≻ 0.
    Both also need A_sym ≺ 0 and W nonsingular.
    """
    A = np.asarray(A, dtype=float)
    W = np.asarray(W, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape != W.shape:
        raise ValueError(f"A and W must be square and equal-sized, got {A.shape} and {W.shape}")
    if lipschitz_M <= 0:
        raise ValueError("lipschitz_M must be positive")
    lam_A, _ = sym_eigs(0.5 * (A + A.T))
    sv_W = singular_values(W)
    sigma_min_Asym = float(np.min(np.abs(lam_A)))
    neg = bool(lam_A[-1] < -DEFINITE_MARGIN)
    nonsing = bool(sv_W[-1] > 1e-10)
    margin_a = sigma_min_Asym - lipschitz_M * float(sv_W[0])
    lam_wwt, _ = sym_eigs(W + W.T)
    cross = A.T @ W + W.T @ A
    lam_cross, _ = sym_eigs(0.5 * (cross + cross.T))
    cond_b = neg and nonsing and lam_wwt[-1] < -DEFINITE_MARGIN and lam_cross[0] > DEFINITE_MARGIN
    return StabilityReport(
        sym_spectrum_A=[float(x) for x in lam_A],
        sigma_min_Asym=sigma_min_Asym,
        sigma_max_W=float(sv_W[0]),
        sigma_min_W=float(sv_W[-1]),
        lipschitz_M=float(lipschitz_M),
        A_sym_negative=neg,
        W_nonsingular=nonsing,
        cond_a_holds=bool(neg and nonsing and margin_a > 0.0),
        cond_a_margin=margin_a,
        cond_b_holds=bool(cond_b),
        lambda_max_W_plus_WT=float(lam_wwt[-1]),
        lambda_min_ATW_plus_WTA=float(lam_cross[0]),
    )


def certify_cell(cell: LipschitzCell, lipschitz_M: float = 1.0) -> StabilityReport:
    A = cell.effective_alpha * cell.A()
    W = cell.W()
    report = certify(A, W, lipschitz_M)
    report.max_re_A = float(general_eigs(A)[0].real)
    report.max_re_W = float(general_eigs(W)[0].real)
    return report


def cgh_transform(A, W) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Diagonalize a symmetric-A model: z = Pᵀh turns ``dh = Ah + σ(Wh + c)`` into
    ``dz = diag(D) z + L σ(V z + c)`` with L = Pᵀ and V = W P.

    Returns ``(D, L, V)``; ``P`` is ``L.T``.
    """
    A = np.asarray(A, dtype=float)
    W = np.asarray(W, dtype=float)
    if singular_values(W)[-1] <= 1e-10:
        raise ValueError("W is singular")
    d, P = sym_eigs(A)  # raises NotSymmetricError on asymmetric A
    recon = P @ np.diag(d) @ P.T
    if np.linalg.norm(A - recon) > 1e-8 * (1.0 + np.linalg.norm(A)):
        raise ArithmeticError("eigendecomposition failed to reconstruct A")
    return d, P.T.copy(), W @ P


# ---------------------------------------------------------------------------
# empirical decay rate
# ---------------------------------------------------------------------------

@dataclass
class DecayFit:
    lambda_hat: float  # worst (smallest) rate over trials; > 0 means contraction
    C_hat: float  # largest fitted constant over trials
    rates: np.ndarray
    constants: np.ndarray
    diverged: bool


def _integrate_pair(A, W, drive, alpha, h, dt, steps, blowup):
    # RK2 on a stack of states; stops early once the pair separation explodes
    dist = np.empty(steps + 1)
    dist[0] = np.linalg.norm(h[0] - h[1])
    half = 0.5 * dt
    for k in range(steps):
        f = alpha * (h @ A.T) + np.tanh(h @ W.T + drive)
        m = h + half * f
        h = h + dt * (alpha * (m @ A.T) + np.tanh(m @ W.T + drive))
        dist[k + 1] = np.linalg.norm(h[0] - h[1])
        if not np.isfinite(dist[k + 1]) or dist[k + 1] > blowup:
            return dist[: k + 2], True
    return dist, False


def decay_rate(cell: LipschitzCell, x_const, trials: int = 8, horizon: float = 10.0,
               seed: int = 0, init_scale: float = 1.0) -> DecayFit:
    """Fit ‖h₁(t) − h₂(t)‖ ≈ C e^{-λt} ‖h₁(0) − h₂(0)‖ for random pairs of
    initial states under a constant input.

    Integration uses RK2 at a quarter of the cell's step.  The fit is least
    squares of log-distance on time, restricted to samples with distance above
    1e-12.
    """
    if trials < 2:
        raise ValueError("decay_rate needs trials >= 2")
    x = np.asarray(x_const, dtype=float).reshape(cell.p)
    A, W, alpha = cell.A(), cell.W(), cell.effective_alpha
    drive = cell.U @ x + cell.b
    dt = cell.dt / 4.0
    steps = max(int(np.ceil(horizon / dt)), 2)
    root = np.random.SeedSequence(seed)
    rates, consts = np.empty(trials), np.empty(trials)
    diverged = False
    for i, child in enumerate(root.spawn(trials)):
        rng = np.random.default_rng(child)
        h = rng.normal(0.0, init_scale, (2, cell.N))
        d0 = np.linalg.norm(h[0] - h[1])
        dist, blew = _integrate_pair(A, W, drive, alpha, h, dt, steps, 1e12 * (1.0 + d0))
        t = dt * np.arange(dist.size)
        keep = dist > 1e-12
        if keep.sum() < 2:
            # contracted below resolution almost immediately
            keep[:2] = True
            dist = np.maximum(dist, 1e-300)
        slope, intercept = np.polyfit(t[keep], np.log(dist[keep]), 1)
        rates[i] = -slope
        consts[i] = np.exp(intercept) / dist[0]
        diverged |= blew or rates[i] < 0
    return DecayFit(float(rates.min()), float(consts.max()), rates, consts, bool(diverged))


# ---------------------------------------------------------------------------
# eigenvalue tracking during training
# ---------------------------------------------------------------------------

def max_real_parts(cell: LipschitzCell) -> tuple[float, float]:
    return float(general_eigs(cell.A())[0].real), float(general_eigs(cell.W())[0].real)


@dataclass
class EigTrace:
    """Largest real part of the spectra of A and W at recorded training steps."""

    stride: int = 1
    steps: list[int] = field(default_factory=list)
    max_re_A: list[float] = field(default_factory=list)
    max_re_W: list[float] = field(default_factory=list)

    def record(self, step: int, cell: LipschitzCell) -> None:
        if self.steps and step <= self.steps[-1]:
            raise ValueError(f"step {step} is not after {self.steps[-1]}")
        a, w = max_real_parts(cell)
        self.steps.append(int(step))
        self.max_re_A.append(a)
        self.max_re_W.append(w)

    def __call__(self, step: int, cell: LipschitzCell) -> None:
        # training-loop hook
        if step % self.stride == 0:
            self.record(step, cell)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["step", "maxReA", "maxReW"])
            for row in zip(self.steps, self.max_re_A, self.max_re_W):
                w.writerow([row[0], repr(row[1]), repr(row[2])])


def sym_drift(cell: LipschitzCell, X, targets, lr: float, loss: str = "ce") -> float:
    """Largest eigenvalue shift of A_sym caused by one plain gradient step of
    size ``lr`` on the batch; the cell itself is left untouched."""
    from .autodiff import batch_gradients

    before = sym_eigs(0.5 * (cell.A() + cell.A().T))[0]
    _, grads = batch_gradients(cell, X, targets, loss)
    moved = cell.copy()
    moved.A_param.M -= lr * grads.M_A
    A = moved.A()
    after = sym_eigs(0.5 * (A + A.T))[0]
    return float(np.max(np.abs(after - before)))


def track_eigs(training_run: Callable[[Callable[[int, LipschitzCell], None]], object],
               stride: int = 1) -> EigTrace:
    """Run ``training_run(hook)`` where the run calls ``hook(step, cell)`` after
    every optimizer step (and once with step 0 before training)."""
    trace = EigTrace(stride=stride)
    training_run(trace)
    return trace
