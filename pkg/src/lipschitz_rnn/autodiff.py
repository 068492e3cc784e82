"""Reverse-mode gradients through the unrolled Euler / RK2 recursions.

The backward pass is hand-derived for this model family: it walks the stored
:class:`~lipschitz_rnn.cell.Trajectory` backwards, carrying the adjoint
``lam_t = dL/dh_t``, and collects per-step parameter contributions into
stacked arrays that are contracted with one matrix product at the end.
"""
from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np

from .cell import LipschitzCell, Scheme, Trajectory, forward_batch
from .params import grad_to_M

__all__ = [
    "Gradients",
    "cross_entropy",
    "cross_entropy_batch",
    "mse",
    "mse_batch",
    "bptt",
    "batch_gradients",
    "PARAM_NAMES",
]

PARAM_NAMES = ("M_A", "M_W", "U", "b", "D")


@dataclass
class Gradients:
    M_A: np.ndarray
    M_W: np.ndarray
    U: np.ndarray
    b: np.ndarray
    D: np.ndarray
    # not parameters: adjoints at the initial state and at every input
    h0: np.ndarray | None = None
    X: np.ndarray | None = None

    def as_dict(self) -> dict[str, np.ndarray]:
        return {k: getattr(self, k) for k in PARAM_NAMES}

    def flat(self) -> np.ndarray:
        return np.concatenate([getattr(self, k).ravel() for k in PARAM_NAMES])

    def scaled(self, c: float) -> "Gradients":
        kw = {f.name: (None if getattr(self, f.name) is None else c * getattr(self, f.name))
              for f in fields(self)}
        return Gradients(**kw)

    def global_norm(self) -> float:
        return float(np.sqrt(sum(np.sum(g * g) for g in self.as_dict().values())))


def cross_entropy(logits, label: int) -> tuple[float, np.ndarray]:
    z = np.asarray(logits, dtype=float)
    if not 0 <= label < z.shape[0]:
        raise ValueError(f"label {label} out of range for {z.shape[0]} classes")
    loss, g = cross_entropy_batch(z[None], np.array([label]))
    return loss, g[0]


def cross_entropy_batch(logits, labels) -> tuple[float, np.ndarray]:
    """Mean softmax cross-entropy over the batch and its gradient w.r.t. logits."""
    z = np.asarray(logits, dtype=float)
    labels = np.asarray(labels, dtype=int)
    B, d = z.shape
    if labels.shape != (B,) or np.any(labels < 0) or np.any(labels >= d):
        raise ValueError(f"labels must be {B} class indices in [0, {d})")
    shifted = z - z.max(axis=1, keepdims=True)
    logsum = np.log(np.sum(np.exp(shifted), axis=1))
    logp = shifted - logsum[:, None]
    loss = -np.mean(logp[np.arange(B), labels])
    grad = np.exp(logp)
    grad[np.arange(B), labels] -= 1.0
    return float(loss), grad / B


def mse(pred, target) -> tuple[float, np.ndarray]:
    p = np.asarray(pred, dtype=float)
    t = np.asarray(target, dtype=float)
    if p.shape != t.shape:
        raise ValueError(f"length mismatch: {p.shape} vs {t.shape}")
    r = p - t
    return float(np.mean(r * r)), 2.0 * r / r.size


def mse_batch(pred, target) -> tuple[float, np.ndarray]:
    """Mean over the batch of per-sample mean squared error."""
    return mse(pred, np.asarray(target, dtype=float).reshape(np.shape(pred)))


def bptt(cell: LipschitzCell, traj: Trajectory, dY) -> Gradients:
    """Gradients of a scalar loss whose gradient at ``y = D h_T`` is ``dY``.

    Batched trajectories take ``dY`` of shape ``(B, d)`` and return gradients
    summed over the batch.
    """
    if traj.scheme is not cell.scheme:
        raise ValueError(f"trajectory was produced with {traj.scheme.value}, cell uses {cell.scheme.value}")
    states = traj.states
    T1, B, N = states.shape
    if N != cell.N or traj.inputs.shape[-1] != cell.p:
        raise ValueError("trajectory does not match the cell's dimensions")
    dY = np.asarray(dY, dtype=float).reshape(B, cell.d)
    T = T1 - 1
    A, W = cell.A(), cell.W()
    alpha, dt = cell.effective_alpha, cell.dt
    X = traj.inputs

    dD = dY.T @ states[-1]
    lam = dY @ cell.D

    if cell.scheme is Scheme.EULER:
        # lam_t = lam_{t+1} (I + dt·alpha·A) + g_t W,   g_t = dt·lam_{t+1}·sech²(z_t)
        step_A = np.eye(N) + dt * alpha * A
        sech2 = 1.0 - traj.acts * traj.acts
        G = np.empty((T, B, N))
        lams = np.empty((T, B, N))
        for t in range(T - 1, -1, -1):
            lams[t] = lam
            g = dt * lam * sech2[t]
            G[t] = g
            lam = lam @ step_A + g @ W
        h_prev = states[:-1].reshape(-1, N)
        Gf = G.reshape(-1, N)
        dA = (dt * alpha) * (lams.reshape(-1, N).T @ h_prev)
        dW = Gf.T @ h_prev
        G_in = G
    else:
        half = 0.5 * dt
        sech_a = 1.0 - traj.acts * traj.acts
        sech_m = 1.0 - traj.mid_acts * traj.mid_acts
        half_A = np.eye(N) + half * alpha * A
        G1 = np.empty((T, B, N))
        G2 = np.empty((T, B, N))
        lams = np.empty((T, B, N))
        lam_mids = np.empty((T, B, N))
        for t in range(T - 1, -1, -1):
            lams[t] = lam
            g2 = dt * lam * sech_m[t]
            G2[t] = g2
            lam_mid = (dt * alpha) * (lam @ A) + g2 @ W if alpha != 0.0 else g2 @ W
            lam_mids[t] = lam_mid
            g1 = half * lam_mid * sech_a[t]
            G1[t] = g1
            lam = lam + lam_mid @ half_A + g1 @ W
        h_prev = states[:-1].reshape(-1, N)
        h_mid = traj.mid_states.reshape(-1, N)
        dA = (dt * alpha) * (lams.reshape(-1, N).T @ h_mid) + (half * alpha) * (
            lam_mids.reshape(-1, N).T @ h_prev
        )
        dW = G2.reshape(-1, N).T @ h_mid + G1.reshape(-1, N).T @ h_prev
        G_in = G1 + G2

    # inputs enter both stages through U x_t + b
    Xt = np.transpose(X, (1, 0, 2))  # (T, B, p)
    dU = G_in.reshape(-1, N).T @ Xt.reshape(-1, cell.p) if T else np.zeros_like(cell.U)
    db = G_in.reshape(-1, N).sum(axis=0)
    dX = np.transpose(G_in @ cell.U, (1, 0, 2))
    if T == 0:
        dA = np.zeros((N, N))
        dW = np.zeros((N, N))
    grads = Gradients(
        M_A=grad_to_M(dA, cell.A_param.beta),
        M_W=grad_to_M(dW, cell.W_beta),
        U=dU,
        b=db,
        D=dD,
        h0=lam,
        X=dX,
    )
    if not traj.batched:
        grads.h0 = grads.h0[0]
        grads.X = grads.X[0]
    return grads


def batch_gradients(cell: LipschitzCell, X, targets, loss: str = "ce") -> tuple[float, Gradients]:
    """Mean loss and mean parameter gradients over a batch.

    ``X`` has shape ``(B, T, p)``; ``targets`` are class indices for
    ``loss="ce"`` or regression targets of shape ``(B, d)`` for ``loss="mse"``.
    The batch reduction is a fixed-order matrix product, so repeated calls are
    bitwise reproducible for a fixed BLAS thread count.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 3 or X.shape[0] == 0:
        raise ValueError("batch_gradients needs a non-empty batch of shape (B, T, p)")
    traj, Y = forward_batch(cell, X)
    if loss == "ce":
        value, dY = cross_entropy_batch(Y, targets)
    elif loss == "mse":
        value, dY = mse_batch(Y, targets)
    else:
        raise ValueError(f"unknown loss {loss!r}")
    return value, bptt(cell, traj, dY)
