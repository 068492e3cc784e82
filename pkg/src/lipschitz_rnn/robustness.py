"""Input perturbations, PGD attacks and Hessian spectrum estimates.

Hessian-vector products are central differences of first-order gradients;
the estimators take a :class:`ParamObjective` so they can be checked on an
analytic quadratic before being pointed at a trained cell.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import Callable

import numpy as np

from .autodiff import PARAM_NAMES, batch_gradients, bptt, cross_entropy_batch
from .cell import LipschitzCell, forward_batch
from .data import make_rng

__all__ = [
    "perturb",
    "pgd_attack",
    "input_gradient",
    "accuracy",
    "ParamObjective",
    "model_objective",
    "quadratic_objective",
    "hvp",
    "HessianMetrics",
    "hessian_metrics",
    "get_flat_params",
    "set_flat_params",
]


def perturb(x, kind: str, amount: float, seed: int) -> np.ndarray:
    """``white``: add N(0, amount²) noise; ``saltpepper``: with probability
    ``amount`` replace an entry by 0 or 1 (even odds)."""
    x = np.asarray(x, dtype=float)
    if amount < 0:
        raise ValueError("amount must be non-negative")
    rng = make_rng(seed, 13)
    if kind == "white":
        if amount == 0:
            return x.copy()
        return x + rng.normal(0.0, amount, x.shape)
    if kind == "saltpepper":
        if amount > 1:
            raise ValueError("salt-and-pepper amount is a probability in [0, 1]")
        flip = rng.random(x.shape) < amount
        value = (rng.random(x.shape) < 0.5).astype(float)
        return np.where(flip, value, x)
    raise ValueError(f"unknown perturbation kind {kind!r}")


def predict(cell: LipschitzCell, X, batch_size: int = 500) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    out = [forward_batch(cell, X[i:i + batch_size])[1] for i in range(0, len(X), batch_size)]
    return np.concatenate(out, axis=0)


def accuracy(cell: LipschitzCell, X, labels, batch_size: int = 500) -> float:
    return float(np.mean(np.argmax(predict(cell, X, batch_size), axis=1) == np.asarray(labels)))


def input_gradient(cell: LipschitzCell, X, labels) -> tuple[float, np.ndarray]:
    """Mean cross-entropy and its gradient with respect to every input entry."""
    traj, Y = forward_batch(cell, X)
    loss, dY = cross_entropy_batch(Y, labels)
    return loss, bptt(cell, traj, dY).X


def pgd_attack(cell: LipschitzCell, X, labels, eps_inf: float, step: float = 0.01,
               iters: int = 7, clip=(0.0, 1.0)) -> np.ndarray:
    """L∞ projected gradient ascent on the classification loss.

    Each iterate is projected onto the ``eps_inf`` ball around the clean input
    and clamped to the data range ``clip``.
    """
    if step <= 0 or iters < 1:
        raise ValueError("PGD needs step > 0 and iters >= 1")
    if eps_inf < 0:
        raise ValueError("eps_inf must be non-negative")
    x0 = np.asarray(X, dtype=float)
    single = x0.ndim == 2
    if single:
        x0 = x0[None]
        labels = np.atleast_1d(labels)
    x = x0.copy()
    lo, hi = clip
    for k in range(iters):
        _, g = input_gradient(cell, x, labels)
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite input gradient at PGD step {k}")
        x = x + step * np.sign(g)
        x = np.clip(x, x0 - eps_inf, x0 + eps_inf)
        x = np.clip(x, lo, hi)
        assert np.all(np.abs(x - x0) <= eps_inf + 1e-12)
    return x[0] if single else x


# ---------------------------------------------------------------------------
# Hessian
# ---------------------------------------------------------------------------

@dataclass
class ParamObjective:
    """A loss seen as a function of one flat parameter vector."""

    theta: np.ndarray
    grad: Callable[[np.ndarray], np.ndarray]


def get_flat_params(cell: LipschitzCell) -> np.ndarray:
    return np.concatenate([cell.params()[k].ravel() for k in PARAM_NAMES])


def set_flat_params(cell: LipschitzCell, theta: np.ndarray) -> None:
    pos = 0
    for k in PARAM_NAMES:
        arr = cell.params()[k]
        arr[...] = theta[pos:pos + arr.size].reshape(arr.shape)
        pos += arr.size
    if pos != theta.size:
        raise ValueError(f"expected {pos} parameters, got {theta.size}")


def model_objective(cell: LipschitzCell, X, targets, loss: str = "ce") -> ParamObjective:
    work = cell.copy()

    def grad(theta):
        set_flat_params(work, theta)
        return batch_gradients(work, X, targets, loss)[1].flat()

    return ParamObjective(get_flat_params(cell), grad)


def quadratic_objective(Q, theta=None) -> ParamObjective:
    """L(θ) = ½ θᵀQθ; its Hessian is Q everywhere."""
    Q = np.asarray(Q, dtype=float)
    th = np.ones(Q.shape[0]) if theta is None else np.asarray(theta, dtype=float)
    return ParamObjective(th, lambda t: Q @ t)


def hvp(obj: ParamObjective, v, scaling: float = 1.0) -> np.ndarray:
    """H·v ≈ [g(θ + r v̂) − g(θ − r v̂)]·‖v‖ / (2r), r = 1e-4·(1 + ‖θ‖)·scaling.

    Truncation error is O(r²).
    """
    v = np.asarray(v, dtype=float)
    if v.shape != obj.theta.shape:
        raise ValueError(f"v has shape {v.shape}, parameters have {obj.theta.shape}")
    nv = np.linalg.norm(v)
    if nv == 0:
        raise ValueError("hvp direction must be non-zero")
    u = v / nv
    r = 1e-4 * (1.0 + np.linalg.norm(obj.theta)) * scaling
    return (obj.grad(obj.theta + r * u) - obj.grad(obj.theta - r * u)) * (nv / (2.0 * r))


@dataclass
class HessianMetrics:
    lambda_max: float
    trace_estimate: float
    trace_stderr: float
    lambda_min: float
    condition: float | None
    condition_defined: bool
    converged: bool
    probes: int
    iterations: int

    def to_json(self, **kw) -> str:
        return json.dumps(asdict(self), **kw)


def _power(op, n, rng, iters, tol):
    v = rng.standard_normal(n)
    v /= np.linalg.norm(v)
    rq_prev = None
    for k in range(1, iters + 1):
        w = op(v)
        rq = float(v @ w)
        nw = np.linalg.norm(w)
        if nw == 0:
            return 0.0, True, k
        v = w / nw
        if rq_prev is not None and abs(rq - rq_prev) < tol * max(abs(rq), 1e-30):
            return rq, True, k
        rq_prev = rq
    return rq, False, iters


def hessian_metrics(obj: ParamObjective, probes: int = 10, iters: int = 100,
                    seed: int = 0, tol: float = 1e-4) -> HessianMetrics:
    """Top eigenvalue (power iteration), trace (Hutchinson, Rademacher probes)
    and bottom eigenvalue (power iteration on λ_max·I − H)."""
    if probes < 1:
        raise ValueError("probes must be >= 1")
    n = obj.theta.size
    rng = make_rng(seed, 17)
    lam_max, ok1, it1 = _power(lambda v: hvp(obj, v), n, rng, iters, tol)
    shifted, ok2, it2 = _power(lambda v: lam_max * v - hvp(obj, v), n, rng, iters, tol)
    lam_min = lam_max - shifted
    samples = np.empty(probes)
    for i in range(probes):
        z = rng.choice([-1.0, 1.0], size=n)
        samples[i] = z @ hvp(obj, z)
    stderr = float(samples.std(ddof=1) / np.sqrt(probes)) if probes > 1 else float("nan")
    defined = abs(lam_min) > 1e-12
    return HessianMetrics(
        lambda_max=lam_max,
        trace_estimate=float(samples.mean()),
        trace_stderr=stderr,
        lambda_min=lam_min,
        condition=lam_max / lam_min if defined else None,
        condition_defined=defined,
        converged=ok1 and ok2,
        probes=probes,
        iterations=max(it1, it2),
    )
