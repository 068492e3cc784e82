"""SGD with momentum, Adam, step-decay schedule and global-norm clipping.

Parameters and gradients are dicts of arrays keyed by name; updates are
applied in place to the parameter arrays so a cell's live references stay
valid.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping

import numpy as np

__all__ = ["OptimState", "sgd_step", "adam_step", "lr_schedule", "clip_gradients", "make_optimizer"]


@dataclass
class OptimState:
    kind: str = "adam"
    momentum: float = 0.9
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    buffers: dict[str, dict[str, np.ndarray]] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "momentum": self.momentum,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "eps": self.eps,
            "step": self.step,
            "buffers": {k: {n: a.tolist() for n, a in b.items()} for k, b in self.buffers.items()},
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "OptimState":
        state = cls(**{k: d[k] for k in ("kind", "momentum", "beta1", "beta2", "eps", "step")})
        state.buffers = {k: {n: np.array(a, dtype=float) for n, a in b.items()}
                         for k, b in d["buffers"].items()}
        return state


def make_optimizer(kind: str, **hyper) -> OptimState:
    if kind not in ("sgd", "adam"):
        raise ValueError(f"unknown optimizer {kind!r}")
    return OptimState(kind=kind, **hyper)


def _check(params: Mapping[str, np.ndarray], grads: Mapping[str, np.ndarray]):
    if set(params) != set(grads):
        raise ValueError(f"parameter/gradient names differ: {sorted(params)} vs {sorted(grads)}")
    for k in params:
        if np.shape(params[k]) != np.shape(grads[k]):
            raise ValueError(f"shape mismatch for {k}: {np.shape(params[k])} vs {np.shape(grads[k])}")


def _buffer(state: OptimState, slot: str, name: str, like: np.ndarray) -> np.ndarray:
    buf = state.buffers.setdefault(slot, {})
    if name not in buf:
        buf[name] = np.zeros_like(like, dtype=float)
    return buf[name]


def sgd_step(params, grads, state: OptimState, lr: float) -> OptimState:
    """v <- mu v + g;  p <- p - lr v."""
    _check(params, grads)
    mu = state.momentum
    for k, p in params.items():
        v = _buffer(state, "velocity", k, p)
        v *= mu
        v += grads[k]
        p -= lr * v
    state.step += 1
    return state


def adam_step(params, grads, state: OptimState, lr: float) -> OptimState:
    _check(params, grads)
    state.step += 1
    t = state.step
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** t
    c2 = 1.0 - b2 ** t
    for k, p in params.items():
        g = np.asarray(grads[k], dtype=float)
        m = _buffer(state, "m", k, p)
        v = _buffer(state, "v", k, p)
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return state


def step(params, grads, state: OptimState, lr: float) -> OptimState:
    if state.kind == "sgd":
        return sgd_step(params, grads, state, lr)
    return adam_step(params, grads, state, lr)


def lr_schedule(epoch: int, base_lr: float, decay_epochs: Iterable[int] = (), factor: float = 0.1) -> float:
    if not 0.0 < factor <= 1.0:
        raise ValueError(f"decay factor must lie in (0, 1], got {factor}")
    passed = sum(1 for e in decay_epochs if epoch >= e)
    return base_lr * factor ** passed


def clip_gradients(grads: Mapping[str, np.ndarray], max_norm: float) -> dict[str, np.ndarray]:
    if max_norm <= 0:
        raise ValueError("max_norm must be positive")
    norm = float(np.sqrt(sum(np.sum(np.square(g)) for g in grads.values())))
    if norm <= max_norm:
        return dict(grads)
    scale = max_norm / norm
    return {k: g * scale for k, g in grads.items()}
