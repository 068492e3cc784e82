"""The continuous-time Lipschitz recurrent unit and its two discretizations.

Dynamics::

    dh/dt = alpha·A h + tanh(W h + U x + b),    y = D h

with ``A`` and ``W`` built from :class:`~lipschitz_rnn.params.SymSkewParam`.
Every function here accepts either a single state ``h`` of shape ``(N,)`` or a
batch of shape ``(B, N)``; inputs follow the same convention.
"""
from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np

from .params import SymSkewParam, materialize

__all__ = [
    "Scheme",
    "Variant",
    "LipschitzCell",
    "Trajectory",
    "DivergenceError",
    "init_cell",
    "rhs",
    "euler_step",
    "rk2_step",
    "forward",
    "forward_batch",
    "save_checkpoint",
    "load_checkpoint",
    "CHECKPOINT_VERSION",
]

CHECKPOINT_VERSION = 1


class Scheme(str, enum.Enum):
    EULER = "euler"
    RK2 = "rk2"


class Variant(str, enum.Enum):
    LIPSCHITZ = "lipschitz"
    NEURAL_ODE = "neuralode"
    ANTISYMMETRIC = "antisymmetric"


class DivergenceError(FloatingPointError):
    def __init__(self, message: str, step: int | None = None):
        super().__init__(message)
        self.step = step


@dataclass
class LipschitzCell:
    A_param: SymSkewParam
    W_param: SymSkewParam
    U: np.ndarray
    b: np.ndarray
    D: np.ndarray
    alpha: float = 1.0
    dt: float = 0.03
    scheme: Scheme = Scheme.EULER
    variant: Variant = Variant.LIPSCHITZ

    def __post_init__(self):
        self.U = np.array(self.U, dtype=float, ndmin=2)
        self.b = np.array(self.b, dtype=float).reshape(-1)
        self.D = np.array(self.D, dtype=float, ndmin=2)
        self.scheme = Scheme(self.scheme)
        self.variant = Variant(self.variant)
        self.alpha = float(self.alpha)
        self.dt = float(self.dt)
        n = self.A_param.n
        if self.W_param.n != n:
            raise ValueError(f"A is {n}x{n} but W is {self.W_param.n}x{self.W_param.n}")
        if self.U.shape[0] != n or self.b.shape != (n,) or self.D.shape[1] != n:
            raise ValueError(
                f"inconsistent shapes: N={n}, U{self.U.shape}, b{self.b.shape}, D{self.D.shape}"
            )
        if not 0.0 <= self.alpha <= 2.0:
            raise ValueError(f"alpha must lie in [0, 2], got {self.alpha}")
        if self.dt <= 0.0:
            raise ValueError(f"dt must be positive, got {self.dt}")

    @property
    def N(self) -> int:
        return self.A_param.n

    @property
    def p(self) -> int:
        return self.U.shape[1]

    @property
    def d(self) -> int:
        return self.D.shape[0]

    @property
    def effective_alpha(self) -> float:
        # both baselines drop the linear term
        return self.alpha if self.variant is Variant.LIPSCHITZ else 0.0

    @property
    def W_beta(self) -> float:
        return 1.0 if self.variant is Variant.ANTISYMMETRIC else self.W_param.beta

    def A(self) -> np.ndarray:
        return materialize(self.A_param)

    def W(self) -> np.ndarray:
        if self.variant is Variant.ANTISYMMETRIC:
            m = self.W_param.M
            return (m - m.T) - self.W_param.gamma * np.eye(self.N)
        return materialize(self.W_param)

    def params(self) -> dict[str, np.ndarray]:
        """Trainable arrays by name (live references, not copies)."""
        return {
            "M_A": self.A_param.M,
            "M_W": self.W_param.M,
            "U": self.U,
            "b": self.b,
            "D": self.D,
        }

    def copy(self) -> "LipschitzCell":
        return LipschitzCell.from_dict(self.to_dict())

    def to_dict(self) -> dict[str, Any]:
        return {
            "N": self.N,
            "p": self.p,
            "d": self.d,
            "alpha": self.alpha,
            "dt": self.dt,
            "scheme": self.scheme.value,
            "variant": self.variant.value,
            "beta_a": self.A_param.beta,
            "gamma_a": self.A_param.gamma,
            "beta_w": self.W_param.beta,
            "gamma_w": self.W_param.gamma,
            "M_A": self.A_param.M.tolist(),
            "M_W": self.W_param.M.tolist(),
            "U": self.U.tolist(),
            "b": self.b.tolist(),
            "D": self.D.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "LipschitzCell":
        return cls(
            A_param=SymSkewParam(np.array(d["M_A"]), d["beta_a"], d["gamma_a"]),
            W_param=SymSkewParam(np.array(d["M_W"]), d["beta_w"], d["gamma_w"]),
            U=np.array(d["U"]).reshape(d["N"], d["p"]),
            b=np.array(d["b"]),
            D=np.array(d["D"]).reshape(d["d"], d["N"]),
            alpha=d["alpha"],
            dt=d["dt"],
            scheme=d["scheme"],
            variant=d["variant"],
        )


def init_cell(
    N: int,
    p: int,
    d: int,
    *,
    beta: float = 0.75,
    gamma_a: float = 0.001,
    gamma_w: float = 0.001,
    beta_w: float | None = None,
    init_std: float | None = None,
    alpha: float = 1.0,
    dt: float = 0.03,
    scheme: Scheme | str = Scheme.EULER,
    variant: Variant | str = Variant.LIPSCHITZ,
    rng: np.random.Generator | None = None,
) -> LipschitzCell:
    """Random cell.  ``M_A``, ``M_W`` ~ N(0, init_std²) with ``init_std``
    defaulting to 0.1/N; ``U`` and ``D`` uniform in ±1/sqrt(fan_in); ``b`` = 0."""
    rng = np.random.default_rng() if rng is None else rng
    std = 0.1 / N if init_std is None else init_std
    m_a = rng.normal(0.0, std, (N, N))
    m_w = rng.normal(0.0, std, (N, N))
    u = rng.uniform(-1.0, 1.0, (N, p)) / np.sqrt(p)
    dd = rng.uniform(-1.0, 1.0, (d, N)) / np.sqrt(N)
    return LipschitzCell(
        A_param=SymSkewParam(m_a, beta, gamma_a),
        W_param=SymSkewParam(m_w, beta if beta_w is None else beta_w, gamma_w),
        U=u,
        b=np.zeros(N),
        D=dd,
        alpha=alpha,
        dt=dt,
        scheme=scheme,
        variant=variant,
    )


# ---------------------------------------------------------------------------
# single steps
# ---------------------------------------------------------------------------

def _check_input(cell: LipschitzCell, x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != cell.p:
        raise ValueError(f"input has dimension {x.shape[-1]}, cell expects p={cell.p}")
    return x


def _field(h, drive, A, W, alpha):
    # drive = U x + b, already evaluated
    a = np.tanh(h @ W.T + drive)
    if alpha == 0.0:
        return a
    return alpha * (h @ A.T) + a


def rhs(cell: LipschitzCell, h, x) -> np.ndarray:
    x = _check_input(cell, x)
    h = np.asarray(h, dtype=float)
    return _field(h, x @ cell.U.T + cell.b, cell.A(), cell.W(), cell.effective_alpha)


def euler_step(cell: LipschitzCell, h, x) -> np.ndarray:
    h = np.asarray(h, dtype=float)
    return h + cell.dt * rhs(cell, h, x)


def rk2_step(cell: LipschitzCell, h, x) -> np.ndarray:
    """Midpoint step; the same input ``x`` drives both stages."""
    x = _check_input(cell, x)
    h = np.asarray(h, dtype=float)
    A, W, alpha, dt = cell.A(), cell.W(), cell.effective_alpha, cell.dt
    drive = x @ cell.U.T + cell.b
    mid = h + 0.5 * dt * _field(h, drive, A, W, alpha)
    return h + dt * _field(mid, drive, A, W, alpha)


# ---------------------------------------------------------------------------
# unrolled forward pass
# ---------------------------------------------------------------------------

@dataclass
class Trajectory:
    """Everything the backward pass needs from one forward pass.

    ``states[t]`` is h_t for t = 0..T (shape ``(T+1, B, N)``); ``acts[t]`` is
    tanh(z_t).  For RK2, ``mid_states[t]`` is the midpoint state and
    ``mid_acts[t]`` the tanh of its pre-activation.
    """

    scheme: Scheme
    states: np.ndarray
    acts: np.ndarray
    inputs: np.ndarray  # (B, T, p)
    mid_states: np.ndarray | None = None
    mid_acts: np.ndarray | None = None
    batched: bool = True

    @property
    def T(self) -> int:
        return self.acts.shape[0]

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]


def forward_batch(cell: LipschitzCell, X, h0=None) -> tuple[Trajectory, np.ndarray]:
    """Unroll over a batch ``X`` of shape ``(B, T, p)``; returns (trajectory, y)
    with ``y = D h_T`` of shape ``(B, d)``."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 3:
        raise ValueError(f"batch input must have shape (B, T, p), got {X.shape}")
    B, T, p = X.shape
    if p != cell.p:
        raise ValueError(f"input has dimension {p}, cell expects p={cell.p}")
    N = cell.N
    h = np.zeros((B, N)) if h0 is None else np.broadcast_to(np.asarray(h0, float), (B, N)).copy()
    A, W, alpha, dt = cell.A(), cell.W(), cell.effective_alpha, cell.dt
    AT, WT = A.T, W.T
    # U x_t + b for every step at once, time-major
    drive = np.einsum("btp,np->tbn", X, cell.U) + cell.b
    states = np.empty((T + 1, B, N))
    acts = np.empty((T, B, N))
    states[0] = h
    # overflow is reported below as a DivergenceError
    with np.errstate(over="ignore", invalid="ignore"):
        if cell.scheme is Scheme.EULER:
            for t in range(T):
                a = np.tanh(h @ WT + drive[t])
                acts[t] = a
                f = a if alpha == 0.0 else alpha * (h @ AT) + a
                h = h + dt * f
                states[t + 1] = h
            mid_states = mid_acts = None
        else:
            mid_states = np.empty((T, B, N))
            mid_acts = np.empty((T, B, N))
            half = 0.5 * dt
            for t in range(T):
                a = np.tanh(h @ WT + drive[t])
                acts[t] = a
                f = a if alpha == 0.0 else alpha * (h @ AT) + a
                m = h + half * f
                mid_states[t] = m
                a2 = np.tanh(m @ WT + drive[t])
                mid_acts[t] = a2
                f2 = a2 if alpha == 0.0 else alpha * (m @ AT) + a2
                h = h + dt * f2
                states[t + 1] = h
    if not np.all(np.isfinite(states[-1])):
        bad = np.flatnonzero(~np.all(np.isfinite(states.reshape(T + 1, -1)), axis=1))
        step = int(bad[0]) if bad.size else T
        raise DivergenceError(f"hidden state became non-finite at step {step}", step)
    traj = Trajectory(cell.scheme, states, acts, X, mid_states, mid_acts)
    return traj, h @ cell.D.T


def forward(cell: LipschitzCell, sequence, h0=None) -> tuple[Trajectory, np.ndarray]:
    """Single sequence of shape ``(T, p)``; ``h0`` defaults to zero."""
    seq = np.asarray(sequence, dtype=float).reshape(-1, cell.p)
    h = None if h0 is None else np.asarray(h0, float).reshape(1, -1)
    traj, y = forward_batch(cell, seq[None], h)
    traj.batched = False
    return traj, y[0]


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------

def save_checkpoint(path, cell: LipschitzCell, **extra) -> None:
    """JSON checkpoint.  Floats are written with ``repr`` so reals round-trip
    exactly."""
    record = {"format": "lipschitz-rnn-checkpoint", "version": CHECKPOINT_VERSION,
              "cell": cell.to_dict()}
    record.update(extra)
    Path(path).write_text(json.dumps(record))


def load_checkpoint(path) -> tuple[LipschitzCell, dict[str, Any]]:
    record = json.loads(Path(path).read_text())
    if record.get("format") != "lipschitz-rnn-checkpoint":
        raise ValueError(f"{path} is not a lipschitz-rnn checkpoint")
    if record.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {record.get('version')}")
    cell = LipschitzCell.from_dict(record.pop("cell"))
    return cell, record
