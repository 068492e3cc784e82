"""Datasets: IDX parsing, MNIST sequence views, noise padding, synthetic tasks."""
from __future__ import annotations

import csv
import gzip
import importlib.util
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence

import numpy as np

__all__ = [
    "IDXError",
    "DataError",
    "LabeledSequenceSet",
    "PermutationSpec",
    "parse_idx",
    "serialize_idx",
    "read_idx",
    "sequence_view",
    "noise_pad",
    "pendulum_rollout",
    "pendulum_trajectories",
    "adding_task",
    "load_mnist",
    "load_mnist_subset",
    "mnist_sequences",
    "iterate_batches",
    "make_rng",
    "DEFAULT_PERMUTATION_SEED",
    "DATA_ENV",
]

DEFAULT_PERMUTATION_SEED = 92916
DATA_ENV = "LIPSCHITZ_RNN_DATA"

_IDX_LABELS = 0x00000801
_IDX_IMAGES = 0x00000803


class DataError(RuntimeError):
    pass


class IDXError(DataError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (byte offset {offset})")
        self.offset = offset


def make_rng(seed: int, stream: int = 0, *keys: int) -> np.random.Generator:
    """Counter-based generator keyed by (master seed, stream id, extra keys)."""
    key = [int(seed), int(stream)] + [int(k) for k in keys]
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(key)))


@dataclass
class LabeledSequenceSet:
    sequences: np.ndarray  # (n, T, p)
    labels: np.ndarray  # (n,) class indices or (n, d) targets
    split: str = "train"

    def __post_init__(self):
        self.sequences = np.asarray(self.sequences, dtype=float)
        self.labels = np.asarray(self.labels)
        if self.sequences.ndim != 3:
            raise ValueError(f"sequences must have shape (n, T, p), got {self.sequences.shape}")
        if self.labels.shape[0] != self.sequences.shape[0]:
            raise ValueError("one label per sequence required")

    @property
    def p(self) -> int:
        return self.sequences.shape[2]

    @property
    def T(self) -> int:
        return self.sequences.shape[1]

    def __len__(self) -> int:
        return self.sequences.shape[0]

    def subset(self, idx, split: str | None = None) -> "LabeledSequenceSet":
        return LabeledSequenceSet(self.sequences[idx], self.labels[idx], split or self.split)

    def to_csv(self, path) -> None:
        """One row per sequence: flattened inputs then the label(s)."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            lab = self.labels.reshape(len(self), -1)
            w.writerow([f"x{t}_{j}" for t in range(self.T) for j in range(self.p)]
                       + [f"y{k}" for k in range(lab.shape[1])])
            for s, y in zip(self.sequences, lab):
                w.writerow([repr(float(v)) for v in s.ravel()] + [repr(v.item()) for v in y])


@dataclass(frozen=True)
class PermutationSpec:
    seed: int
    indices: np.ndarray = field(compare=False)

    def __post_init__(self):
        idx = np.asarray(self.indices)
        if idx.ndim != 1 or not np.array_equal(np.sort(idx), np.arange(idx.size)):
            raise ValueError("indices must be a permutation of 0..T-1")

    @classmethod
    def from_seed(cls, T: int, seed: int = DEFAULT_PERMUTATION_SEED) -> "PermutationSpec":
        return cls(seed, make_rng(seed, 7).permutation(T))

    @classmethod
    def identity(cls, T: int) -> "PermutationSpec":
        return cls(-1, np.arange(T))

    def inverse(self) -> np.ndarray:
        inv = np.empty_like(self.indices)
        inv[self.indices] = np.arange(self.indices.size)
        return inv


# ---------------------------------------------------------------------------
# IDX
# ---------------------------------------------------------------------------

def parse_idx(data: bytes, scale: bool = True) -> np.ndarray:
    """Decode an IDX byte string (unsigned-byte payloads only).

    Image files (magic 0x803) come back as floats scaled to [0, 1] unless
    ``scale`` is false; label files (0x801) as ``int64``.
    """
    if len(data) < 4:
        raise IDXError("truncated header", len(data))
    (magic,) = struct.unpack(">I", data[:4])
    if magic == _IDX_LABELS:
        ndim = 1
    elif magic == _IDX_IMAGES:
        ndim = 3
    else:
        raise IDXError(f"bad magic 0x{magic:08x}", 0)
    end = 4 + 4 * ndim
    if len(data) < end:
        raise IDXError("truncated dimension block", len(data))
    dims = struct.unpack(f">{ndim}I", data[4:end])
    count = int(np.prod(dims))
    if len(data) < end + count:
        raise IDXError(f"payload needs {count} bytes, found {len(data) - end}", len(data))
    arr = np.frombuffer(data, dtype=np.uint8, count=count, offset=end).reshape(dims)
    if magic == _IDX_LABELS:
        return arr.astype(np.int64)
    return arr / 255.0 if scale else arr.copy()


def serialize_idx(arr) -> bytes:
    """Inverse of :func:`parse_idx` for uint8 payloads (1-D labels, 3-D images)."""
    a = np.asarray(arr)
    if a.dtype.kind == "f":
        a = np.rint(a * 255.0)
    a = a.astype(np.uint8)
    magic = {1: _IDX_LABELS, 3: _IDX_IMAGES}.get(a.ndim)
    if magic is None:
        raise ValueError("IDX serialization supports 1-D labels or 3-D images")
    return struct.pack(f">I{a.ndim}I", magic, *a.shape) + a.tobytes()


def read_idx(path) -> np.ndarray:
    path = Path(path)
    raw = gzip.decompress(path.read_bytes()) if path.suffix == ".gz" else path.read_bytes()
    return parse_idx(raw)


def _find(directory: Path, stem: str) -> Path:
    for name in (stem, stem + ".gz", stem.replace("-idx", ".idx"), stem.replace("-idx", ".idx") + ".gz"):
        if (directory / name).exists():
            return directory / name
    raise DataError(f"{stem}[.gz] not found in {directory}")


def mnist_dir(path=None) -> Path:
    if path is not None:
        return Path(path)
    return Path(os.environ.get(DATA_ENV, "data")) / "mnist"


def load_mnist(path=None) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    """Train/val/test splits from the four standard IDX files.

    Validation is the last 10000 images of the training file.
    """
    d = mnist_dir(path)
    if not d.is_dir():
        raise DataError(f"MNIST directory {d} does not exist (set ${DATA_ENV})")
    xtr = read_idx(_find(d, "train-images-idx3-ubyte"))
    ytr = read_idx(_find(d, "train-labels-idx1-ubyte"))
    xte = read_idx(_find(d, "t10k-images-idx3-ubyte"))
    yte = read_idx(_find(d, "t10k-labels-idx1-ubyte"))
    return {
        "train": (xtr[:-10000], ytr[:-10000]),
        "val": (xtr[-10000:], ytr[-10000:]),
        "train_full": (xtr, ytr),
        "test": (xte, yte),
    }


def load_mnist_subset(n_test: int = 1000, seed: int = 0) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    """Fallback corpus: the 5000-image MNIST sample bundled with ``mlxtend``.

    Shuffled with ``seed`` and split into train / test.
    """
    spec = importlib.util.find_spec("mlxtend")
    if spec is None or not spec.submodule_search_locations:
        raise DataError("mlxtend is not installed; no bundled MNIST subset available")
    path = Path(list(spec.submodule_search_locations)[0]) / "data" / "data" / "mnist_5k.csv.gz"
    if not path.exists():
        raise DataError(f"{path} missing")
    raw = np.loadtxt(gzip.open(path), delimiter=",")
    images = raw[:, :-1].reshape(-1, 28, 28) / 255.0
    labels = raw[:, -1].astype(np.int64)
    order = make_rng(seed, 11).permutation(len(labels))
    images, labels = images[order], labels[order]
    return {
        "train": (images[n_test:], labels[n_test:]),
        "test": (images[:n_test], labels[:n_test]),
    }


# ---------------------------------------------------------------------------
# sequence views and padding
# ---------------------------------------------------------------------------

_MODES = {"pixel": 1, "row8": 8, "row28": 28}


def sequence_view(image, mode: str = "pixel", perm: PermutationSpec | None = None) -> np.ndarray:
    """Scanline-order sequence of shape ``(T, p)``; works on a stack of images too."""
    if mode not in _MODES:
        raise ValueError(f"invalid mode {mode!r}; expected one of {sorted(_MODES)}")
    img = np.asarray(image, dtype=float)
    if img.shape[-2:] != (28, 28):
        raise ValueError(f"expected 28x28 images, got {img.shape}")
    p = _MODES[mode]
    seq = img.reshape(img.shape[:-2] + (784 // p, p))
    if perm is not None:
        if perm.indices.size != seq.shape[-2]:
            raise ValueError("permutation length does not match sequence length")
        seq = seq[..., perm.indices, :]
    return seq


def mnist_sequences(images, labels, mode: str, perm: PermutationSpec | None = None,
                    split: str = "train") -> LabeledSequenceSet:
    return LabeledSequenceSet(sequence_view(images, mode, perm), labels, split)


def noise_pad(sequence, T_total: int, seed: int) -> np.ndarray:
    seq = np.asarray(sequence, dtype=float)
    if T_total < seq.shape[0]:
        raise ValueError(f"T_total={T_total} shorter than the sequence ({seq.shape[0]})")
    noise = make_rng(seed, 3).standard_normal((T_total - seq.shape[0],) + seq.shape[1:])
    return np.concatenate([seq, noise], axis=0)


# ---------------------------------------------------------------------------
# synthetic tasks
# ---------------------------------------------------------------------------

def _pendulum_field(s: np.ndarray) -> np.ndarray:
    return np.stack([s[..., 1], -np.sin(s[..., 0])], axis=-1)


def pendulum_rollout(theta0, omega0, dt: float, steps: int) -> np.ndarray:
    """RK2 (midpoint) solution of θ'' = -sin θ; shape ``(steps + 1, 2)`` or batched."""
    s = np.stack(np.broadcast_arrays(np.asarray(theta0, float), np.asarray(omega0, float)), axis=-1)
    out = np.empty((steps + 1,) + s.shape)
    out[0] = s
    for k in range(steps):
        mid = s + 0.5 * dt * _pendulum_field(s)
        s = s + dt * _pendulum_field(mid)
        out[k + 1] = s
    return out


def pendulum_trajectories(n: int, dt: float = 0.1, steps: int = 50, seed: int = 0,
                          split: str = "train") -> LabeledSequenceSet:
    """Next-state prediction: observe ``steps`` states, predict the following one."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = make_rng(seed, 5)
    init = rng.uniform(-np.pi / 2, np.pi / 2, (n, 2))
    roll = pendulum_rollout(init[:, 0], init[:, 1], dt, steps)  # (steps+1, n, 2)
    seqs = np.transpose(roll[:-1], (1, 0, 2))
    return LabeledSequenceSet(seqs, roll[-1], split)


def adding_task(n: int, T: int, seed: int = 0, split: str = "train") -> LabeledSequenceSet:
    """Value channel U[0,1]; marker channel has one 1 in each half of the sequence;
    the target is the sum of the two marked values."""
    if T < 2:
        raise ValueError("adding task needs T >= 2")
    rng = make_rng(seed, 9)
    values = rng.uniform(0.0, 1.0, (n, T))
    half = T // 2
    first = rng.integers(0, half, n)
    second = rng.integers(half, T, n)
    markers = np.zeros((n, T))
    markers[np.arange(n), first] = 1.0
    markers[np.arange(n), second] = 1.0
    target = values[np.arange(n), first] + values[np.arange(n), second]
    return LabeledSequenceSet(np.stack([values, markers], axis=-1), target[:, None], split)


def iterate_batches(data: LabeledSequenceSet, batch_size: int,
                    rng: np.random.Generator | None = None) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    """Mini-batches in shuffled (``rng`` given) or natural order; last batch may be short."""
    n = len(data)
    order = rng.permutation(n) if rng is not None else np.arange(n)
    for start in range(0, n, batch_size):
        idx = order[start:start + batch_size]
        yield data.sequences[idx], data.labels[idx]
