import gzip

import numpy as np
import pytest

from lipschitz_rnn.autodiff import PARAM_NAMES, batch_gradients
from lipschitz_rnn.cell import LipschitzCell, init_cell
from lipschitz_rnn.data import serialize_idx
from lipschitz_rnn.params import SymSkewParam


def explicit_cell(A, W, U, b, D, **kw):
    """Cell whose materialized A and W equal the given matrices (β=0.5, γ=0 maps M to itself)."""
    A = np.atleast_2d(np.asarray(A, float))
    W = np.atleast_2d(np.asarray(W, float))
    return LipschitzCell(SymSkewParam(A.copy(), 0.5, 0.0), SymSkewParam(W.copy(), 0.5, 0.0),
                         U, b, D, **kw)


def random_cell(seed, N=6, p=3, d=2, **kw):
    kw.setdefault("init_std", 0.5 / np.sqrt(N))
    kw.setdefault("dt", 0.2)
    cell = init_cell(N, p, d, rng=np.random.default_rng(seed), **kw)
    cell.b[:] = np.random.default_rng(seed + 1).normal(0, 0.3, N)
    return cell


def fd_gradients(cell, X, targets, loss, h=1e-5):
    """Central differences of the mean loss over every parameter coordinate."""
    out = {}
    for name in PARAM_NAMES:
        arr = cell.params()[name]
        g = np.zeros_like(arr)
        for idx in np.ndindex(arr.shape):
            old = arr[idx]
            arr[idx] = old + h
            up = batch_gradients(cell, X, targets, loss)[0]
            arr[idx] = old - h
            down = batch_gradients(cell, X, targets, loss)[0]
            arr[idx] = old
            g[idx] = (up - down) / (2 * h)
        out[name] = g
    return out


def max_rel_error(grads, fd):
    return max(np.max(np.abs(grads[k] - fd[k]) / np.maximum(1.0, np.abs(fd[k]))) for k in PARAM_NAMES)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def write_fake_mnist(root, n_train=10_010, n_test=7):
    """Random IDX files laid out like the MNIST download."""
    rng = np.random.default_rng(0)
    root.mkdir(parents=True)
    for stem, n in (("train", n_train), ("t10k", n_test)):
        imgs = rng.integers(0, 256, (n, 28, 28), dtype=np.uint8)
        labels = rng.integers(0, 10, n).astype(np.uint8)
        (root / f"{stem}-images-idx3-ubyte").write_bytes(serialize_idx(imgs))
        (root / f"{stem}-labels-idx1-ubyte.gz").write_bytes(gzip.compress(serialize_idx(labels)))


@pytest.fixture
def fake_mnist(tmp_path, monkeypatch):
    write_fake_mnist(tmp_path / "data" / "mnist", n_test=50)
    monkeypatch.setenv("LIPSCHITZ_RNN_DATA", str(tmp_path / "data"))
    return tmp_path / "data"


def pytest_terminal_summary(terminalreporter):
    lines = [value for rep in terminalreporter.stats.get("passed", []) + terminalreporter.stats.get("failed", [])
             for key, value in getattr(rep, "user_properties", []) if key == "acceptance"]
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
