import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lipschitz_rnn.autodiff import (
    batch_gradients,
    bptt,
    cross_entropy,
    cross_entropy_batch,
    mse,
)
from lipschitz_rnn.cell import forward, forward_batch
from lipschitz_rnn.stability import certify_cell

from conftest import explicit_cell, fd_gradients, max_rel_error, random_cell


# ---------------------------------------------------------------------------
# losses
# ---------------------------------------------------------------------------

def test_cross_entropy_examples():
    loss, g = cross_entropy(np.zeros(10), 3)
    assert loss == pytest.approx(np.log(10), abs=1e-12)
    loss, g = cross_entropy([50.0, -50.0], 0)
    assert loss == pytest.approx(0.0, abs=1e-40) and np.all(np.isfinite(g))
    assert abs(g[0]) < 1e-40 and abs(g[1]) < 1e-40
    with pytest.raises(ValueError):
        cross_entropy(np.zeros(3), 3)


def test_cross_entropy_gradient_fd():
    z = np.random.default_rng(0).standard_normal(7)
    _, g = cross_entropy(z, 2)
    h = 1e-6
    fd = [(cross_entropy(z + h * e, 2)[0] - cross_entropy(z - h * e, 2)[0]) / (2 * h) for e in np.eye(7)]
    np.testing.assert_allclose(g, fd, atol=1e-7)


def test_mse_examples():
    loss, g = mse([1.0, 2.0], [1.0, 2.0])
    assert loss == 0.0 and np.all(g == 0)
    loss, g = mse([1.0, 0.0], [0.0, 0.0])
    assert loss == 0.5 and g.tolist() == [1.0, 0.0]
    with pytest.raises(ValueError):
        mse([1.0], [1.0, 2.0])
    p, t = np.random.default_rng(1).standard_normal((2, 5))
    h = 1e-6
    fd = [(mse(p + h * e, t)[0] - mse(p - h * e, t)[0]) / (2 * h) for e in np.eye(5)]
    np.testing.assert_allclose(mse(p, t)[1], fd, atol=1e-8)


def test_cross_entropy_batch_is_mean():
    Z = np.random.default_rng(2).standard_normal((4, 3))
    y = np.array([0, 2, 1, 1])
    loss, G = cross_entropy_batch(Z, y)
    singles = [cross_entropy(Z[i], y[i]) for i in range(4)]
    assert loss == pytest.approx(np.mean([s[0] for s in singles]))
    np.testing.assert_allclose(G, np.array([s[1] for s in singles]) / 4)


# ---------------------------------------------------------------------------
# bptt
# ---------------------------------------------------------------------------

def test_bptt_empty_sequence_and_zero_dy():
    cell = random_cell(0)
    h0 = np.linspace(-1, 1, 6)
    traj, _ = forward(cell, np.zeros((0, 3)), h0)
    dY = np.array([0.5, -2.0])
    g = bptt(cell, traj, dY)
    np.testing.assert_allclose(g.D, np.outer(dY, h0))
    for k in ("M_A", "M_W", "U", "b"):
        assert np.all(g.as_dict()[k] == 0)
    traj, _ = forward(cell, np.ones((4, 3)))
    assert all(np.all(v == 0) for v in bptt(cell, traj, np.zeros(2)).as_dict().values())


@pytest.mark.parametrize("scheme", ["euler", "rk2"])
@pytest.mark.parametrize("variant", ["lipschitz", "neuralode", "antisymmetric"])
def test_bptt_matches_finite_differences(scheme, variant):
    cell = random_cell(3, N=8, p=3, d=2, scheme=scheme, variant=variant, alpha=0.8, beta_w=0.6)
    X = np.random.default_rng(4).standard_normal((2, 5, 3))
    labels = np.array([1, 0])
    _, grads = batch_gradients(cell, X, labels, "ce")
    fd = fd_gradients(cell, X, labels, "ce")
    assert max_rel_error(grads.as_dict(), fd) <= 1e-5


def test_bptt_mse_and_input_adjoint():
    cell = random_cell(5, scheme="rk2")
    X = np.random.default_rng(6).standard_normal((1, 4, 3))
    target = np.array([[0.3, -0.1]])
    _, g = batch_gradients(cell, X, target, "mse")
    fd = fd_gradients(cell, X, target, "mse")
    assert max_rel_error(g.as_dict(), fd) <= 1e-5
    h = 1e-6
    fdx = np.zeros_like(X)
    for idx in np.ndindex(X.shape):
        E = np.zeros_like(X)
        E[idx] = h
        fdx[idx] = (batch_gradients(cell, X + E, target, "mse")[0]
                    - batch_gradients(cell, X - E, target, "mse")[0]) / (2 * h)
    np.testing.assert_allclose(g.X, fdx, atol=1e-8)


@settings(max_examples=15, deadline=None)
@given(st.integers(0, 2**31), st.sampled_from(["euler", "rk2"]))
def test_bptt_linear_in_dy(seed, scheme):
    rng = np.random.default_rng(seed)
    cell = random_cell(seed % 1000, scheme=scheme)
    traj, _ = forward_batch(cell, rng.standard_normal((3, 4, 3)))
    d1, d2 = rng.standard_normal((2, 3, 2))
    a, b = rng.standard_normal(2)
    lhs = bptt(cell, traj, a * d1 + b * d2).flat()
    rhs = a * bptt(cell, traj, d1).flat() + b * bptt(cell, traj, d2).flat()
    np.testing.assert_allclose(lhs, rhs, atol=1e-10 * (1 + np.abs(lhs).max()))


def test_batch_gradients_composition():
    cell = random_cell(7)
    rng = np.random.default_rng(8)
    X = rng.standard_normal((2, 5, 3))
    y = np.array([1, 0])
    one = batch_gradients(cell, X[:1], y[:1])
    dup = batch_gradients(cell, np.concatenate([X[:1], X[:1]]), np.array([1, 1]))
    assert dup[0] == pytest.approx(one[0], rel=1e-14)
    np.testing.assert_allclose(dup[1].flat(), one[1].flat(), rtol=1e-12, atol=1e-15)
    two = batch_gradients(cell, X, y)
    other = batch_gradients(cell, X[1:], y[1:])
    assert two[0] == pytest.approx(0.5 * (one[0] + other[0]), rel=1e-14)
    np.testing.assert_allclose(two[1].flat(), 0.5 * (one[1].flat() + other[1].flat()), atol=1e-14)
    # single-sequence bptt agrees with the batch of one
    traj, Y = forward(cell, X[0])
    _, dY = cross_entropy(Y, 1)
    np.testing.assert_allclose(bptt(cell, traj, dY).flat(), one[1].flat(), atol=1e-15)
    with pytest.raises(ValueError):
        batch_gradients(cell, np.zeros((0, 5, 3)), np.zeros(0, int))


def test_gradients_do_not_explode_for_certified_cell():
    N = 4
    rng = np.random.default_rng(9)
    W = 0.3 * rng.standard_normal((N, N)) / np.sqrt(N)
    cell = explicit_cell(-1.0 * np.eye(N), W, rng.standard_normal((N, 1)), np.zeros(N), np.eye(N), dt=0.1)
    assert certify_cell(cell).cond_a_holds
    norms = []
    for T in (10, 100, 1000):
        x = rng.standard_normal((T, 1))
        traj, _ = forward(cell, x)
        J = np.array([bptt(cell, traj, e).h0 for e in np.eye(N)])
        norms.append(np.linalg.norm(J, 2))
    assert norms[1] <= norms[0] * (1 + 1e-9) and norms[2] <= norms[1] * (1 + 1e-9)
