import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lipschitz_rnn.linalg import general_eigs, sym_eigs
from lipschitz_rnn.params import (
    SymSkewParam,
    grad_to_M,
    materialize,
    printed_interval,
    spectrum_interval,
)

betas = st.floats(0.5, 1.0)
gammas = st.floats(0.0, 2.0)
seeds = st.integers(0, 2**32 - 1)


def test_materialize_examples():
    np.testing.assert_array_equal(materialize(SymSkewParam(np.eye(2), 1.0, 0.5)), -0.5 * np.eye(2))
    np.testing.assert_allclose(materialize(SymSkewParam(np.eye(2), 0.5, 0.1)), 0.9 * np.eye(2))
    S = materialize(SymSkewParam([[0.0, 1.0], [0.0, 0.0]], 1.0, 0.0))
    np.testing.assert_array_equal(S, [[0, 1], [-1, 0]])


def test_materialize_matches_elementwise_formula():
    rng = np.random.default_rng(0)
    M = rng.standard_normal((5, 5))
    beta, gamma = 0.8, 0.02
    S = materialize(SymSkewParam(M, beta, gamma))
    for i in range(5):
        for j in range(5):
            want = (1 - beta) * (M[i, j] + M[j, i]) + beta * (M[i, j] - M[j, i]) - gamma * (i == j)
            assert S[i, j] == pytest.approx(want, abs=1e-15)


def test_param_validation():
    with pytest.raises(ValueError):
        SymSkewParam(np.eye(2), 1.5)
    with pytest.raises(ValueError):
        SymSkewParam(np.eye(2), 0.7, -0.1)
    with pytest.raises(ValueError):
        SymSkewParam(np.ones((2, 3)))
    with pytest.warns(UserWarning, match="recommended"):
        SymSkewParam(np.eye(2), 0.3)


def test_interval_examples():
    iv = spectrum_interval(SymSkewParam(np.random.default_rng(1).standard_normal((4, 4)), 1.0, 0.3))
    assert iv.lo == pytest.approx(-0.3, abs=1e-15) and iv.hi == pytest.approx(-0.3, abs=1e-15)
    iv = spectrum_interval(SymSkewParam(np.eye(3), 0.5, 0.1))
    assert (iv.lo, iv.hi) == pytest.approx((0.9, 0.9))


def test_corrected_interval_is_twice_the_printed_width():
    rng = np.random.default_rng(2)
    p = SymSkewParam(rng.standard_normal((6, 6)), 0.75, 0.01)
    fixed, printed = spectrum_interval(p), printed_interval(p)
    assert fixed.width == pytest.approx(2 * printed.width)


def test_printed_interval_misses_real_parts():
    # with the printed constant the extreme real parts fall outside
    p = SymSkewParam(np.eye(2), 0.5, 0.0)
    printed = printed_interval(p)
    re = general_eigs(materialize(p)).real
    assert not printed.contains(re.max())
    assert spectrum_interval(p).contains(re.max())


@settings(max_examples=100, deadline=None)
@given(seeds, betas, gammas)
def test_interval_contains_spectrum(seed, beta, gamma):
    M = np.random.default_rng(seed).standard_normal((16, 16))
    p = SymSkewParam(M, beta, gamma)
    S = materialize(p)
    iv = spectrum_interval(p)
    re = general_eigs(S).real
    assert np.all(re >= iv.lo - 1e-8) and np.all(re <= iv.hi + 1e-8)
    sym = sym_eigs(0.5 * (S + S.T))[0]
    assert sym[0] >= iv.lo - 1e-8 and sym[-1] <= iv.hi + 1e-8


@settings(max_examples=30, deadline=None)
@given(seeds, gammas)
def test_skew_limit(seed, gamma):
    M = np.random.default_rng(seed).standard_normal((8, 8))
    re = general_eigs(materialize(SymSkewParam(M, 1.0, gamma))).real
    np.testing.assert_allclose(re, -gamma, atol=1e-10)


@settings(max_examples=30, deadline=None)
@given(seeds, betas, gammas, st.floats(0.0, 1.0))
def test_gamma_shift_and_width(seed, beta, gamma, delta):
    M = np.random.default_rng(seed).standard_normal((6, 6))
    a = spectrum_interval(SymSkewParam(M, beta, gamma))
    b = spectrum_interval(SymSkewParam(M, beta, gamma + delta))
    assert b.lo == pytest.approx(a.lo - delta, abs=1e-12)
    assert b.hi == pytest.approx(a.hi - delta, abs=1e-12)
    w = sym_eigs(0.5 * (M + M.T))[0]
    assert a.width == pytest.approx(2 * (1 - beta) * (w[-1] - w[0]), abs=1e-10)


@settings(max_examples=20, deadline=None)
@given(seeds, betas, gammas)
def test_symmetric_part_identity(seed, beta, gamma):
    M = np.random.default_rng(seed).standard_normal((5, 5))
    S = materialize(SymSkewParam(M, beta, gamma))
    np.testing.assert_allclose(S + S.T, 2 * ((1 - beta) * (M + M.T) - gamma * np.eye(5)), atol=1e-12)


def test_grad_to_M_examples():
    np.testing.assert_array_equal(grad_to_M(np.eye(3), 1.0), np.zeros((3, 3)))
    G = np.random.default_rng(4).standard_normal((3, 3))
    np.testing.assert_allclose(grad_to_M(G, 0.5), G, atol=1e-15)
    with pytest.raises(ValueError):
        grad_to_M(np.ones((2, 3)), 0.5)


@pytest.mark.parametrize("seed", range(20))
def test_grad_to_M_finite_differences(seed):
    rng = np.random.default_rng(seed)
    n, beta, gamma = 4, 0.8, 0.05
    M = rng.standard_normal((n, n))
    R = rng.standard_normal((n, n))

    def probe(m):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            return float(np.sum(R * materialize(SymSkewParam(m, beta, gamma))))

    G = grad_to_M(R, beta)
    h = 1e-6
    fd = np.zeros_like(M)
    for i in range(n):
        for j in range(n):
            E = np.zeros_like(M)
            E[i, j] = h
            fd[i, j] = (probe(M + E) - probe(M - E)) / (2 * h)
    assert np.abs(fd - G).max() / np.abs(G).max() <= 1e-6
