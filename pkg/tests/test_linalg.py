import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from lipschitz_rnn.linalg import (
    EigenConvergenceError,
    LinalgError,
    NotSymmetricError,
    format_matrix,
    general_eigs,
    hessenberg,
    matvec,
    parse_matrix,
    singular_values,
    sym_eigs,
)


# ---------------------------------------------------------------------------
# independent oracles
# ---------------------------------------------------------------------------

def count_below(S, x):
    """Number of eigenvalues of symmetric S below x, via Sylvester inertia:
    the signs of the leading-principal-minor ratios (pivots of S - xI)."""
    a = np.array(S, dtype=float) - x * np.eye(len(S))
    n = len(a)
    neg = 0
    for k in range(n):
        piv = a[k, k]
        if piv == 0.0:
            piv = 1e-300
        if piv < 0:
            neg += 1
        if k + 1 < n:
            col = a[k + 1:, k] / piv
            a[k + 1:, k + 1:] -= np.outer(col, a[k, k + 1:])
    return neg


def bisection_eigs(S, tol=1e-13):
    n = len(S)
    r = np.abs(S).sum(axis=1).max() + 1.0
    out = []
    for k in range(n):
        lo, hi = -r, r
        while hi - lo > tol * r:
            mid = 0.5 * (lo + hi)
            if count_below(S, mid) > k:
                hi = mid
            else:
                lo = mid
        out.append(0.5 * (lo + hi))
    return np.array(out)


def matvec_loop(A, x):
    # column-major loop order, independent of the row-sum implementation
    out = [0.0] * len(A)
    for j in range(len(x)):
        for i in range(len(A)):
            out[i] += A[i][j] * x[j]
    return out


def random_symmetric(rng, n):
    a = rng.standard_normal((n, n))
    return a + a.T


# ---------------------------------------------------------------------------
# matvec
# ---------------------------------------------------------------------------

def test_matvec_examples():
    np.testing.assert_array_equal(matvec(np.eye(3), [1, 2, 3]), [1, 2, 3])
    np.testing.assert_array_equal(matvec(np.zeros((2, 2)), [5, -7]), [0, 0])
    A = [[1.0, 2.0], [3.0, 4.0]]
    assert matvec_loop(A, [1.0, 1.0]) == [3.0, 7.0]
    np.testing.assert_array_equal(matvec(A, [1, 1]), [3, 7])


def test_matvec_shape_error_names_both_shapes():
    with pytest.raises(LinalgError, match=r"\(2, 3\).*\(2,\)"):
        matvec(np.ones((2, 3)), np.ones(2))


def test_rejects_non_finite():
    with pytest.raises(LinalgError):
        sym_eigs([[1.0, np.nan], [np.nan, 1.0]])


@given(arrays(np.float64, (4, 3), elements=st.floats(-1e3, 1e3)),
       arrays(np.float64, 3, elements=st.floats(-1e3, 1e3)))
def test_matvec_matches_loop(A, x):
    np.testing.assert_allclose(matvec(A, x), matvec_loop(A.tolist(), x.tolist()), rtol=1e-12, atol=1e-9)


# ---------------------------------------------------------------------------
# sym_eigs
# ---------------------------------------------------------------------------

def test_sym_eigs_examples():
    w, _ = sym_eigs(np.diag([3.0, 1.0, 2.0]))
    np.testing.assert_allclose(w, [1, 2, 3])
    w, _ = sym_eigs([[0.0, 1.0], [1.0, 0.0]])
    np.testing.assert_allclose(w, [-1, 1], atol=1e-15)
    w, V = sym_eigs([[4.0]])
    assert w.tolist() == [4.0] and V.tolist() == [[1.0]]


def test_sym_eigs_matches_bisection_oracle():
    rng = np.random.default_rng(8)
    S = random_symmetric(rng, 8)
    w, _ = sym_eigs(S)
    np.testing.assert_allclose(w, bisection_eigs(S), atol=1e-10)


@pytest.mark.parametrize("n", [1, 2, 5, 16, 40])
def test_sym_eigs_residual_and_orthonormality(n):
    rng = np.random.default_rng(n)
    S = random_symmetric(rng, n)
    w, V = sym_eigs(S)
    assert np.all(np.diff(w) >= 0)
    resid = np.linalg.norm(S @ V - V * w, axis=0)
    assert resid.max() <= 1e-8 * np.linalg.norm(S)
    assert np.abs(V.T @ V - np.eye(n)).max() <= 1e-10


def test_sym_eigs_rejects_asymmetric():
    with pytest.raises(NotSymmetricError, match="general_eigs"):
        sym_eigs([[1.0, 2.0], [0.0, 1.0]])
    with pytest.raises(LinalgError):
        sym_eigs(np.ones((2, 3)))


def test_sym_eigs_tolerates_rounding_asymmetry():
    S = np.array([[1.0, 2.0], [2.0 + 1e-12, 1.0]])
    w, _ = sym_eigs(S)
    np.testing.assert_allclose(w, [-1, 3], atol=1e-11)


# ---------------------------------------------------------------------------
# general_eigs
# ---------------------------------------------------------------------------

def test_general_eigs_examples():
    ev = general_eigs([[0.0, 1.0], [-1.0, 0.0]])
    np.testing.assert_allclose(ev, [1j, -1j], atol=1e-15)
    np.testing.assert_allclose(general_eigs([[0.0, 1.0], [0.0, 0.0]]), [0, 0], atol=1e-15)
    assert general_eigs([[-2.5]]).tolist() == [-2.5]


def test_general_eigs_symmetric_agrees_with_jacobi():
    rng = np.random.default_rng(3)
    S = random_symmetric(rng, 20)
    ev = general_eigs(S)
    assert np.abs(ev.imag).max() <= 1e-8
    np.testing.assert_allclose(np.sort(ev.real), sym_eigs(S)[0], atol=1e-8)


@pytest.mark.parametrize("n", [3, 10, 30])
def test_general_eigs_recovers_similarity_spectrum(n):
    rng = np.random.default_rng(100 + n)
    d = rng.uniform(-3, 3, n)
    P = np.eye(n) + 0.3 * rng.standard_normal((n, n)) / np.sqrt(n)
    A = P @ np.diag(d) @ np.linalg.inv(P)
    ev = general_eigs(A)
    np.testing.assert_allclose(ev.real, np.sort(d)[::-1], atol=1e-6)
    assert np.abs(ev.imag).max() <= 1e-6


def test_general_eigs_order_and_conjugate_pairs():
    rng = np.random.default_rng(11)
    A = rng.standard_normal((25, 25))
    ev = general_eigs(A)
    assert np.all(np.diff(ev.real) <= 1e-12)
    # conjugate closure
    np.testing.assert_allclose(np.sort_complex(ev), np.sort_complex(ev.conj()), atol=1e-9)
    assert abs(ev.sum().real - np.trace(A)) <= 1e-8 * (1 + abs(np.trace(A)))
    # ties in the real part: larger imaginary part first
    for i in range(len(ev) - 1):
        if ev[i].real == ev[i + 1].real:
            assert ev[i].imag >= ev[i + 1].imag


def test_general_eigs_against_numpy():
    rng = np.random.default_rng(12)
    A = rng.standard_normal((40, 40))
    ref = np.linalg.eigvals(A)
    ref = ref[np.lexsort((-ref.imag, -ref.real))]
    np.testing.assert_allclose(general_eigs(A), ref, atol=1e-8)


def test_hessenberg_is_similar_and_upper_hessenberg():
    rng = np.random.default_rng(5)
    A = rng.standard_normal((7, 7))
    H = hessenberg(A)
    assert np.abs(np.tril(H, -2)).max() == 0.0
    assert abs(np.trace(H) - np.trace(A)) < 1e-12
    np.testing.assert_allclose(np.linalg.norm(H), np.linalg.norm(A), rtol=1e-12)


def test_general_eigs_non_convergence_reports_partial():
    rng = np.random.default_rng(6)
    A = rng.standard_normal((12, 12))
    with pytest.raises(EigenConvergenceError) as info:
        general_eigs(A, max_sweeps_per_dim=0)
    assert info.value.converged is False
    assert len(info.value.partial) < 12


@settings(max_examples=60, deadline=None)
@given(st.integers(1, 12), st.integers(0, 2**32 - 1))
def test_real_parts_inside_symmetric_part_range(n, seed):
    A = np.random.default_rng(seed).standard_normal((n, n)) * 3
    w, _ = sym_eigs(0.5 * (A + A.T))
    re = general_eigs(A).real
    assert np.all(re >= w[0] - 1e-8) and np.all(re <= w[-1] + 1e-8)


# ---------------------------------------------------------------------------
# singular values
# ---------------------------------------------------------------------------

def test_singular_values_examples():
    np.testing.assert_allclose(singular_values(np.eye(4)), np.ones(4))
    np.testing.assert_allclose(singular_values(np.diag([-2.0, 3.0])), [3, 2])


def test_singular_values_rayleigh_oracle():
    rng = np.random.default_rng(64)
    A = rng.standard_normal((6, 4))
    s = singular_values(A)
    x = rng.standard_normal((4, 100_000))
    x /= np.linalg.norm(x, axis=0)
    ratios = np.linalg.norm(A @ x, axis=0)
    # sampled extremes bracket inside the true ones, and get close
    assert ratios.max() <= s[0] + 1e-12 and ratios.min() >= s[-1] - 1e-12
    assert s[0] - ratios.max() < 0.02 * s[0]
    assert ratios.min() - s[-1] < 0.05 * s[0]


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 7), st.integers(1, 7), st.integers(0, 2**32 - 1))
def test_singular_values_transpose_invariant(m, n, seed):
    A = np.random.default_rng(seed).standard_normal((m, n))
    s = singular_values(A)
    assert s.shape == (min(m, n),)
    assert np.all(np.diff(s) <= 0) and np.all(s >= 0)
    np.testing.assert_allclose(s, singular_values(A.T), atol=1e-10)


# ---------------------------------------------------------------------------
# text format
# ---------------------------------------------------------------------------

@given(arrays(np.float64, st.tuples(st.integers(1, 4), st.integers(1, 4)),
              elements=st.floats(allow_nan=False, allow_infinity=False)))
def test_matrix_text_round_trip(a):
    text = format_matrix(a)
    assert text.splitlines()[0] == f"{a.shape[0]} {a.shape[1]}"
    np.testing.assert_array_equal(parse_matrix(text), a)


def test_parse_matrix_errors():
    with pytest.raises(LinalgError):
        parse_matrix("")
    with pytest.raises(LinalgError):
        parse_matrix("2 2\n1 2\n")
    with pytest.raises(LinalgError):
        parse_matrix("1 2\n1 2 3\n")
