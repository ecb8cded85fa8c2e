import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import P_UNIT, SQ3
from gridflock.errors import NoConvergence, NotPositiveDefinite, NotStabilizable, NotSymmetric
from gridflock.linalg import (care_residual, check_symmetric, closed_loop_eigenvalues,
                              is_positive_definite, solve_care, symmetric_eigenvalues)
from gridflock.protocol import A_AGENT, B_AGENT


def test_double_integrator_care_closed_form():
    sol = solve_care(A_AGENT, B_AGENT, np.eye(2))
    np.testing.assert_allclose(sol.P, P_UNIT, atol=1e-10, rtol=0)
    np.testing.assert_allclose(sol.feedback_row, [[1.0, SQ3]], atol=1e-10, rtol=0)
    assert sol.residual_norm <= 1e-10


def test_double_integrator_closed_loop_eigenvalues():
    sol = solve_care(A_AGENT, B_AGENT, np.eye(2))
    ev = np.sort_complex(closed_loop_eigenvalues(A_AGENT, B_AGENT, sol))
    expected = np.sort_complex(np.array([(-SQ3 - 1j) / 2, (-SQ3 + 1j) / 2]))
    np.testing.assert_allclose(ev, expected, atol=1e-12)


@pytest.mark.parametrize("A, B, M, P", [
    ([[0.0]], [[1.0]], [[1.0]], [[1.0]]),
    ([[-1.0]], [[0.0]], [[2.0]], [[1.0]]),
])
def test_scalar_cases(A, B, M, P):
    sol = solve_care(np.array(A), np.array(B), np.array(M))
    np.testing.assert_allclose(sol.P, P, atol=1e-12)


def test_uncontrollable_unstable_mode():
    with pytest.raises(NotStabilizable):
        solve_care(np.array([[1.0]]), np.array([[0.0]]), np.array([[1.0]]))


def test_weight_must_be_positive_definite():
    with pytest.raises(NotPositiveDefinite):
        solve_care(A_AGENT, B_AGENT, np.diag([1.0, -1.0]))
    with pytest.raises(NotPositiveDefinite):
        solve_care(A_AGENT, B_AGENT, np.zeros((2, 2)))


def test_no_convergence_is_reported():
    with pytest.raises(NoConvergence):
        solve_care(A_AGENT, B_AGENT, np.eye(2), tol=0.0, max_newton=1)


@pytest.mark.parametrize("S, expected", [
    (np.eye(2), True),
    (np.zeros((2, 2)), False),
    (P_UNIT, True),
])
def test_is_positive_definite(S, expected):
    assert is_positive_definite(S) is expected


def test_asymmetric_input_rejected():
    with pytest.raises(NotSymmetric):
        is_positive_definite(np.array([[1.0, 2.0], [0.0, 1.0]]))
    with pytest.raises(NotSymmetric):
        symmetric_eigenvalues(np.array([[1.0, 1e-6], [0.0, 1.0]]))
    # roundoff-level asymmetry is absorbed
    check_symmetric(np.array([[1.0, 1.0 + 1e-15], [1.0, 1.0]]))


def test_symmetric_eigenvalues_examples():
    np.testing.assert_allclose(symmetric_eigenvalues(np.diag([3.0, 1.0, 2.0])), [1, 2, 3])
    ring = np.array([[2, -1, 0, -1], [-1, 2, -1, 0], [0, -1, 2, -1], [-1, 0, -1, 2]], float)
    circulant = np.sort(2 - 2 * np.cos(2 * np.pi * np.arange(4) / 4))
    np.testing.assert_allclose(symmetric_eigenvalues(ring), circulant, atol=1e-12)
    np.testing.assert_allclose(symmetric_eigenvalues(ring), [0, 2, 2, 4], atol=1e-12)
    # brute-force characteristic polynomial as a second oracle
    np.testing.assert_allclose(np.sort(np.roots(np.poly(ring)).real), [0, 2, 2, 4], atol=1e-6)
    np.testing.assert_array_equal(symmetric_eigenvalues(np.zeros((3, 3))), [0, 0, 0])


def test_eigen_reconstruction():
    rng = np.random.default_rng(3)
    X = rng.normal(size=(5, 5))
    S = X + X.T
    w, Q = symmetric_eigenvalues(S, return_vectors=True)
    assert np.all(np.diff(w) >= 0)
    assert np.linalg.norm(S - Q @ np.diag(w) @ Q.T) <= 1e-10 * np.linalg.norm(S)


def _random_spd(rng, n):
    X = rng.normal(size=(n, n))
    return X @ X.T + 0.1 * np.eye(n)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), n=st.integers(1, 4), m=st.integers(1, 2))
def test_random_care_properties(seed, n, m):
    rng = np.random.default_rng(seed)
    A = rng.normal(size=(n, n))
    B = rng.normal(size=(n, m))
    M = _random_spd(rng, n)
    sol = solve_care(A, B, M)
    assert sol.residual_norm <= 1e-10 * max(1.0, np.linalg.norm(M))
    assert np.linalg.norm(care_residual(sol.P, A, B, M)) <= 1e-10 * max(1.0, np.linalg.norm(M))
    assert np.min(np.linalg.eigvalsh(sol.P)) > 0
    assert np.max(closed_loop_eigenvalues(A, B, sol).real) < 0


@settings(max_examples=25, deadline=None)
@given(c=st.floats(1e-3, 1e4))
def test_scaled_weight_still_solves(c):
    sol = solve_care(A_AGENT, B_AGENT, c * np.eye(2))
    assert sol.residual_norm <= 1e-10 * max(1.0, c * np.sqrt(2.0))
    assert is_positive_definite(sol.P)
