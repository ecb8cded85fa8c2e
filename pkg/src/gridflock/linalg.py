"""Small dense linear algebra and the continuous algebraic Riccati solver.

Matrices are plain ``numpy.ndarray`` objects; systems here are tiny
(2x2 gain design, Laplacians of a handful of agents), so every routine
favours robustness over asymptotic cost.
"""
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import NoConvergence, NotPositiveDefinite, NotStabilizable, NotSymmetric

SYMMETRY_RTOL = 1e-12
CARE_RTOL = 1e-10


def _as_matrix(a, name="matrix"):
    m = np.atleast_2d(np.asarray(a, dtype=float))
    if m.ndim != 2 or m.size == 0:
        raise ValueError(f"{name} must be a non-empty 2-D array")
    return m


def check_symmetric(S, tol=SYMMETRY_RTOL):
    """Raise :class:`NotSymmetric` unless ``S`` is square and symmetric to ``tol`` (relative)."""
    S = np.asarray(S)
    if S.ndim != 2 or S.shape[0] != S.shape[1]:
        raise NotSymmetric(f"matrix of shape {S.shape} is not square")
    scale = max(1.0, float(np.max(np.abs(S), initial=0.0)))
    asym = float(np.max(np.abs(S - S.T), initial=0.0))
    if asym > tol * scale:
        raise NotSymmetric(f"asymmetry {asym:.3e} exceeds {tol:g} * {scale:.3e}")


def symmetrize(S):
    S = np.asarray(S)
    return 0.5 * (S + S.T)


def symmetric_eigenvalues(S, return_vectors=False):
    """Eigenvalues of a symmetric matrix in nondecreasing order.

    With ``return_vectors`` also returns the orthonormal eigenvectors as
    columns, so that ``S ~= Q @ diag(w) @ Q.T``.
    """
    S = _as_matrix(S)
    check_symmetric(S)
    w, Q = np.linalg.eigh(symmetrize(S))
    if return_vectors:
        return w, Q
    return w


def is_positive_definite(S):
    S = _as_matrix(S)
    check_symmetric(S)
    w = np.linalg.eigvalsh(symmetrize(S))
    # eps-level slack so a singular PSD matrix never reads as PD through roundoff
    slack = S.shape[0] * np.finfo(float).eps * max(1.0, float(np.max(np.abs(S))))
    return bool(w[0] > slack)


def care_residual(P, A, B, M):
    return P @ A + A.T @ P - P @ B @ B.T @ P + M


def _check_stabilizable(A, B):
    n = A.shape[0]
    scale = max(1.0, np.linalg.norm(A), np.linalg.norm(B))
    for lam in np.linalg.eigvals(A):
        if lam.real < -1e-12 * scale:
            continue
        pbh = np.hstack([A - lam * np.eye(n), B.astype(complex)])
        sv = np.linalg.svd(pbh, compute_uv=False)
        if sv.size < n or sv[n - 1] <= 1e-10 * scale:
            raise NotStabilizable(
                f"mode {lam:.6g} with Re >= 0 is not controllable from B"
            )


@dataclass(frozen=True)
class CareSolution:
    P: np.ndarray
    residual_norm: float
    feedback_row: np.ndarray  # B^T P
    iterations: int = 0


def _schur_initial(A, B, M):
    n = A.shape[0]
    G = B @ B.T
    H = np.block([[A, -G], [-M, -A.T]])
    T, Z, sdim = sla.schur(H, output="real", sort="lhp")
    if sdim != n:
        raise NotStabilizable(
            f"Hamiltonian has {sdim} stable eigenvalues, expected {n}"
        )
    X1, X2 = Z[:n, :n], Z[n:, :n]
    if np.linalg.cond(X1) > 1e12:
        raise NoConvergence("stable invariant subspace is not a graph subspace")
    return symmetrize(np.linalg.solve(X1.T, X2.T).T)


def solve_care(A, B, M, tol=CARE_RTOL, max_newton=50):
    """Stabilizing solution of ``PA + A'P - PBB'P + M = 0``.

    The Hamiltonian Schur solution seeds Newton-Kleinman refinement, which
    runs until the Frobenius residual drops below ``tol * max(1, ||M||)``.

    Raises
    ------
    NotPositiveDefinite
        ``M`` is not symmetric positive definite.
    NotStabilizable
        an unstable mode of ``A`` cannot be reached from ``B``.
    NoConvergence
        the residual tolerance could not be met.
    """
    A = _as_matrix(A, "A")
    B = _as_matrix(B, "B")
    M = _as_matrix(M, "M")
    n = A.shape[0]
    if A.shape != (n, n) or M.shape != (n, n) or B.shape[0] != n:
        raise ValueError(f"inconsistent shapes A{A.shape} B{B.shape} M{M.shape}")
    try:
        pd = is_positive_definite(M)
    except NotSymmetric as exc:
        raise NotPositiveDefinite(f"M is not symmetric: {exc}") from exc
    if not pd:
        raise NotPositiveDefinite("M must be positive definite")
    M = symmetrize(M)
    _check_stabilizable(A, B)

    target = tol * max(1.0, np.linalg.norm(M))
    P = _schur_initial(A, B, M)
    res = np.linalg.norm(care_residual(P, A, B, M))
    it = 0
    while res > target and it < max_newton:
        K = B.T @ P
        Acl = A - B @ K
        if np.max(np.linalg.eigvals(Acl).real) >= 0:
            raise NoConvergence("Newton iterate lost closed-loop stability")
        P_new = symmetrize(sla.solve_continuous_lyapunov(Acl.T, -(M + K.T @ K)))
        res_new = np.linalg.norm(care_residual(P_new, A, B, M))
        it += 1
        if res_new >= res and it > 3:
            break
        P, res = P_new, res_new
    if res > target:
        raise NoConvergence(f"residual {res:.3e} above tolerance {target:.3e}")
    if not is_positive_definite(P):
        raise NoConvergence("Riccati solution is not positive definite")
    return CareSolution(P=P, residual_norm=float(res), feedback_row=B.T @ P, iterations=it)


def closed_loop_eigenvalues(A, B, sol):
    """Eigenvalues of ``A - B B'P`` sorted by real part then imaginary part."""
    A = _as_matrix(A)
    B = _as_matrix(B)
    ev = np.linalg.eigvals(A - B @ sol.feedback_row)
    return ev[np.lexsort((ev.imag, ev.real))]
