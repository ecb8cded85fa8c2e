"""Scale-free adaptive consensus protocol for double-integrator agents.

Each agent forms its relative information from its own state, the
(delayed) states received from neighbours and, when available, the
reference. Its adaptive gain grows with the squared feedback signal::

    v     = B'P zeta_bar
    rho'  = v**2
    u     = -rho * v

Nothing here takes the network size or any Laplacian as input: the only
design data are ``A``, ``B`` and the weight ``M`` of the Riccati equation.
"""
from dataclasses import dataclass

import numpy as np

from .errors import NonpositiveAlpha
from .linalg import solve_care

A_AGENT = np.array([[0.0, 1.0], [0.0, 0.0]])
B_AGENT = np.array([[0.0], [1.0]])


@dataclass(frozen=True)
class ProtocolGain:
    P: np.ndarray
    BtP: np.ndarray  # shape (2,)

    @classmethod
    def design(cls, M=None):
        """Gain from the Riccati equation with weight ``M`` (identity by default)."""
        M = np.eye(2) if M is None else np.asarray(M, dtype=float)
        sol = solve_care(A_AGENT, B_AGENT, M)
        return cls(P=sol.P, BtP=sol.feedback_row.ravel())

    @property
    def BBtP(self):
        return B_AGENT @ self.BtP[None, :]


def compute_zeta(i, own_state, delayed_neighbors, l_i, x_ref):
    """Relative information of agent ``i``.

    ``delayed_neighbors`` is an iterable of ``(j, a_ij, x_j)`` where ``x_j``
    is the value received from ``j`` (already delayed and possibly noisy).
    """
    x = np.asarray(own_state, dtype=float)
    zeta = np.zeros_like(x)
    for j, a_ij, x_j in delayed_neighbors:
        if j == i or a_ij == 0:
            continue
        zeta += a_ij * (x - np.asarray(x_j, dtype=float))
    if l_i:
        zeta += l_i * (x - np.asarray(x_ref, dtype=float))
    return zeta


def protocol_derivatives(zeta_bar, rho, gain):
    """Return ``(rho_dot, u)`` for one agent."""
    v = float(np.dot(gain.BtP, zeta_bar))
    return v * v, -rho * v


def denormalize_control(u, alpha_i):
    """Physical reactive-power acceleration ``alpha_i * u`` (Var/s^2)."""
    if not alpha_i > 0:
        raise NonpositiveAlpha(f"participation factor must be > 0, got {alpha_i}")
    return alpha_i * u
