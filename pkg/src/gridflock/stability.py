"""Frozen-gain stability checks of the closed loop.

With the adaptive gains frozen at constants ``rho``, the stacked error
dynamics are the linear delay system

    xbar' = (I kron A) xbar - (diag(rho) Lbar_tau kron B B'P) xbar(t - tau)

where only the off-diagonal (neighbour) entries of ``Lbar`` are delayed.
Two checks are provided:

* :func:`hurwitz_check` - eigenvalues of the undelayed loop.
* :func:`frequency_sweep` - the smallest singular value of
  ``j w I - M(j w)`` over a frequency grid, ``M(j w)`` being the loop matrix
  with each off-diagonal entry rotated by ``exp(-j w tau_ij)``. Given an
  undelayed Hurwitz loop, a sweep bounded away from zero certifies
  asymptotic stability for the given delays.
"""
from dataclasses import dataclass, field

import numpy as np

from .errors import UndelayedUnstable
from .graph import expanded_laplacian_at
from .protocol import A_AGENT, B_AGENT, ProtocolGain


@dataclass(frozen=True)
class FrozenLoop:
    rho: np.ndarray
    Lbar: np.ndarray
    delays: np.ndarray
    P: np.ndarray
    A: np.ndarray = field(default_factory=lambda: A_AGENT.copy())
    B: np.ndarray = field(default_factory=lambda: B_AGENT.copy())

    def __post_init__(self):
        N = len(self.rho)
        if self.Lbar.shape != (N, N) or self.delays.shape != (N, N):
            raise ValueError("rho, Lbar and delays have inconsistent sizes")
        if np.any(np.asarray(self.rho) < 0):
            raise ValueError("frozen gains must be nonnegative")
        if np.any(np.asarray(self.delays) < 0):
            raise ValueError("delays must be nonnegative")

    @property
    def n_agents(self):
        return len(self.rho)

    @property
    def BBtP(self):
        return self.B @ self.B.T @ self.P

    def scaled_delays(self, factor):
        return FrozenLoop(self.rho, self.Lbar, self.delays * factor, self.P, self.A, self.B)


@dataclass
class SweepReport:
    omega: np.ndarray
    sigma_min: np.ndarray
    min_sigma: float
    argmin_omega: float
    passed: bool
    omega_max: float
    threshold: float  # relative
    threshold_abs: float
    cutoff_omega: float  # beyond this sigma_min >= |w| - cutoff > 0

    def to_dict(self):
        return {
            "pass": bool(self.passed),
            "min_sigma": float(self.min_sigma),
            "argmin_omega": float(self.argmin_omega),
            "omega_max": float(self.omega_max),
            "grid_points": int(len(self.omega)),
            "threshold": float(self.threshold),
            "threshold_abs": float(self.threshold_abs),
            "cutoff_omega": float(self.cutoff_omega),
        }


def delay_laplacian(Lbar, delays, omega):
    Lbar = np.asarray(Lbar, dtype=float)
    rot = np.exp(-1j * omega * np.asarray(delays, dtype=float))
    np.fill_diagonal(rot, 1.0)
    return Lbar * rot


def loop_matrix(loop, omega=None):
    """``I kron A - (diag(rho) L kron BB'P)``; ``L`` is delay-rotated when ``omega`` is given."""
    N = loop.n_agents
    L = loop.Lbar if omega is None else delay_laplacian(loop.Lbar, loop.delays, omega)
    return np.kron(np.eye(N), loop.A) - np.kron(np.diag(loop.rho) @ L, loop.BBtP)


def hurwitz_check(loop):
    """Return ``(stable, max_real_part)`` of the undelayed loop."""
    ev = np.linalg.eigvals(loop_matrix(loop))
    max_re = float(np.max(ev.real))
    return max_re < 0.0, max_re


def norm_cutoff(loop):
    """Uniform bound on ``||M(j w)||_2``; no singularity can occur above it."""
    abs_L = np.abs(loop.Lbar)
    return float(np.linalg.norm(loop.A, 2)
                 + np.max(loop.rho, initial=0.0) * np.linalg.norm(abs_L, 2)
                 * np.linalg.norm(loop.BBtP, 2))


def sigma_min_at(loop, omega):
    M = loop_matrix(loop, omega)
    n = M.shape[0]
    return float(np.linalg.svd(1j * omega * np.eye(n) - M, compute_uv=False)[-1])


def frequency_sweep(loop, omega_max=None, grid_points=4096, threshold=1e-8,
                    check_undelayed=True):
    """Smallest singular value of ``j w I - M(j w)`` on ``[0, omega_max]``.

    Negative frequencies follow by conjugate symmetry. ``threshold`` is
    relative to ``max(1, ||M(0)||_2)``. By default the undelayed loop must be
    Hurwitz first (raises :class:`UndelayedUnstable` otherwise).
    """
    if check_undelayed:
        stable, max_re = hurwitz_check(loop)
        if not stable:
            raise UndelayedUnstable(f"undelayed loop has eigenvalue real part {max_re:.3e} >= 0")
    cutoff = norm_cutoff(loop)
    if omega_max is None:
        omega_max = 10.0 * max(cutoff, 1.0)
    if omega_max <= 0:
        raise ValueError("omega_max must be > 0")
    if grid_points < 2:
        raise ValueError("grid_points must be >= 2")
    omega = np.linspace(0.0, omega_max, int(grid_points))
    N = loop.n_agents
    n = 2 * N
    rot = np.exp(-1j * omega[:, None, None] * loop.delays[None, :, :])
    idx = np.arange(N)
    rot[:, idx, idx] = 1.0
    L = loop.Lbar[None, :, :] * rot
    RL = loop.rho[None, :, None] * L
    M = np.kron(np.eye(N), loop.A)[None, :, :] - np.einsum("wij,ab->wiajb", RL, loop.BBtP
                                                            ).reshape(len(omega), n, n)
    J = 1j * omega[:, None, None] * np.eye(n)[None, :, :] - M
    sig = np.linalg.svd(J, compute_uv=False)[:, -1]
    k = int(np.argmin(sig))
    thr_abs = threshold * max(1.0, float(np.linalg.norm(loop_matrix(loop), 2)))
    return SweepReport(
        omega=omega, sigma_min=sig, min_sigma=float(sig[k]), argmin_omega=float(omega[k]),
        passed=bool(sig[k] > thr_abs), omega_max=float(omega_max), threshold=float(threshold),
        threshold_abs=thr_abs, cutoff_omega=cutoff,
    )


def frozen_loops(scenario, rho, agents, t0=None, t1=None, delay_multiplier=1.0):
    """One frozen loop per distinct topology the schedule takes on ``[t0, t1]``.

    ``agents`` selects the cooperating agents; rows and columns of everyone
    else (isolated agents) are dropped. The default window starts at the
    later of controller activation and the last isolation event, so every
    loop contains exactly the final cooperating set.
    """
    gain = ProtocolGain.design(np.asarray(scenario.protocol.M, dtype=float))
    graph = scenario.graph
    if t0 is None:
        t0 = scenario.activation_t_s or 0.0
        iso = [e.t_s for e in graph.events
               if e.kind == "isolate" and e.t_s <= scenario.solver.t_end_s]
        t0 = max([t0, *iso])
    if t1 is None:
        t1 = scenario.solver.t_end_s
    sel = np.flatnonzero(np.asarray(agents, dtype=bool))
    rho = np.asarray(rho, dtype=float)[sel]
    loops, seen = [], set()
    for t in graph.interval_sample_times(t0, t1):
        Lbar = expanded_laplacian_at(graph, t)[np.ix_(sel, sel)]
        D = graph.topology_at(t).delays[np.ix_(sel, sel)] * delay_multiplier
        key = (Lbar.tobytes(), D.tobytes())
        if key in seen:
            continue
        seen.add(key)
        loops.append((t, FrozenLoop(rho=rho, Lbar=Lbar, delays=D, P=gain.P)))
    return loops
