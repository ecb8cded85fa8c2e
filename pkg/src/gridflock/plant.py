"""Reduced physical layer: double-integrator agents and a pilot-bus surrogate.

Agent ``i`` carries the normalized state ``x = [dQ/alpha, dQ'/alpha]``.
The pilot-bus voltage is a linear sensitivity model standing in for the
electrical network::

    V_pilot(t) = V_open(t) + sum_i s_i * dQ_i(t)

where ``V_open`` is a piecewise-constant open-loop trajectory carrying
the load disturbance. Agents not under cooperative control follow a
static droop law ``dQ_i = c_i - alpha_i * V_pilot``; pure droop operation
uses ``c_i = alpha_i * V_ref`` so that ``dQ_i = (V_ref - V_pilot) / m_i``.
"""
from bisect import bisect_right
from dataclasses import dataclass, replace

import numpy as np

from .errors import LengthMismatch


@dataclass(frozen=True)
class PlantConfig:
    n_agents: int
    alpha: tuple
    sensitivity: tuple
    V_ref: float
    Kp: float
    Ki: float
    V_open: tuple  # ((t_s, volts), ...) piecewise constant, right-continuous
    droop: tuple = None

    def __post_init__(self):
        n = self.n_agents
        if len(self.alpha) != n or len(self.sensitivity) != n:
            raise LengthMismatch("alpha and sensitivity need one entry per agent")
        if any(a <= 0 for a in self.alpha):
            raise ValueError("participation factors must be > 0")
        if any(s < 0 for s in self.sensitivity):
            raise ValueError("sensitivities must be >= 0")
        if self.V_ref <= 0:
            raise ValueError("V_ref must be > 0")
        if not self.V_open:
            raise ValueError("V_open needs at least one breakpoint")
        times = [p[0] for p in self.V_open]
        if times != sorted(times):
            raise ValueError("V_open breakpoints must be time-ordered")

    @classmethod
    def from_droop(cls, droop, **kw):
        alpha = tuple(1.0 / m for m in droop)
        return cls(n_agents=len(droop), alpha=alpha, droop=tuple(droop), **kw)

    @property
    def alpha_arr(self):
        return np.asarray(self.alpha, dtype=float)

    @property
    def s_arr(self):
        return np.asarray(self.sensitivity, dtype=float)

    def open_voltage(self, t):
        times = [p[0] for p in self.V_open]
        k = bisect_right(times, t + 1e-9) - 1
        return float(self.V_open[max(k, 0)][1])

    def with_(self, **kw):
        return replace(self, **kw)


@dataclass(frozen=True)
class ReferenceState:
    integral_error: float = 0.0
    dQ_ref: float = 0.0


def agent_dynamics(x, u):
    """Double integrator: ``[x2, u]``."""
    x = np.asarray(x, dtype=float)
    return np.array([x[1], u], dtype=float)


def pilot_voltage(config, dQ, t):
    dQ = np.asarray(dQ, dtype=float)
    if dQ.shape != (config.n_agents,):
        raise LengthMismatch(f"expected {config.n_agents} reactive-power values, got {dQ.shape}")
    return config.open_voltage(t) + float(np.dot(config.s_arr, dQ))


def coupled_pilot_voltage(config, t, dQ, droop_mask, droop_offset):
    """Pilot voltage when the agents in ``droop_mask`` follow ``dQ = c - alpha * V``.

    ``dQ`` entries of droop agents are ignored. Returns ``(V_pilot, dQ_full)``.
    """
    s = config.s_arr
    a = config.alpha_arr
    mask = np.asarray(droop_mask, dtype=bool)
    c = np.asarray(droop_offset, dtype=float)
    active = ~mask
    num = config.open_voltage(t) + float(np.dot(s[active], np.asarray(dQ)[active])) \
        + float(np.dot(s[mask], c[mask]))
    V = num / (1.0 + float(np.dot(s[mask], a[mask])))
    full = np.where(mask, c - a * V, dQ)
    return V, full


def reference_step(state, V_pilot, V_ref, Kp, Ki, dt, enabled=True):
    """Advance the lead agent's PI reference generator by ``dt`` (forward Euler)."""
    if dt <= 0:
        raise ValueError("dt must be > 0")
    if not enabled:
        return ReferenceState(state.integral_error, 0.0)
    e = V_pilot - V_ref
    integral = state.integral_error + e * dt
    return ReferenceState(integral, Kp * e + Ki * integral)


def regulation_errors(x, dQ_ref):
    """Per-agent ``x1_i - dQ_ref``; ``x`` has shape ``(N, 2)``."""
    x = np.asarray(x, dtype=float)
    return x[:, 0] - dQ_ref
