"""Time-varying undirected communication graphs.

A :class:`GraphSchedule` is an immutable description of the network:
base edges with weights and constant delays, per-agent reference flags,
a time-ordered event list (edge add/remove/reweight, agent isolation,
flag changes), periodic loss processes and per-edge multiplicative noise.
Every evaluation function is pure.
"""
from bisect import bisect_right
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import AsymmetricAdjacency
from .linalg import symmetric_eigenvalues

EVENT_KINDS = ("remove_edge", "add_edge", "reweight", "isolate", "set_flag")
NOISE_TARGETS = ("state", "weight")
_TIME_EPS = 1e-9


def _edge_key(i, j):
    return (i, j) if i < j else (j, i)


@dataclass(frozen=True)
class LossProcess:
    """Periodic ON/OFF link; ON for the first ``duty`` fraction of each period."""

    edge: tuple
    period: float = 0.1
    duty: float = 0.5
    phase: float = 0.0

    def __post_init__(self):
        if self.period <= 0:
            raise ValueError("loss period must be > 0")
        if not 0 < self.duty <= 1:
            raise ValueError("loss duty must be in (0, 1]")

    def is_on(self, t):
        if self.duty >= 1.0:
            return True
        frac = ((t - self.phase) / self.period) % 1.0
        # grid-aligned switching instants: absorb roundoff, right-continuous
        if frac > 1.0 - _TIME_EPS:
            frac = 0.0
        return frac < self.duty - _TIME_EPS

    def switch_times(self, t0, t1):
        k0 = int(np.floor((t0 - self.phase) / self.period)) - 1
        k1 = int(np.ceil((t1 - self.phase) / self.period)) + 1
        out = []
        for k in range(k0, k1 + 1):
            base = self.phase + k * self.period
            for s in (base, base + self.duty * self.period):
                if t0 < s < t1:
                    out.append(s)
        return out


@dataclass(frozen=True)
class NoiseProcess:
    edge: tuple
    amplitude: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if not 0 <= self.amplitude < 1:
            raise ValueError("noise amplitude must be in [0, 1)")


@dataclass(frozen=True)
class Event:
    t_s: float
    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in EVENT_KINDS:
            raise ValueError(f"unknown event kind {self.kind!r}")


@dataclass(frozen=True)
class Topology:
    """Piecewise-constant part of the graph on one event interval."""

    weights: np.ndarray
    delays: np.ndarray
    flags: np.ndarray
    isolated: frozenset


@dataclass(frozen=True)
class GraphSchedule:
    n_agents: int
    edges: tuple = ()  # (i, j, weight, delay_s)
    reference_flags: tuple = ()
    events: tuple = ()
    loss: tuple = ()
    noise: tuple = ()
    noise_target: str = "weight"

    def __post_init__(self):
        n = self.n_agents
        if n < 1:
            raise ValueError("n_agents must be >= 1")
        if len(self.reference_flags) != n:
            raise ValueError("reference_flags must have one entry per agent")
        if any(f not in (0, 1) for f in self.reference_flags):
            raise ValueError("reference flags must be 0 or 1")
        for i, j, w, tau in self.edges:
            if not (0 <= i < n and 0 <= j < n) or i == j:
                raise ValueError(f"invalid edge ({i}, {j})")
            if w <= 0:
                raise ValueError(f"edge ({i}, {j}) weight must be > 0")
            if tau < 0:
                raise ValueError(f"edge ({i}, {j}) delay must be >= 0")
        if self.noise_target not in NOISE_TARGETS:
            raise ValueError(f"noise_target must be one of {NOISE_TARGETS}")
        times = [e.t_s for e in self.events]
        if times != sorted(times):
            raise ValueError("events must be time-ordered")

    @cached_property
    def _segments(self):
        n = self.n_agents
        W = np.zeros((n, n))
        D = np.zeros((n, n))
        for i, j, w, tau in self.edges:
            W[i, j] = W[j, i] = w
            D[i, j] = D[j, i] = tau
        flags = np.array(self.reference_flags, dtype=float)
        isolated = set()
        starts = [0.0]
        segs = [self._freeze(W, D, flags, isolated)]
        for ev in self.events:
            p = ev.params
            if ev.kind in ("remove_edge", "add_edge", "reweight"):
                i, j = p["edge"]
                if ev.kind == "remove_edge":
                    W[i, j] = W[j, i] = 0.0
                else:
                    W[i, j] = W[j, i] = float(p["weight"])
                    if "delay_s" in p:
                        D[i, j] = D[j, i] = float(p["delay_s"])
            elif ev.kind == "isolate":
                isolated.add(int(p["agent"]))
                flags[int(p["agent"])] = 0.0
            elif ev.kind == "set_flag":
                flags[int(p["agent"])] = float(p["value"])
            if starts[-1] == ev.t_s:
                segs[-1] = self._freeze(W, D, flags, isolated)
            else:
                starts.append(ev.t_s)
                segs.append(self._freeze(W, D, flags, isolated))
        return starts, segs

    @staticmethod
    def _freeze(W, D, flags, isolated):
        W = W.copy()
        fl = flags.copy()
        for k in isolated:
            W[k, :] = 0.0
            W[:, k] = 0.0
            fl[k] = 0.0
        return Topology(W, D.copy(), fl, frozenset(isolated))

    @cached_property
    def _noise_by_edge(self):
        return {_edge_key(*nz.edge): nz for nz in self.noise}

    def topology_at(self, t):
        starts, segs = self._segments
        return segs[max(0, bisect_right(starts, t + _TIME_EPS) - 1)]

    def flags_at(self, t):
        return self.topology_at(t).flags.copy()

    def delays(self):
        """Symmetric matrix of the largest delay each link ever carries."""
        _, segs = self._segments
        return np.max(np.stack([s.delays for s in segs]), axis=0)

    def max_delay(self):
        return float(np.max(self.delays(), initial=0.0))

    def noise_for(self, i, j):
        return self._noise_by_edge.get(_edge_key(i, j))

    def breakpoints(self, t0, t1):
        """Sorted switching instants strictly inside ``(t0, t1)``."""
        pts = {e.t_s for e in self.events if t0 < e.t_s < t1}
        for lp in self.loss:
            pts.update(lp.switch_times(t0, t1))
        return sorted(pts)

    def interval_sample_times(self, t0, t1):
        """One time inside each constant interval of the schedule on ``[t0, t1]``."""
        edges = [t0, *self.breakpoints(t0, t1), t1]
        return [0.5 * (a + b) for a, b in zip(edges[:-1], edges[1:]) if b > a]


def adjacency_at(schedule, t):
    """Symmetric, zero-diagonal weight matrix in force at time ``t``."""
    W = schedule.topology_at(t).weights.copy()
    for lp in schedule.loss:
        if not lp.is_on(t):
            i, j = lp.edge
            W[i, j] = W[j, i] = 0.0
    return W


def laplacian(adjacency):
    a = np.asarray(adjacency, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise AsymmetricAdjacency(f"adjacency must be square, got {a.shape}")
    if not np.array_equal(a, a.T):
        scale = max(1.0, float(np.max(np.abs(a), initial=0.0)))
        if np.max(np.abs(a - a.T)) > 1e-12 * scale:
            raise AsymmetricAdjacency("adjacency matrix is not symmetric")
    if np.any(a < 0):
        raise AsymmetricAdjacency("adjacency weights must be nonnegative")
    if np.any(np.diag(a) != 0):
        raise AsymmetricAdjacency("adjacency diagonal must be zero")
    return np.diag(a.sum(axis=1)) - a


def expanded_laplacian(L, flags):
    L = np.asarray(L, dtype=float)
    return L + np.diag(np.asarray(flags, dtype=float))


def expanded_laplacian_at(schedule, t):
    return expanded_laplacian(laplacian(adjacency_at(schedule, t)), schedule.flags_at(t))


def check_bounds(schedule, sample_times):
    """Spectral bounds ``beta * I <= Lbar(t) <= gamma * I`` over the samples.

    Returns ``(beta, gamma, passed)`` with ``passed`` iff ``beta > 0``.
    """
    if len(sample_times) == 0:
        raise ValueError("sample_times must be non-empty")
    beta, gamma = np.inf, -np.inf
    for t in sample_times:
        w = symmetric_eigenvalues(expanded_laplacian_at(schedule, t))
        beta = min(beta, float(w[0]))
        gamma = max(gamma, float(w[-1]))
    # kernel eigenvalues come back as +-1e-16; report them as exact zeros
    if abs(beta) < 1e-12:
        beta = 0.0
    return beta, gamma, beta > 0


def uniform_draw(seed, i, j, draw):
    """Deterministic U[0, 1) keyed by ``(seed, i, j, draw)`` via a Philox counter."""
    key = np.array([seed & 0xFFFFFFFFFFFFFFFF, ((i & 0xFFFFFFFF) << 32) | (j & 0xFFFFFFFF)],
                   dtype=np.uint64)
    counter = np.array([draw, 0, 0, 0], dtype=np.uint64)
    raw = int(np.random.Philox(key=key, counter=counter).random_raw())
    return (raw >> 11) * 2.0**-53


def noise_factor(noise, i, j, draw):
    """Multiplier ``1 + eta`` with ``eta ~ U(-amplitude, amplitude)``; 1.0 without noise."""
    if noise is None or noise.amplitude == 0:
        return 1.0
    u = uniform_draw(noise.seed, i, j, draw)
    return 1.0 + noise.amplitude * (2.0 * u - 1.0)


def transmit(state, noise, t, draw, link=None):
    """State as received over a (possibly noisy) link.

    ``link`` is the ordered ``(receiver, sender)`` pair; it defaults to the
    noise process's own edge. Each direction of an edge draws independently.
    ``t`` is accepted for interface symmetry; the draw index alone keys the
    generator.
    """
    state = np.asarray(state, dtype=float)
    if noise is None or noise.amplitude == 0:
        return state
    i, j = link if link is not None else noise.edge
    return noise_factor(noise, i, j, draw) * state
