"""Fixed-step RK4 integration of the closed loop with constant link delays.

The engine owns all mutable run state. Agents are in one of three modes:

* ``DROOP`` - before the cooperative controller engages; reactive power
  follows the static droop law and nothing is integrated.
* ``ACTIVE`` - double-integrator dynamics driven by the adaptive protocol.
* ``HELD`` - isolated from the network: the last cooperative command is
  frozen, the adaptive gain stops, and the inverter runs on droop around
  the operating point it had when the links failed.

Topology is piecewise constant on the time grid: the graph in force on the
open interval ``(t, t + dt)`` is used for every stage of the step from
``t``, so events at ``t + dt`` take effect from the next step on.
"""
import csv
import json
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DivergenceError, FutureQuery
from .graph import adjacency_at, noise_factor
from .plant import coupled_pilot_voltage
from .protocol import ProtocolGain

DROOP, ACTIVE, HELD = 0, 1, 2
DIVERGENCE_LIMIT = 1e12
SETTLE_BAND = 0.005  # fraction of V_ref
_EPS_T = 1e-9


class HistoryBuffer:
    """Ring buffer of ``(t, value)`` samples with linear interpolation.

    Queries at or before the first sample time return the first sample
    (constant pre-history). The ring keeps ``capacity`` samples, which must
    span the largest delay plus one step.
    """

    def __init__(self, capacity, initial=None, t0=0.0):
        self.capacity = max(int(capacity), 2)
        self._t = np.empty(self.capacity)
        self._v = None
        self._head = 0
        self._size = 0
        self._t_first = None
        self._v_first = None
        if initial is not None:
            self.append(t0, initial)

    def __len__(self):
        return self._size

    def append(self, t, value):
        value = np.asarray(value, dtype=float)
        if self._v is None:
            self._v = np.empty((self.capacity, *value.shape))
            self._t_first = float(t)
            self._v_first = value.copy()
        elif t <= self.newest_time:
            raise ValueError("history samples must be strictly increasing in t")
        k = (self._head + self._size) % self.capacity
        if self._size == self.capacity:
            self._head = (self._head + 1) % self.capacity
        else:
            self._size += 1
        self._t[k] = t
        self._v[k] = value

    @property
    def newest_time(self):
        return float(self._t[(self._head + self._size - 1) % self.capacity])

    def query(self, t):
        if self._size == 0:
            raise FutureQuery("history is empty")
        if t <= self._t_first:
            return self._v_first.copy()
        newest = self.newest_time
        if t > newest + _EPS_T:
            raise FutureQuery(f"query at t={t:.9g} beyond newest sample {newest:.9g}")
        idx = (self._head + np.arange(self._size)) % self.capacity
        ts = self._t[idx]
        if t < ts[0] - _EPS_T:
            raise FutureQuery(f"query at t={t:.9g} older than retained history {ts[0]:.9g}")
        k = int(np.searchsorted(ts, t))
        if k < self._size and abs(ts[k] - t) <= _EPS_T:
            return self._v[idx[k]].copy()
        if k == 0:
            return self._v[idx[0]].copy()
        if k >= self._size:
            return self._v[idx[-1]].copy()
        t0, t1 = ts[k - 1], ts[k]
        w = (t - t0) / (t1 - t0)
        return (1.0 - w) * self._v[idx[k - 1]] + w * self._v[idx[k]]


def delayed_state(buffer, t_query):
    return buffer.query(t_query)


def rk4_step(f, t, y, dt):
    """One classical Runge-Kutta step for ``y' = f(t, y)``."""
    k1 = f(t, y)
    k2 = f(t + 0.5 * dt, y + 0.5 * dt * k1)
    k3 = f(t + 0.5 * dt, y + 0.5 * dt * k2)
    k4 = f(t + dt, y + dt * k3)
    return y + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


@dataclass
class SimTrace:
    t: np.ndarray
    x: np.ndarray  # (T, N, 2)
    rho: np.ndarray  # (T, N)
    u: np.ndarray  # (T, N)
    dQ: np.ndarray  # (T, N)
    V_pilot: np.ndarray
    dQ_ref: np.ndarray
    V_lyap: np.ndarray
    alpha: np.ndarray
    V_ref: float
    activation_t_s: float
    cooperative: np.ndarray  # agents under cooperative control at the end of the run
    scenario: str = ""
    events: list = field(default_factory=list)
    diverged: bool = False

    def __len__(self):
        return len(self.t)

    def truncated(self, n):
        return SimTrace(
            t=self.t[:n], x=self.x[:n], rho=self.rho[:n], u=self.u[:n], dQ=self.dQ[:n],
            V_pilot=self.V_pilot[:n], dQ_ref=self.dQ_ref[:n], V_lyap=self.V_lyap[:n],
            alpha=self.alpha, V_ref=self.V_ref, activation_t_s=self.activation_t_s,
            cooperative=self.cooperative, scenario=self.scenario, events=list(self.events),
            diverged=self.diverged,
        )


@dataclass
class SystemState:
    t: float
    step: int
    x: np.ndarray  # (N, 2); active agents integrated, others algebraic
    rho: np.ndarray
    integral: float
    mode: np.ndarray
    offset: np.ndarray  # droop offsets c_i
    u_hold: np.ndarray
    controller_on: bool


def lyapunov_monitor(trace, P, agents=None):
    """``sum_i xbar_i' P xbar_i / rho_i`` over ``agents`` (default: cooperative ones).

    Samples where any selected ``rho_i`` is zero (or so small that the value
    overflows) are returned as NaN.
    """
    P = np.asarray(P, dtype=float)
    sel = trace.cooperative if agents is None else np.asarray(agents)
    if sel.dtype == bool:
        sel = np.flatnonzero(sel)
    xr = np.zeros((len(trace.t), 1, 2))
    xr[:, 0, 0] = trace.dQ_ref
    xbar = trace.x[:, sel, :] - xr
    rho = trace.rho[:, sel]
    quad = np.einsum("tni,ij,tnj->tn", xbar, P, xbar)
    out = np.full(len(trace.t), np.nan)
    ok = np.all(rho > 0, axis=1)
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        out[ok] = np.sum(quad[ok] / rho[ok], axis=1)
    out[~np.isfinite(out)] = np.nan
    return out


class Simulator:
    """Stateful single-run integrator; use :func:`run` for the common case."""

    def __init__(self, scenario):
        self.cfg = scenario
        self.plant = scenario.plant
        self.graph = scenario.graph
        self.gain = ProtocolGain.design(np.asarray(scenario.protocol.M, dtype=float))
        self.dt = float(scenario.solver.dt_s)
        self.n_steps = scenario.n_steps
        self.N = self.plant.n_agents
        self.alpha = self.plant.alpha_arr
        self.s = self.plant.s_arr
        self._check_delays()

        N = self.N
        act = scenario.activation_t_s
        x = np.zeros((N, 2))
        controller_on = act is not None and act <= _EPS_T
        mode = np.full(N, ACTIVE if controller_on else DROOP)
        if scenario.protocol.x0 is not None:
            x[:] = np.asarray(scenario.protocol.x0, dtype=float)
        self.state = SystemState(
            t=0.0, step=0, x=x, rho=np.asarray(scenario.rho0(), dtype=float).copy(),
            integral=0.0, mode=mode, offset=self.alpha * self.plant.V_ref,
            u_hold=np.zeros(N), controller_on=controller_on,
        )
        cap = int(np.ceil(self.graph.max_delay() / self.dt)) + 3
        self.history = HistoryBuffer(cap)
        self.events = []
        if controller_on:
            self.events.append((0.0, "activate", {}))
        self._prev_ctx = None

    def _check_delays(self):
        D = self.graph.delays()
        bad = D[(D > 0) & (D < self.dt - _EPS_T)]
        if bad.size:
            raise ConfigError(
                f"nonzero link delay {bad.min():g} s is shorter than dt={self.dt:g} s"
            )

    # -- per-step context -------------------------------------------------

    def _context(self, step):
        """Weights, delay groups, flags and noise factors for the step from ``step*dt``."""
        t_mid = (step + 0.5) * self.dt
        W = adjacency_at(self.graph, t_mid)
        topo = self.graph.topology_at(t_mid)
        F = np.ones_like(W)
        if self.graph.noise:
            weight_mode = self.graph.noise_target == "weight"
            for nz in self.graph.noise:
                i, j = nz.edge
                if weight_mode:
                    F[i, j] = F[j, i] = noise_factor(nz, i, j, step)
                else:
                    F[i, j] = noise_factor(nz, i, j, step)
                    F[j, i] = noise_factor(nz, j, i, step)
        Weff = W * F
        if self.graph.noise_target == "weight":
            deg = Weff.sum(axis=1)
        else:
            deg = W.sum(axis=1)
        groups = []
        for tau in np.unique(topo.delays[W > 0]) if np.any(W > 0) else []:
            mask = (topo.delays == tau) & (W > 0)
            groups.append((float(tau), np.where(mask, Weff, 0.0)))
        return {
            "deg": deg, "groups": groups, "flags": topo.flags,
            "isolated": topo.isolated, "t_mid": t_mid,
        }

    # -- right-hand side ---------------------------------------------------

    def _algebraic(self, ts, x, mode, offset):
        droop = mode != ACTIVE
        dQ = self.alpha * x[:, 0]
        V, dQ_full = coupled_pilot_voltage(self.plant, ts, dQ, droop, offset)
        xf = x.copy()
        xf[droop, 0] = dQ_full[droop] / self.alpha[droop]
        denom = 1.0 + float(np.dot(self.s[droop], self.alpha[droop]))
        Vdot = float(np.dot(self.s[~droop] * self.alpha[~droop], x[~droop, 1])) / denom
        xf[droop, 1] = -Vdot
        return xf, V

    def _rhs(self, ts, x, rho, integral, st, ctx):
        """Derivatives plus auxiliary outputs at stage time ``ts``."""
        # V_open is piecewise constant on the grid: evaluate it inside the step
        xf, V = self._algebraic(ctx["t_mid"], x, st.mode, st.offset)
        e = V - self.plant.V_ref
        r = self.plant.Kp * e + self.plant.Ki * integral if st.controller_on else 0.0
        active = st.mode == ACTIVE
        dx = np.zeros_like(x)
        drho = np.zeros_like(rho)
        u = np.where(st.mode == HELD, st.u_hold, 0.0)
        if st.controller_on and np.any(active):
            zeta = ctx["deg"][:, None] * xf
            for tau, Wg in ctx["groups"]:
                src = xf if tau == 0.0 else self.history.query(ts - tau)
                zeta -= Wg @ src
            flags = ctx["flags"]
            zeta[:, 0] += flags * (xf[:, 0] - r)
            zeta[:, 1] += flags * xf[:, 1]
            v = zeta @ self.gain.BtP
            u_act = -rho * v
            u = np.where(active, u_act, u)
            dx[active, 0] = x[active, 1]
            dx[active, 1] = u_act[active]
            if self.cfg.protocol.adapt:
                drho[active] = v[active] ** 2
        dI = e if st.controller_on else 0.0
        return dx, drho, dI, {"x": xf, "V": V, "r": r, "u": u}

    # -- mode switching ----------------------------------------------------

    def _switch_modes(self, ctx):
        st = self.state
        t = st.t
        act = self.cfg.activation_t_s
        if not st.controller_on and act is not None and t >= act - _EPS_T:
            xf, _ = self._algebraic(ctx["t_mid"], st.x, st.mode, st.offset)
            turn_on = st.mode == DROOP
            for k in np.flatnonzero(turn_on):
                if k in ctx["isolated"]:
                    continue
                st.mode[k] = ACTIVE
                st.x[k] = xf[k]
            st.controller_on = True
            st.integral = 0.0
            self.events.append((t, "activate", {}))
        newly = [k for k in ctx["isolated"] if st.mode[k] == ACTIVE]
        if newly:
            prev = self._prev_ctx if self._prev_ctx is not None else ctx
            _, _, _, aux = self._rhs(t, st.x, st.rho, st.integral, st, prev)
            for k in newly:
                st.u_hold[k] = aux["u"][k]
                st.offset[k] = self.alpha[k] * (aux["x"][k, 0] + aux["V"])
                st.mode[k] = HELD
                self.events.append((t, "isolate", {"agent": int(k), "u_hold": float(aux["u"][k])}))

    # -- stepping ----------------------------------------------------------

    def step(self):
        """Advance by one RK4 step; returns the auxiliary outputs at the step start."""
        st = self.state
        dt = self.dt
        ctx = self._context(st.step)
        self._switch_modes(ctx)
        t = st.t
        x0, r0, i0 = st.x, st.rho, st.integral

        k1 = self._rhs(t, x0, r0, i0, st, ctx)
        aux = k1[3]
        if len(self.history) == 0 or t > self.history.newest_time:
            self.history.append(t, aux["x"])
        k2 = self._rhs(t + 0.5 * dt, x0 + 0.5 * dt * k1[0], r0 + 0.5 * dt * k1[1],
                       i0 + 0.5 * dt * k1[2], st, ctx)
        k3 = self._rhs(t + 0.5 * dt, x0 + 0.5 * dt * k2[0], r0 + 0.5 * dt * k2[1],
                       i0 + 0.5 * dt * k2[2], st, ctx)
        k4 = self._rhs(t + dt, x0 + dt * k3[0], r0 + dt * k3[1],
                       i0 + dt * k3[2], st, ctx)
        st.x = x0 + dt / 6.0 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
        st.rho = r0 + dt / 6.0 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
        st.integral = i0 + dt / 6.0 * (k1[2] + 2 * k2[2] + 2 * k3[2] + k4[2])
        st.step += 1
        st.t = st.step * dt
        self._prev_ctx = ctx
        if not (np.all(np.isfinite(st.x)) and np.all(np.isfinite(st.rho))
                and np.isfinite(st.integral)) or max(
                    np.max(np.abs(st.x)), np.max(np.abs(st.rho)), abs(st.integral)) > DIVERGENCE_LIMIT:
            raise DivergenceError(f"state magnitude exceeded {DIVERGENCE_LIMIT:g} at t={st.t:.6g} s",
                                  t=st.t)
        return aux

    def outputs_now(self):
        """Auxiliary outputs at the current state without advancing."""
        ctx = self._prev_ctx if self._prev_ctx is not None else self._context(self.state.step)
        st = self.state
        return self._rhs(st.t, st.x, st.rho, st.integral, st, ctx)[3]

    def run(self):
        n = self.n_steps
        N = self.N
        T = n + 1
        tr = SimTrace(
            t=np.arange(T) * self.dt, x=np.zeros((T, N, 2)), rho=np.zeros((T, N)),
            u=np.zeros((T, N)), dQ=np.zeros((T, N)), V_pilot=np.zeros(T), dQ_ref=np.zeros(T),
            V_lyap=np.full(T, np.nan), alpha=self.alpha.copy(), V_ref=self.plant.V_ref,
            activation_t_s=self.cfg.activation_t_s, cooperative=np.ones(N, dtype=bool),
            scenario=self.cfg.name,
        )
        k = 0
        try:
            for k in range(n):
                rho_k = self.state.rho.copy()
                aux = self.step()
                self._record(tr, k, aux, rho_k)
            k = n
            self._record(tr, n, self.outputs_now(), self.state.rho.copy())
        except DivergenceError as exc:
            part = tr.truncated(k)
            part.diverged = True
            part.events = self.events + [(exc.t, "diverged", {})]
            part.cooperative = self.state.mode == ACTIVE
            raise DivergenceError(str(exc), trace=part, t=exc.t) from None
        tr.cooperative = self.state.mode == ACTIVE
        if not self.state.controller_on:
            tr.cooperative = np.zeros(N, dtype=bool)
        tr.events = self.events + [
            (e.t_s, e.kind, dict(e.params)) for e in self.graph.events
            if e.t_s <= self.cfg.solver.t_end_s
        ]
        tr.events.sort(key=lambda ev: ev[0])
        tr.V_lyap = lyapunov_monitor(tr, self.gain.P) if np.any(tr.cooperative) else tr.V_lyap
        return tr

    def _record(self, tr, k, aux, rho):
        tr.x[k] = aux["x"]
        tr.rho[k] = rho
        tr.u[k] = aux["u"]
        tr.dQ[k] = self.alpha * aux["x"][:, 0]
        tr.V_pilot[k] = aux["V"]
        tr.dQ_ref[k] = aux["r"]


def run(scenario):
    """Integrate ``scenario`` from 0 to ``t_end`` and return the full trace."""
    return Simulator(scenario).run()


def summarize(trace):
    """Summary metrics of a finished (or diverged) run."""
    dev = np.abs(trace.V_pilot - trace.V_ref)
    act = trace.activation_t_s
    after = trace.t >= (act if act is not None else 0.0) - _EPS_T
    band = SETTLE_BAND * trace.V_ref
    settle = None
    if act is not None and len(trace.t) and dev[-1] <= band:
        outside = np.flatnonzero(after & (dev > band))
        settle = float(trace.t[outside[-1] + 1]) if outside.size else float(act)
    final_err = trace.x[-1, :, 0] - trace.dQ_ref[-1]
    return {
        "scenario": trace.scenario,
        "final_errors": [float(v) for v in final_err],
        "settle_time_s": settle,
        "max_voltage_dev_after_activation": float(np.max(dev[after])) if np.any(after) else None,
        "max_voltage_dev": float(np.max(dev)),
        "final_voltage_dev": float(dev[-1]),
        "rho_final": [float(v) for v in trace.rho[-1]],
        "dQ_final": [float(v) for v in trace.dQ[-1]],
        "dQ_ref_final": float(trace.dQ_ref[-1]),
        "cooperative": [bool(v) for v in trace.cooperative],
        "t_end_s": float(trace.t[-1]),
        "diverged": bool(trace.diverged),
    }


def write_trace(trace, directory):
    """Write ``trace_agents.csv`` and ``trace_bus.csv`` into ``directory``."""
    os.makedirs(directory, exist_ok=True)
    agents_path = os.path.join(directory, "trace_agents.csv")
    bus_path = os.path.join(directory, "trace_bus.csv")
    with open(agents_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "agent", "x1", "x2", "rho", "u", "dQ"])
        for k, t in enumerate(trace.t):
            for i in range(trace.x.shape[1]):
                w.writerow([repr(float(t)), i, repr(float(trace.x[k, i, 0])),
                            repr(float(trace.x[k, i, 1])), repr(float(trace.rho[k, i])),
                            repr(float(trace.u[k, i])), repr(float(trace.dQ[k, i]))])
    with open(bus_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "V_pilot", "dQ_ref", "V_lyap"])
        for k, t in enumerate(trace.t):
            lv = trace.V_lyap[k]
            w.writerow([repr(float(t)), repr(float(trace.V_pilot[k])),
                        repr(float(trace.dQ_ref[k])), "" if np.isnan(lv) else repr(float(lv))])
    return agents_path, bus_path


def write_summary(summary, directory):
    os.makedirs(directory, exist_ok=True)
    path = os.path.join(directory, "summary.json")
    with open(path, "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path
