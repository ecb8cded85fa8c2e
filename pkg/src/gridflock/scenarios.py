"""Scenario files: parsing, validation, canonical serialization and presets.

Scenario files are JSON. Agent indices are zero-based. A minimal file::

    {"schema_version": 1,
     "plant": {"n_agents": 1, "alpha": [1.0], "sensitivity": [0.0],
               "V_ref": 1.0, "Kp": 0.0, "Ki": 0.0, "V_open": [[0.0, 1.0]]},
     "graph": {"reference_flags": [1]}}

Missing sections take defaults (``M = I``, ``rho0 = 0``, ``dt = 1e-3 s``,
loss duty 0.5, activation at ``t = 0``). ``"activation_t_s": null`` runs
the droop layer alone.
"""
import copy
import json
import math

import numpy as np

from .config import SCHEMA_VERSION, OutputConfig, ProtocolConfig, ScenarioConfig, SolverConfig
from .errors import GridMisaligned, ParseError, UnknownPreset, ValidationError
from .graph import EVENT_KINDS, NOISE_TARGETS, Event, GraphSchedule, LossProcess, NoiseProcess
from .linalg import is_positive_definite
from .plant import PlantConfig

_GRID_TOL = 1e-9


def _on_grid(t, dt):
    k = t / dt
    return abs(k - round(k)) <= _GRID_TOL * max(1.0, abs(k))


def _require(cond, path, msg):
    if not cond:
        raise ValidationError(path, msg)


def _num(value, path, minimum=None, strict=False):
    _require(isinstance(value, (int, float)) and not isinstance(value, bool)
             and math.isfinite(value), path, f"expected a finite number, got {value!r}")
    if minimum is not None:
        ok = value > minimum if strict else value >= minimum
        _require(ok, path, f"must be {'>' if strict else '>='} {minimum}, got {value!r}")
    return float(value)


def _vector(value, n, path, minimum=None, strict=False):
    _require(isinstance(value, list) and len(value) == n, path,
             f"expected a list of {n} numbers")
    return tuple(_num(v, f"{path}[{k}]", minimum, strict) for k, v in enumerate(value))


def _agent(value, n, path):
    _require(isinstance(value, int) and not isinstance(value, bool) and 0 <= value < n,
             path, f"agent index must be an integer in [0, {n})")
    return value


def _edge(value, n, path):
    _require(isinstance(value, list) and len(value) == 2, path, "edge must be [i, j]")
    i = _agent(value[0], n, f"{path}[0]")
    j = _agent(value[1], n, f"{path}[1]")
    _require(i != j, path, "self-loops are not allowed")
    return (i, j)


def _grid(t, dt, path):
    if not _on_grid(t, dt):
        raise GridMisaligned(path, f"time {t!r} is not an integer multiple of dt={dt!r}")


# -- parsing ----------------------------------------------------------------


def _parse_solver(d):
    d = d or {}
    dt = _num(d.get("dt_s", 1e-3), "solver.dt_s", 0.0, strict=True)
    t_end = _num(d.get("t_end_s", 3.0), "solver.t_end_s", 0.0, strict=True)
    seed = d.get("seed", 0)
    _require(isinstance(seed, int) and not isinstance(seed, bool) and seed >= 0,
             "solver.seed", "seed must be a nonnegative integer")
    _grid(t_end, dt, "solver.t_end_s")
    return SolverConfig(dt_s=dt, t_end_s=t_end, seed=seed)


def _parse_plant(d, dt):
    _require(isinstance(d, dict), "plant", "missing plant section")
    n = d.get("n_agents")
    _require(isinstance(n, int) and not isinstance(n, bool) and n >= 1, "plant.n_agents",
             "must be an integer >= 1")
    alpha = droop = None
    if "droop" in d:
        droop = _vector(d["droop"], n, "plant.droop", 0.0, strict=True)
    if "alpha" in d:
        alpha = _vector(d["alpha"], n, "plant.alpha", 0.0, strict=True)
    _require(alpha is not None or droop is not None, "plant.alpha",
             "give participation factors or droop gains")
    if alpha is None:
        alpha = tuple(1.0 / m for m in droop)
    elif droop is not None:
        for k, (a, m) in enumerate(zip(alpha, droop)):
            _require(abs(a * m - 1.0) <= 1e-12, f"plant.alpha[{k}]",
                     f"alpha * droop = {a * m!r}, expected 1")
    sens = _vector(d.get("sensitivity"), n, "plant.sensitivity", 0.0)
    V_ref = _num(d.get("V_ref"), "plant.V_ref", 0.0, strict=True)
    Kp = _num(d.get("Kp", 0.0), "plant.Kp")
    Ki = _num(d.get("Ki", 0.0), "plant.Ki")
    vo = d.get("V_open")
    _require(isinstance(vo, list) and len(vo) >= 1, "plant.V_open",
             "expected a list of [t_s, volts] pairs")
    pts = []
    for k, p in enumerate(vo):
        path = f"plant.V_open[{k}]"
        _require(isinstance(p, list) and len(p) == 2, path, "expected [t_s, volts]")
        t = _num(p[0], f"{path}[0]", 0.0)
        _grid(t, dt, f"{path}[0]")
        _require(not pts or t > pts[-1][0], f"{path}[0]", "breakpoints must increase")
        pts.append((t, _num(p[1], f"{path}[1]")))
    return PlantConfig(n_agents=n, alpha=alpha, sensitivity=sens, V_ref=V_ref, Kp=Kp, Ki=Ki,
                       V_open=tuple(pts), droop=droop)


def _parse_graph(d, n, dt, seed):
    _require(isinstance(d, dict), "graph", "missing graph section")
    edges = []
    seen = set()
    for k, e in enumerate(d.get("edges", [])):
        path = f"graph.edges[{k}]"
        _require(isinstance(e, list) and len(e) in (3, 4), path,
                 "expected [i, j, weight, delay_s]")
        i, j = _edge(e[:2], n, path)
        key = (min(i, j), max(i, j))
        _require(key not in seen, path, f"duplicate edge {key}")
        seen.add(key)
        w = _num(e[2], f"{path}[2]", 0.0, strict=True)
        tau = _num(e[3], f"{path}[3]", 0.0) if len(e) == 4 else 0.0
        _require(tau == 0.0 or tau >= dt - _GRID_TOL, f"{path}[3]",
                 f"nonzero delay must be >= dt={dt!r}")
        edges.append((i, j, w, tau))
    flags = d.get("reference_flags")
    _require(isinstance(flags, list) and len(flags) == n
             and all(f in (0, 1) and not isinstance(f, bool) for f in flags),
             "graph.reference_flags", f"expected {n} entries of 0 or 1")
    _require(any(f == 1 for f in flags), "graph.reference_flags",
             "at least one agent must hold the reference")

    events = []
    for k, ev in enumerate(d.get("events", [])):
        path = f"graph.events[{k}]"
        _require(isinstance(ev, dict), path, "expected {t_s, kind, params}")
        t = _num(ev.get("t_s"), f"{path}.t_s", 0.0)
        _grid(t, dt, f"{path}.t_s")
        _require(not events or t >= events[-1].t_s, f"{path}.t_s", "events must be time-ordered")
        kind = ev.get("kind")
        _require(kind in EVENT_KINDS, f"{path}.kind", f"expected one of {EVENT_KINDS}")
        p = ev.get("params", {})
        _require(isinstance(p, dict), f"{path}.params", "expected an object")
        params = {}
        if kind in ("remove_edge", "add_edge", "reweight"):
            params["edge"] = list(_edge(p.get("edge"), n, f"{path}.params.edge"))
            if kind != "remove_edge":
                params["weight"] = _num(p.get("weight"), f"{path}.params.weight", 0.0, strict=True)
            if kind == "add_edge" and "delay_s" in p:
                tau = _num(p["delay_s"], f"{path}.params.delay_s", 0.0)
                _require(tau == 0.0 or tau >= dt - _GRID_TOL, f"{path}.params.delay_s",
                         f"nonzero delay must be >= dt={dt!r}")
                params["delay_s"] = tau
        else:
            params["agent"] = _agent(p.get("agent"), n, f"{path}.params.agent")
            if kind == "set_flag":
                v = p.get("value")
                _require(v in (0, 1) and not isinstance(v, bool), f"{path}.params.value",
                         "flag must be 0 or 1")
                params["value"] = v
        events.append(Event(t, kind, params))

    loss = []
    for k, lp in enumerate(d.get("loss", [])):
        path = f"graph.loss[{k}]"
        _require(isinstance(lp, dict), path, "expected an object")
        edge = _edge(lp.get("edge"), n, f"{path}.edge")
        period = _num(lp.get("period_s", 0.1), f"{path}.period_s", 0.0, strict=True)
        duty = _num(lp.get("duty", 0.5), f"{path}.duty", 0.0, strict=True)
        _require(duty <= 1.0, f"{path}.duty", "duty must be <= 1")
        phase = _num(lp.get("phase_s", 0.0), f"{path}.phase_s")
        for name, val in (("period_s", period), ("phase_s", phase)):
            _grid(val, dt, f"{path}.{name}")
        _grid(duty * period, dt, f"{path}.duty")
        loss.append(LossProcess(edge, period, duty, phase))

    noise = []
    all_edges = [(i, j) for i, j, _, _ in edges]
    for ev in events:
        if ev.kind == "add_edge":
            i, j = ev.params["edge"]
            if (i, j) not in all_edges and (j, i) not in all_edges:
                all_edges.append((i, j))
    for k, nz in enumerate(d.get("noise", [])):
        path = f"graph.noise[{k}]"
        _require(isinstance(nz, dict), path, "expected an object")
        amp = _num(nz.get("amplitude", 0.1), f"{path}.amplitude", 0.0)
        _require(amp < 1.0, f"{path}.amplitude", "amplitude must be < 1")
        s = nz.get("seed", seed)
        _require(isinstance(s, int) and not isinstance(s, bool) and s >= 0, f"{path}.seed",
                 "seed must be a nonnegative integer")
        target = nz.get("edge", "all")
        targets = all_edges if target == "all" else [_edge(target, n, f"{path}.edge")]
        for e in targets:
            noise.append(NoiseProcess(tuple(e), amp, s))
    keys = [tuple(sorted(nz.edge)) for nz in noise]
    _require(len(keys) == len(set(keys)), "graph.noise", "an edge has more than one noise process")
    target = d.get("noise_target", "weight")
    _require(target in NOISE_TARGETS, "graph.noise_target", f"expected one of {NOISE_TARGETS}")
    return GraphSchedule(n_agents=n, edges=tuple(edges), reference_flags=tuple(flags),
                         events=tuple(events), loss=tuple(loss), noise=tuple(noise),
                         noise_target=target)


def _parse_protocol(d, n):
    d = d or {}
    M = d.get("M", [[1.0, 0.0], [0.0, 1.0]])
    _require(isinstance(M, list) and len(M) == 2 and all(isinstance(r, list) and len(r) == 2
                                                         for r in M),
             "protocol.M", "expected a 2x2 matrix")
    M = tuple(tuple(_num(v, f"protocol.M[{a}][{b}]") for b, v in enumerate(r))
              for a, r in enumerate(M))
    Mm = np.array(M)
    _require(np.array_equal(Mm, Mm.T), "protocol.M", "M must be symmetric")
    _require(is_positive_definite(Mm), "protocol.M", "M must be positive definite")
    rho0 = d.get("rho0")
    rho0 = (0.0,) * n if rho0 is None else _vector(rho0, n, "protocol.rho0", 0.0)
    adapt = d.get("adapt", True)
    _require(isinstance(adapt, bool), "protocol.adapt", "expected true or false")
    x0 = d.get("x0")
    if x0 is not None:
        _require(isinstance(x0, list) and len(x0) == n, "protocol.x0",
                 f"expected {n} two-element states")
        x0 = tuple(_vector(xi, 2, f"protocol.x0[{k}]") for k, xi in enumerate(x0))
    return ProtocolConfig(M=M, rho0=rho0, adapt=adapt, x0=x0)


def scenario_from_dict(d):
    """Validate a decoded JSON document and build a :class:`ScenarioConfig`."""
    _require(isinstance(d, dict), "$", "scenario must be a JSON object")
    ver = d.get("schema_version", SCHEMA_VERSION)
    _require(ver == SCHEMA_VERSION, "schema_version", f"unsupported version {ver!r}")
    solver = _parse_solver(d.get("solver"))
    dt = solver.dt_s
    plant = _parse_plant(d.get("plant"), dt)
    n = plant.n_agents
    try:
        graph = _parse_graph(d.get("graph"), n, dt, solver.seed)
    except ValueError as exc:
        raise ValidationError("graph", str(exc)) from exc
    protocol = _parse_protocol(d.get("protocol"), n)
    act = d.get("activation_t_s", 0.0)
    if act is not None:
        act = _num(act, "activation_t_s", 0.0)
        _grid(act, dt, "activation_t_s")
        _require(solver.t_end_s > act, "solver.t_end_s", "t_end must exceed activation time")
    if protocol.x0 is not None:
        _require(act == 0.0, "protocol.x0", "initial states require activation at t = 0")
    out = d.get("outputs") or {}
    outputs = OutputConfig(directory=str(out.get("directory", "out")),
                           emit_trace=bool(out.get("emit_trace", True)),
                           emit_summary=bool(out.get("emit_summary", True)))
    name = d.get("name", "scenario")
    _require(isinstance(name, str), "name", "expected a string")
    return ScenarioConfig(name=name, plant=plant, graph=graph, protocol=protocol, solver=solver,
                          activation_t_s=act, outputs=outputs, schema_version=ver)


def scenario_to_dict(cfg):
    """Canonical JSON-ready form; ``scenario_from_dict`` inverts it exactly."""
    p = cfg.plant
    plant = {"n_agents": p.n_agents, "alpha": list(p.alpha), "sensitivity": list(p.sensitivity),
             "V_ref": p.V_ref, "Kp": p.Kp, "Ki": p.Ki, "V_open": [list(v) for v in p.V_open]}
    if p.droop is not None:
        plant["droop"] = list(p.droop)
    g = cfg.graph
    graph = {
        "edges": [[i, j, w, tau] for i, j, w, tau in g.edges],
        "reference_flags": list(g.reference_flags),
        "events": [{"t_s": e.t_s, "kind": e.kind, "params": copy.deepcopy(e.params)}
                   for e in g.events],
        "loss": [{"edge": list(lp.edge), "period_s": lp.period, "duty": lp.duty,
                  "phase_s": lp.phase} for lp in g.loss],
        "noise": [{"edge": list(nz.edge), "amplitude": nz.amplitude, "seed": nz.seed}
                  for nz in g.noise],
        "noise_target": g.noise_target,
    }
    pr = cfg.protocol
    protocol = {"M": [list(r) for r in pr.M], "adapt": pr.adapt,
                "rho0": list(cfg.rho0())}
    if pr.x0 is not None:
        protocol["x0"] = [list(x) for x in pr.x0]
    s = cfg.solver
    return {
        "schema_version": cfg.schema_version,
        "name": cfg.name,
        "plant": plant,
        "graph": graph,
        "protocol": protocol,
        "solver": {"dt_s": s.dt_s, "t_end_s": s.t_end_s, "seed": s.seed},
        "activation_t_s": cfg.activation_t_s,
        "outputs": {"directory": cfg.outputs.directory, "emit_trace": cfg.outputs.emit_trace,
                    "emit_summary": cfg.outputs.emit_summary},
    }


def dumps_scenario(cfg):
    return json.dumps(scenario_to_dict(cfg), indent=2, sort_keys=True) + "\n"


def write_scenario(cfg, path):
    with open(path, "w") as fh:
        fh.write(dumps_scenario(cfg))


def loads_scenario(text):
    try:
        d = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"malformed JSON: {exc}") from exc
    return scenario_from_dict(d)


def load_scenario(path):
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ParseError(f"cannot read scenario file {path}: {exc}") from exc
    return loads_scenario(text)


def apply_overrides(d, seed=None, dt=None, t_end=None):
    """Return a copy of the scenario document with solver overrides applied."""
    d = copy.deepcopy(d)
    solver = d.setdefault("solver", {})
    if seed is not None:
        solver["seed"] = seed
    if dt is not None:
        solver["dt_s"] = dt
    if t_end is not None:
        solver["t_end_s"] = t_end
    return d


# -- presets ----------------------------------------------------------------
# Electrical bases of the surrogate plant. None of these are published
# values except the droop gain and the event timings; see README.

DROOP_GAIN = 7e-6  # V/Var
V_REF = 630.0  # V
SAG_V = 10.0  # open-loop pilot-voltage drop caused by the load step
SENS_SHARE = 0.25  # s_i * alpha_i per agent
LOAD_STEP_T = 0.5
ACTIVATION_T = 0.55
T_END = 6.0
KP = -1.0
KI = -20.0
M_DESIGN = [[1000.0, 0.0], [0.0, 1.0]]
SEED = 2024


def _ring_edges(n, delay=0.0):
    return [[i, (i + 1) % n, 1.0, delay] for i in range(n)] if n > 2 else \
        ([[0, 1, 1.0, delay]] if n == 2 else [])


def _base_doc(name, n=4, droop=None):
    droop = list(droop) if droop is not None else [DROOP_GAIN] * n
    return {
        "schema_version": SCHEMA_VERSION,
        "name": name,
        "plant": {
            "n_agents": n,
            "droop": droop,
            "sensitivity": [SENS_SHARE * DROOP_GAIN] * n,
            "V_ref": V_REF,
            "Kp": KP,
            "Ki": KI,
            "V_open": [[0.0, V_REF], [LOAD_STEP_T, V_REF - SAG_V]],
        },
        "graph": {
            "edges": _ring_edges(n),
            "reference_flags": [1] + [0] * (n - 1),
            "events": [],
            "loss": [],
            "noise": [],
        },
        "protocol": {"M": copy.deepcopy(M_DESIGN)},
        "solver": {"dt_s": 1e-3, "t_end_s": T_END, "seed": SEED},
        "activation_t_s": ACTIVATION_T,
    }


def _scenario1():
    d = _base_doc("scenario1")
    d["activation_t_s"] = None
    d["solver"]["t_end_s"] = 2.0
    return d


def _scenario2(n=4, name="scenario2"):
    d = _base_doc(name, n)
    d["graph"]["loss"] = [{"edge": [1, 2], "period_s": 0.1, "duty": 0.5, "phase_s": 0.0}]
    return d


def _scenario3():
    droop = [DROOP_GAIN] * 3 + [0.8 * DROOP_GAIN]
    d = _base_doc("scenario3", droop=droop)
    d["graph"]["loss"] = [{"edge": [1, 2], "period_s": 0.1, "duty": 0.5, "phase_s": 0.0}]
    d["graph"]["events"] = [{"t_s": 0.8, "kind": "remove_edge", "params": {"edge": [1, 2]}}]
    d["graph"]["noise"] = [{"edge": "all", "amplitude": 0.1}]
    return d


def _scenario4():
    d = _scenario2(name="scenario4")
    d["solver"]["t_end_s"] = 8.0
    d["graph"]["edges"] = _ring_edges(4, delay=0.02)
    d["graph"]["events"] = [{"t_s": 0.6, "kind": "isolate", "params": {"agent": 2}}]
    return d


PRESETS = {
    "scenario1": (_scenario1, "droop control only; load step at 0.5 s"),
    "scenario2": (_scenario2, "ring graph, lossy link 2-3 toggling every 0.1 s, controller at 0.55 s"),
    "scenario3": (_scenario3, "scenario 2 plus link 2-3 failure at 0.8 s, +-10% noise, m4 = 0.8 m1"),
    "scenario4": (_scenario4, "scenario 2 plus 20 ms delays and isolation of agent 3 at 0.6 s"),
}


def preset_document(name):
    try:
        build = PRESETS[name][0]
    except KeyError:
        raise UnknownPreset(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
    return build()


def preset(name):
    return scenario_from_dict(preset_document(name))


def ring_document(n, name=None):
    """Scenario-2 conditions on an ``n``-agent ring with unchanged per-agent parameters."""
    return _scenario2(n=n, name=name or f"ring{n}")
