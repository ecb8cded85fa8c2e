import functools
import time

import numpy as np
import pytest

from gridflock import scenarios
from gridflock.sim import run

SQ3 = np.sqrt(3.0)
P_UNIT = np.array([[SQ3, 1.0], [1.0, SQ3]])


RUNTIME_S = {}


@functools.lru_cache(maxsize=None)
def preset_trace(name):
    """Cached run of a preset (or ``ring<N>``) shared by the whole session."""
    if name.startswith("ring"):
        cfg = scenarios.scenario_from_dict(scenarios.ring_document(int(name[4:])))
    else:
        cfg = scenarios.preset(name)
    t0 = time.perf_counter()
    trace = run(cfg)
    RUNTIME_S[name] = time.perf_counter() - t0
    return cfg, trace


@pytest.fixture(scope="session")
def traces():
    return preset_trace


def oracle_document(dt=1e-3, rho=(10.0, 20.0, 15.0), t_end=1.0):
    """Frozen-gain, zero-delay, three-agent linear closed loop with x^r = 0."""
    return {
        "name": "oracle3",
        "plant": {"n_agents": 3, "alpha": [1.0, 2.0, 0.5], "sensitivity": [0.0, 0.0, 0.0],
                  "V_ref": 1.0, "Kp": 0.0, "Ki": 0.0, "V_open": [[0.0, 1.0]]},
        "graph": {"edges": [[0, 1, 1.0, 0.0], [1, 2, 2.0, 0.0]], "reference_flags": [1, 0, 0]},
        "protocol": {"rho0": list(rho), "adapt": False,
                     "x0": [[1.0, 0.0], [-2.0, 1.0], [0.5, -0.5]]},
        "solver": {"dt_s": dt, "t_end_s": t_end},
        "activation_t_s": 0.0,
    }


ORACLE_LBAR = np.array([[2.0, -1.0, 0.0], [-1.0, 3.0, -2.0], [0.0, -2.0, 2.0]])
