"""Scale-free adaptive distributed secondary voltage control for microgrids."""
from .errors import *  # noqa: F401,F403
from .graph import (Event, GraphSchedule, LossProcess, NoiseProcess, adjacency_at, check_bounds,
                    expanded_laplacian, expanded_laplacian_at, laplacian, transmit)
from .linalg import CareSolution, closed_loop_eigenvalues, solve_care
from .plant import PlantConfig, coupled_pilot_voltage, pilot_voltage
from .protocol import ProtocolGain, compute_zeta, denormalize_control, protocol_derivatives
from .scenarios import load_scenario, preset, scenario_from_dict, scenario_to_dict
from .sim import HistoryBuffer, SimTrace, Simulator, lyapunov_monitor, rk4_step, run, summarize
from .stability import FrozenLoop, frequency_sweep, frozen_loops, hurwitz_check

__version__ = "0.1.0"
