"""Scenario configuration value types."""
from dataclasses import dataclass, field

from .graph import GraphSchedule
from .plant import PlantConfig

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class ProtocolConfig:
    M: tuple = ((1.0, 0.0), (0.0, 1.0))
    rho0: tuple = None  # defaults to zeros
    adapt: bool = True  # False freezes rho at rho0 (linear closed loop)
    x0: tuple = None  # initial normalized states; only with activation at t=0


@dataclass(frozen=True)
class SolverConfig:
    dt_s: float = 1e-3
    t_end_s: float = 3.0
    seed: int = 0


@dataclass(frozen=True)
class OutputConfig:
    directory: str = "out"
    emit_trace: bool = True
    emit_summary: bool = True


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    plant: PlantConfig
    graph: GraphSchedule
    protocol: ProtocolConfig = field(default_factory=ProtocolConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    activation_t_s: float = 0.0  # None: droop-only operation, controller never engages
    outputs: OutputConfig = field(default_factory=OutputConfig)
    schema_version: int = SCHEMA_VERSION

    @property
    def n_agents(self):
        return self.plant.n_agents

    @property
    def n_steps(self):
        return int(round(self.solver.t_end_s / self.solver.dt_s))

    def rho0(self):
        if self.protocol.rho0 is None:
            return (0.0,) * self.n_agents
        return tuple(self.protocol.rho0)
