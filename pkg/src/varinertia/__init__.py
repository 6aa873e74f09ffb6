"""Simulation and certification tools for power networks with time-varying inertia."""

from .analysis import (
    Equilibrium,
    EquilibriumError,
    GammaPoint,
    LyapunovReport,
    RunClassification,
    check_dissipation,
    classify_run,
    equilibrium_residual,
    find_equilibrium,
    gamma_point,
    lyapunov_series,
    lyapunov_value,
    overshoot_ratio,
    peak_sequence,
)
from .grid import BusParams, GraphError, Line, NetworkGraph, build_incidence, power_flow_linear, power_flow_nonlinear
from .inertia import (
    Assumption4Report,
    BangBangInertia,
    ConstantInertia,
    DestabilizerInertia,
    InertiaPolicy,
    PiecewiseLinearInertia,
    RandomizedInertia,
    RateLimitedInertia,
    bang_bang,
    check_assumption4,
    randomized_setpoint_update,
    rate_limited_rhs,
)
from .network import PowerNetwork
from .passivity import (
    PassivityCertificate,
    PassivityError,
    bisect_rho,
    kyp_block,
    max_inertia_rate,
    storage_matrix,
    strictness_constant,
    verify_rho,
)
from .simulator import (
    Disturbance,
    SimConfig,
    SimulationAbort,
    SystemState,
    Trajectory,
    initial_state,
    integrate,
    integrate_fixed_bus,
    integrate_many,
    rhs,
)
from .supply import (
    FirstOrderSupply,
    LtiSupply,
    SecondOrderSupply,
    TurbineGovernor,
    static_characteristic,
    supply_output,
    supply_rhs,
    tf_to_state_space,
)

__version__ = "0.1.0"

__all__ = [
    "Equilibrium",
    "EquilibriumError",
    "GammaPoint",
    "LyapunovReport",
    "RunClassification",
    "check_dissipation",
    "classify_run",
    "equilibrium_residual",
    "find_equilibrium",
    "gamma_point",
    "lyapunov_series",
    "lyapunov_value",
    "overshoot_ratio",
    "peak_sequence",
    "BusParams",
    "GraphError",
    "Line",
    "NetworkGraph",
    "build_incidence",
    "power_flow_linear",
    "power_flow_nonlinear",
    "Assumption4Report",
    "BangBangInertia",
    "ConstantInertia",
    "DestabilizerInertia",
    "InertiaPolicy",
    "PiecewiseLinearInertia",
    "RandomizedInertia",
    "RateLimitedInertia",
    "bang_bang",
    "check_assumption4",
    "randomized_setpoint_update",
    "rate_limited_rhs",
    "PowerNetwork",
    "PassivityCertificate",
    "PassivityError",
    "bisect_rho",
    "kyp_block",
    "max_inertia_rate",
    "storage_matrix",
    "strictness_constant",
    "verify_rho",
    "Disturbance",
    "SimConfig",
    "SimulationAbort",
    "SystemState",
    "Trajectory",
    "initial_state",
    "integrate",
    "integrate_fixed_bus",
    "integrate_many",
    "rhs",
    "FirstOrderSupply",
    "LtiSupply",
    "SecondOrderSupply",
    "TurbineGovernor",
    "static_characteristic",
    "supply_output",
    "supply_rhs",
    "tf_to_state_space",
]
