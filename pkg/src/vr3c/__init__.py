"""Joint caching, computing and transmission-rate planning for VR viewpoints."""

from .errors import Vr3cError
from .heterogeneous import CccpConfig, SolveReport, build_mmkp, brute_force_mmkp, cccp_solve, multi_start
from .homogeneous import HomogeneousInstance, brute_force_problem2, closed_form, optimal_frequency, sweep
from .instances import HeterogeneousInstance, generate_instance, load_instance
from .lp import LinearProgram, LpStatus, solve_lp
from .model import (DeviceCapability, JointPolicy, ProjectionTask, ServiceRoute, ViewpointParams,
                    average_rate, validate_policy)
from .sim import generate_stream, simulate

__version__ = "0.1.0"

__all__ = [
    "CccpConfig", "DeviceCapability", "HeterogeneousInstance", "HomogeneousInstance", "JointPolicy",
    "LinearProgram", "LpStatus", "ProjectionTask", "ServiceRoute", "SolveReport", "ViewpointParams",
    "Vr3cError", "average_rate", "brute_force_mmkp", "brute_force_problem2", "build_mmkp", "cccp_solve",
    "closed_form", "generate_instance", "generate_stream", "load_instance", "multi_start",
    "optimal_frequency", "simulate", "solve_lp", "sweep", "validate_policy",
]
