"""Radial feeder power flow with local volt/VAR control of PV inverters."""

from .control import ControlConfig, LocalMeasurements, Scheme
from .feeder import CaseKind, FeederConfig, FeederModel, Scenario, build_feeder, sample_scenario
from .metrics import CaseMetrics, FrontierPoint, case_metrics, frontier_point, swing
from .solver import (AcState, BranchFlowState, ConvergenceError, PowerFlowError, SingularJacobianError,
                     SolverOptions, fixed_point_reference, solve_ac, solve_lindistflow)

__version__ = "0.1.0"
