"""Simulation and certification of SICNNs with functional response on a
generalized piecewise constant argument."""
from .activation import ActivationSpec, HistorySegment, evaluate, validate_bounds
from .analysis import (
    CertificationError,
    bounded_solution,
    pi_residual,
    stability_envelope,
    translation_scan,
)
from .integrator import IvpSetup, SolverOptions, Trajectory, residual, solve_interval, solve_ivp
from .network import (
    InputSignal,
    NetworkSpec,
    TrigTerm,
    check_conditions,
    derived_constants,
    neighborhood,
)
from .schedule import GammaSchedule, ScheduleRangeError

__version__ = "0.1.0"
