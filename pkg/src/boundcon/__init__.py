"""Consensus averaging on graphs with boundary (stubborn) nodes."""

__version__ = "0.1.0"

from .graph import Graph, line_graph, random_graph, neighbors, is_connected, internal_nodes_reach_boundary
from .linalg import (
    SystemMatrix, StateVector, LimitResult, SingularMatrixError, uniform_weights, random_weights,
    closed_form_limit, limit_operator_rows, spectral_radius_bound,
)
from .dynamics import step, iterate_until_convergence, Trajectory
from .periodic import BoundarySchedule, periodic_step, state_at, periodic_limit
from .gossip import PollingModel, PairwiseModel, monte_carlo_mean, expected_system, resolvable_horizon
from .scenarios import DetectionScenario, Hypothesis, run_attack, detection_trials, advertiser_steering
