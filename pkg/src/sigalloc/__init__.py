"""Signalling-based resource allocation under Markov population dynamics.

A simulator and analysis toolkit: costs and smoothed signals drive agent
choices, populations evolve on a Markov chain built from transport
distances, and average-contractivity certificates plus Monte-Carlo
ensembles measure convergence in distribution.
"""

from .analysis import (
    ContractivityReport,
    certify,
    convergence_diagnostic,
    empirical_lipschitz,
    kappa_budget,
    lipschitz_bound,
    q_condition,
    wasserstein_1d_samples,
)
from .core import (
    PolicySet,
    Signal,
    SmoothingParams,
    aggregate_demand,
    apply_population_map,
    choose_resource,
    initial_signal,
    social_cost,
    step,
    update_signal,
)
from .costs import CostFunction, eval_cost
from .dynamics import (
    PopulationIndex,
    StationaryDistribution,
    TransitionMatrix,
    build_matrix_emd,
    build_matrix_timeofday,
    enumerate_populations,
    population_count,
    sample_next,
    stationary,
)
from .engine import Ensemble, Scenario, Trajectory, grid_optimum, run_ensemble, run_path
from .errors import (
    CapacityError,
    CertificateError,
    EvaluationError,
    ReducibleChainError,
    SigallocError,
    ValidationError,
)
from .scenario import load_scenario, parse_scenario
from .transport import (
    GroundMetric,
    TransportPlan,
    emd,
    emd_substitution_closed,
    emd_wasserstein_1d,
    ground_matrix,
)

__version__ = "0.1.0"
