"""Weighted regression for experiments contaminated by probabilistic Sybil networks."""

__version__ = "0.1.0"

from sybilreg.errors import *  # noqa: F401,F403
from sybilreg.estimators import (
    ESTIMATOR_NAMES,
    EstimatorKind,
    fit_exclusion,
    fit_inclusion,
    fit_network_sampled,
    fit_observation_sampled,
    fit_threshold,
    fit_weighted,
)
from sybilreg.model import (
    CandidateNetwork,
    Dataset,
    DisjointNetworkSpec,
    FitResult,
    Topology,
    TopologyDistribution,
    spec_to_distribution,
    validate_spec,
)
from sybilreg.regression import ols_fit, weighted_fit
from sybilreg.simulation import SimConfig, SimReport, generate_replication, run_simulation
from sybilreg.weights import (
    ExpectedTopology,
    WeightMatrix,
    expected_topology_disjoint,
    expected_topology_general,
    optimal_weights_closed_form,
    optimal_weights_general,
    roll_up_guaranteed,
    simple_ratio,
)
