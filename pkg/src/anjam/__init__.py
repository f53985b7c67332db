"""Accumulate-and-jam wireless-powered cooperative jamming: analysis and simulation."""

__version__ = "0.1.0"

from .channels import RngStream, SystemParams, Topology, dbm_to_watts, watts_to_dbm
from .energy_chain import (
    ChainError,
    EnergyStorageSpec,
    ReducibleChainError,
    StationaryDistribution,
    TransitionMatrix,
    fd_stationary,
    fd_transition_matrix,
    hd_stationary,
    hd_transition_matrix,
    infinite_capacity_ready_prob,
    stationary_distribution,
)
from .mc_sim import SimulationResult, TrialStats, estimate, sample_transitions, simulate, simulate_fd, simulate_hd
from .secrecy import (
    JammingSearch,
    SecrecyReport,
    Variant,
    optimal_jamming_power,
    prob_nonzero_secrecy,
    report,
    secrecy_outage,
)
from .specfun import ConvergenceError, DomainError, SpecialFunctionError, exp_integral_ei, marcum_q

__all__ = [name for name in dir() if not name.startswith("_")]
