"""Multiscale stochastic reaction networks: simulation, time-scale reduction and
coupled finite-difference sensitivities."""

from .errors import (
    FiberNotFinite,
    NoRepresentative,
    NonConvergence,
    NoSecondScale,
    NotErgodic,
    ParseError,
    ReductionError,
    SchemaError,
    SingularSolve,
    TruncationError,
    UnknownSpecies,
)
from .network import (
    ReactionNetwork,
    build_network,
    classify,
    first_timescale,
    heat_shock,
    load_model,
    parse_model,
    propensity,
    serialize_model,
    validate_assumptions,
)
from .oracle import (
    FiberKernel,
    beta_solve,
    coupling_table,
    decay_rate,
    digamma_sample,
    jump_kernel,
    lifted_function,
    mismatch_probability,
    regularity_gap,
    simulate_W,
)
from .output import OutputFunction, parse_output_expr
from .reduction import (
    ReducedNetwork,
    averaged_function,
    enumerate_fiber,
    reduce_iterated,
    reduce_network,
    reduced_propensity,
    second_timescale,
    simulate_reduced,
    stationary_distribution,
)
from .rng import RngStream
from .sensitivity import SensitivityEstimate, cfd_estimate, full_vs_reduced_report, steady_state_sensitivity
from .ssa import empirical_occupation, estimate_expectation, simulate_path

__version__ = "0.1.0"
