"""Statevector simulation and validation of walk-based approximate counting
on reversible Markov chains, with the collision-counting application and
classical sampling baselines."""

from . import classical, collisions, counting, engine, markov, meter, phase_estimation, walk
from .engine import (
    LinearOperator,
    RegisterLayout,
    StateVector,
    apply,
    basis_state,
    controlled_power,
    inverse_fourier,
    layout,
    measure_distribution,
    reflection_through,
    sample_outcome,
)
from .markov import (
    MarkedSet,
    MarkovChain,
    StationaryDistribution,
    complete_graph_chain,
    johnson_chain,
    marked_fraction,
    marked_set,
    spectral_gap,
    stationary,
    validate,
)
from .meter import QueryMeter, predicted
from .walk import ApproxReflectionConfig, build_walk, geometry, search_operator

__version__ = "0.1.0"
