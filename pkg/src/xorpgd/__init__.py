"""Constrained stochastic convex optimization with parity-constraint (XOR)
sampled gradients, plus the samplers, benchmark problems and exact oracles
needed to exercise it end to end."""

from .factor_graph import (
    FactorGraph,
    Factor,
    ExactInference,
    UaiParseError,
    EnumerationCapError,
    load_uai,
    to_uai,
    weight,
    partition_function,
    exact_marginals,
    exact_probabilities,
    exact_expectation,
)
from .xor_sampling import (
    DiscretizationConfig,
    DiscretizedWeights,
    SliceSet,
    ParityConstraint,
    OracleResult,
    ExhaustiveOracle,
    GF2BranchOracle,
    XorSamplerConfig,
    SampleResult,
    BatchStats,
    XorSampler,
    discretize,
    zero_tail_config,
    embed_slices,
    draw_parity_constraints,
    oracle_solve,
    xor_sample,
    sample_batch,
)
from .baselines import (
    GibbsConfig,
    BpConfig,
    BpResult,
    gibbs_conditional,
    gibbs_sample,
    bp_marginals,
    bp_sample,
)
from .numerics import NotSpdError, solve_spd, trace_inverse, fd_gradient
from .constraints import (
    NonnegHalfspace,
    Box,
    Polyhedron,
    EqualityAffine,
    ConstraintSet,
    project,
)

__version__ = "0.1.0"
