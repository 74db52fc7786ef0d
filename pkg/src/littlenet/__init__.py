"""Synchronous stochastic threshold networks (the Little model) with
measure-valued directional-derivative gradient estimation for stationary
costs, exact small-instance oracles, and a desk-scale training harness."""

__version__ = "0.1.0"

from .estimators import (
    EstimatorConfig,
    GradientBatch,
    GradientEstimate,
    mvd_directional_estimate,
    replicate_directional,
    replicate_spmvd,
    replicate_spsa,
    sample_rademacher_direction,
    spmvd_estimate,
    spsa_estimate,
)
from .mvd import (
    DegenerateDirectionError,
    MvdCoefficients,
    MvdTriple,
    NormalizationError,
    directional_c,
    minus_coefficients,
    mvd_triple,
    plus_coefficients,
    q_prefix_marginal,
    q_probability,
    sample_q,
    sample_q_many,
)
from .net import (
    ClampSpec,
    NetworkParams,
    PerturbationDirection,
    apply_step,
    contraction_epsilon,
    local_field,
    sigmoid,
    step,
    transition_probability,
)
from .oracle import (
    ExactDistribution,
    MixtureSpec,
    build_transition_matrix,
    exact_gradient,
    mixture_directional_mvd,
    one_step_directional_derivative,
    stationary_cost,
    stationary_distribution,
    total_variation,
)
from .rng import RNG_ALGORITHM, UniformStream
from .train import (
    LabeledPattern,
    TrainConfig,
    TrainTrajectory,
    error_function,
    init_params,
    load_idx,
    make_synthetic_dataset,
    sgd_train,
)
