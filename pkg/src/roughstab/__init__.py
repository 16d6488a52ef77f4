"""Rough differential equations driven by fractional Brownian motion.

Grid-sampled rough paths and their p-variation norms, controlled-path
integration, a controlled Euler solver with pathwise a priori bounds, and
diagnostics for random pullback attractors.
"""

from .attractor import (
    AttractorReport,
    StabilityParams,
    absorbing_radius,
    criterion_check,
    discrete_gronwall,
    equilibrium_drift,
    forward_experiment,
    gamma_estimate,
    gh_weights,
    kappa,
    lambda_capital,
    pullback_experiment,
    semigroup_constants,
)
from .errors import (
    ConfigError,
    DimensionError,
    DivergenceError,
    DomainError,
    InputError,
    RoughStabError,
    SamplerError,
    UnsupportedError,
)
from .gubinelli import (
    ControlledPath,
    SmoothFunction,
    affine_function,
    compose,
    constant_function,
    cosine_function,
    remainder,
    rough_integral,
    sewing_constant,
    sine_function,
)
from .rde import (
    LipschitzFunction,
    RdeProblem,
    Solution,
    apriori_bounds,
    difference_solve,
    matrix_semigroup,
    solve,
    solve_affine,
    variation_of_constants_residual,
)
from .rough_core import (
    FbmSpec,
    RoughPath,
    TimeGrid,
    chen_defect,
    increment,
    lift_piecewise_linear,
    sample_fbm,
    sample_fbm_rough,
    wiener_shift,
)
from .variation import (
    GreedyPartition,
    NormReport,
    default_gamma,
    greedy_times,
    holder_norm,
    p_variation,
    q_variation_second_level,
    rough_pvar_norm,
)

__version__ = "0.1.0"
