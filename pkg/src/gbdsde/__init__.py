"""Monte Carlo laboratory for generalized backward doubly stochastic
differential equations and semi-linear SPDEs with nonlinear Neumann boundary
conditions."""

from .grids import TimeGrid
from .paths import IntegralConvention, PathBundle, integrate, sample_paths, time_reverse
from .problems import (
    CoefficientSet,
    HypothesisReport,
    SamplingPlan,
    choose_shift_rate,
    exponential_shift,
    validate_hypotheses,
)
from .geometry import SmoothDomain, ball_domain, interval_domain, make_domain
from .reflection import (
    ReflectedPath,
    moment_diagnostics,
    simulate_reflected,
    skorokhod_bridge_exact,
    skorokhod_oracle_1d,
)
from .flows import (
    BrownianFlow,
    FlowTable,
    flow_derivative_identities,
    flow_growth_constants,
    operator_identity_violations,
    spde_noise_coefficient,
    spde_operator,
    transform_identity_violations,
    transformed_boundary,
    transformed_generator,
)
from .residuals import (
    DriftField,
    NoiseLinearField,
    ResidualReport,
    SumField,
    ito_formula_residual,
    ito_ventzell_residual,
)
from .regression import (
    PiecewiseBinBasis,
    PolynomialBasis,
    conditional_expectation,
    make_basis,
)
from .solver import (
    BdsdeSolution,
    apriori_ratio,
    picard_solve,
    solve_bdsde_markov,
    solve_simple,
    solve_transformed_gbsde,
    stability_gap,
)
from .fields import FieldEstimate, continuity_diagnostic, evaluate_u, pde_oracle_g0

__version__ = "0.1.0"

__all__ = [
    "TimeGrid",
    "PathBundle",
    "IntegralConvention",
    "sample_paths",
    "integrate",
    "time_reverse",
    "CoefficientSet",
    "SamplingPlan",
    "HypothesisReport",
    "validate_hypotheses",
    "exponential_shift",
    "choose_shift_rate",
    "SmoothDomain",
    "interval_domain",
    "ball_domain",
    "make_domain",
    "ReflectedPath",
    "simulate_reflected",
    "skorokhod_oracle_1d",
    "skorokhod_bridge_exact",
    "moment_diagnostics",
    "BrownianFlow",
    "FlowTable",
    "spde_noise_coefficient",
    "flow_derivative_identities",
    "flow_growth_constants",
    "transformed_generator",
    "transformed_boundary",
    "spde_operator",
    "operator_identity_violations",
    "transform_identity_violations",
    "ResidualReport",
    "DriftField",
    "NoiseLinearField",
    "SumField",
    "ito_formula_residual",
    "ito_ventzell_residual",
    "PolynomialBasis",
    "PiecewiseBinBasis",
    "make_basis",
    "conditional_expectation",
    "BdsdeSolution",
    "solve_simple",
    "picard_solve",
    "apriori_ratio",
    "stability_gap",
    "solve_bdsde_markov",
    "solve_transformed_gbsde",
    "FieldEstimate",
    "evaluate_u",
    "pde_oracle_g0",
    "continuity_diagnostic",
]
