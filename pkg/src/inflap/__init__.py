"""First eigenpairs of the discrete p-Laplacian and their large-p limit checks."""
from .asymptotics import (
    DEFAULT_P_LIST, SweepResult, build_verdict, calibrate_bound_constant,
    concentration_profile, lambda_infinity_estimate, minima_convergence_check,
    run_asymptotic_study, uinf_bound_check,
)
from .eigensolver import (
    EigenPair, SolverConfig, continuation_sweep, pde_residual, rayleigh_quotient,
    seed_field, solve_first_eigenpair,
)
from .exceptions import (
    ConfigError, DegenerateMeasure, DegenerateSpec, EmptyRaySet, FeatureTooFine,
    InfeasibleMarginals, InflapError, InsufficientRows, MaxItersExceeded, NonConvergence,
    NotInterior, ZeroField,
)
from .geometry import (
    DistanceField, DomainGrid, DomainSpec, ScalarField, boundary_projection, build_domain,
    distance_to_boundary, inradius,
)
from .measures import (
    DiscreteMeasure, DualityReport, MeasureTriple, VectorMeasure, derived_measures,
    divergence_residual, optimality_surrogate, primal_dual_values,
)
from .transport import (
    RaySet, TransportPlan, max_w1_over_sources, ray_profile_check, solve_discrete_ot,
    transport_rays, w1_to_boundary,
)

__version__ = "0.1.0"

__all__ = [
    "DEFAULT_P_LIST", "ConfigError", "DegenerateMeasure", "DegenerateSpec", "DiscreteMeasure",
    "DistanceField", "DomainGrid", "DomainSpec", "DualityReport", "EigenPair", "EmptyRaySet",
    "FeatureTooFine", "InfeasibleMarginals", "InflapError", "InsufficientRows",
    "MaxItersExceeded", "MeasureTriple", "NonConvergence", "NotInterior", "RaySet",
    "ScalarField", "SolverConfig", "SweepResult", "TransportPlan", "VectorMeasure", "ZeroField",
    "boundary_projection", "build_domain", "build_verdict", "calibrate_bound_constant",
    "concentration_profile", "continuation_sweep", "derived_measures", "distance_to_boundary",
    "divergence_residual", "inradius", "lambda_infinity_estimate", "max_w1_over_sources",
    "minima_convergence_check", "optimality_surrogate", "pde_residual", "primal_dual_values",
    "ray_profile_check", "rayleigh_quotient", "run_asymptotic_study", "seed_field",
    "solve_discrete_ot", "solve_first_eigenpair", "transport_rays", "uinf_bound_check",
    "w1_to_boundary",
]
