"""Monte Carlo finite elements for a coupled free-flow/porous-media system
with random hydraulic conductivity, accelerated by a shared-factor low-rank
compression of the per-sample stiffness perturbations and Woodbury updates
of a single mean-matrix factorization.
"""

from .mesh import (
    Geometry,
    CoupledMesh,
    InterfaceFrame,
    build_mesh,
    interface_frame,
    write_mesh,
    TAG_INTERIOR_P,
    TAG_GAMMA_P,
    TAG_GAMMA_I,
    TAG_INTERIOR_F,
    TAG_GAMMA_F_WALL,
    TAG_GAMMA_F_BOTTOM,
)
from .quadrature import QuadRule, triangle_rule_7pt, edge_rule_3pt
from .randfield import (
    CovarianceKernel,
    KlExpansion,
    SampleSet,
    TRUNCATION_BOUND,
    nystrom_eigenpairs,
    build_kl,
    draw_samples,
    realize_conductivity,
    save_samples,
    load_samples,
)
from .assembly import (
    PhysicalParams,
    SplitSystem,
    PerturbationAssembler,
    bj_delta,
    assemble_mean,
    assemble_perturbation,
    dirichlet_constraints,
    apply_dirichlet,
    write_coo,
    p2_stiffness,
    p2_mass,
    p1_pressure_mass,
)
from .glram import (
    GramMatrix,
    GlramFactors,
    GlramReport,
    EigensolverError,
    build_gram,
    factorize,
    rmsre,
    rmsre_closed_form,
    energy_ratio,
    select_theta,
    numerical_rank,
    build_report,
    write_report,
)
from .lowrank_solver import (
    MeanFactorization,
    SampleSolution,
    SingularSystemError,
    IllConditionedUpdateError,
    factor_mean,
    pin_pressure_dof,
    solve_sample_smw,
    solve_sample_direct,
    save_solutions,
    load_solutions,
)
from .uq import (
    MomentEstimate,
    MomentAccumulator,
    XNormWeights,
    build_xnorm_weights,
    estimate_moments,
    xnorm,
    xnorm_components,
    prolong,
    cross_mesh_error,
    loglog_slope,
    write_moments,
)
from .cli import RunConfig, RunLedger, ConfigError, main

__version__ = "0.1.0"

__all__ = [
    "Geometry", "CoupledMesh", "InterfaceFrame", "build_mesh",
    "interface_frame", "write_mesh",
    "TAG_INTERIOR_P", "TAG_GAMMA_P", "TAG_GAMMA_I", "TAG_INTERIOR_F",
    "TAG_GAMMA_F_WALL", "TAG_GAMMA_F_BOTTOM",
    "QuadRule", "triangle_rule_7pt", "edge_rule_3pt",
    "CovarianceKernel", "KlExpansion", "SampleSet", "TRUNCATION_BOUND",
    "nystrom_eigenpairs", "build_kl",
    "draw_samples", "realize_conductivity", "save_samples", "load_samples",
    "PhysicalParams", "SplitSystem", "PerturbationAssembler", "bj_delta",
    "assemble_mean", "assemble_perturbation", "dirichlet_constraints",
    "apply_dirichlet", "write_coo", "p2_stiffness", "p2_mass",
    "p1_pressure_mass",
    "GramMatrix", "GlramFactors", "GlramReport", "EigensolverError",
    "build_gram", "factorize", "rmsre", "rmsre_closed_form", "energy_ratio",
    "select_theta", "numerical_rank", "build_report", "write_report",
    "MeanFactorization", "SampleSolution", "SingularSystemError",
    "IllConditionedUpdateError", "factor_mean", "pin_pressure_dof",
    "solve_sample_smw", "solve_sample_direct", "save_solutions",
    "load_solutions",
    "MomentEstimate", "MomentAccumulator", "XNormWeights",
    "build_xnorm_weights", "estimate_moments", "xnorm", "xnorm_components",
    "prolong", "cross_mesh_error", "loglog_slope", "write_moments",
    "RunConfig", "RunLedger", "ConfigError", "main",
    "__version__",
]
