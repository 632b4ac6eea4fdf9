"""Spectral de Rham complex on flat tori with Hodge operators, Sobolev and
Bochner norms, and Galerkin solvers for linearized and quadratic parabolic
form equations."""

from .hodge import (
    HodgeDecomposition,
    helmholtz_project,
    hodge_decompose,
    recover_pressure,
)
from .nonlinear import (
    PRESETS,
    BilinearMap,
    ContinuityReport,
    NonlinearityConfig,
    bilinear_term,
    continuity_bound_survey,
    convective_term,
    get_preset,
    half_dot_map,
    interior_product_map,
    load_bilinear_map,
    navier_stokes_config,
    nonlinear_term,
    save_bilinear_map,
    trilinear_form,
    zero_config,
)
from .norms import (
    BochnerIndex,
    GronwallReport,
    InterpolationReport,
    SobolevIndex,
    TimeSeriesSolution,
    bochner_norm,
    gagliardo_nirenberg_check,
    gronwall_envelope,
    sobolev_norm,
    split_sobolev_norm,
)
from .solver import (
    GalerkinBasis,
    GalerkinStudy,
    LinearizedOperator,
    NewtonResult,
    SolverConfig,
    SolverDivergenceError,
    apply_inverse,
    assemble_linearized,
    build_basis,
    discrete_forward_data,
    discrete_linearized_data,
    discrete_residual,
    energy_identity_residual,
    format_solver_config,
    galerkin_convergence_study,
    lions_identity_residual,
    load_solution,
    load_solver_config,
    newton_local_inverse,
    parse_solver_config,
    project_state,
    save_solution,
    solve_linearized,
    solve_nonlinear,
)
from .spectral import (
    ConsistencyError,
    DeRhamComplex,
    FieldIntegrityError,
    FormField,
    SpectralGrid,
    codifferential,
    dealias,
    exterior_derivative,
    fractional_power,
    from_physical,
    harmonic_projection,
    hodge_laplacian,
    inner_product,
    l2_norm,
    load_field,
    lp_norm,
    parametrix,
    random_form,
    remove_harmonic,
    resample,
    save_field,
    split_derivative,
    to_physical,
)
from .verify import (
    CheckRecord,
    ExperimentSpec,
    GNSurveyReport,
    VerificationReport,
    emit_plot_data,
    gn_ratio_survey,
    run_experiment,
    taylor_green_pressure_field,
    taylor_green_state,
    thread_count,
    verify_all,
    write_report,
)

__all__ = [
    "BilinearMap",
    "BochnerIndex",
    "CheckRecord",
    "ConsistencyError",
    "ContinuityReport",
    "DeRhamComplex",
    "ExperimentSpec",
    "FieldIntegrityError",
    "FormField",
    "GNSurveyReport",
    "GalerkinBasis",
    "GalerkinStudy",
    "GronwallReport",
    "HodgeDecomposition",
    "InterpolationReport",
    "LinearizedOperator",
    "NewtonResult",
    "NonlinearityConfig",
    "PRESETS",
    "SobolevIndex",
    "SolverConfig",
    "SolverDivergenceError",
    "SpectralGrid",
    "TimeSeriesSolution",
    "VerificationReport",
    "apply_inverse",
    "assemble_linearized",
    "bilinear_term",
    "bochner_norm",
    "build_basis",
    "codifferential",
    "continuity_bound_survey",
    "convective_term",
    "dealias",
    "discrete_forward_data",
    "discrete_linearized_data",
    "discrete_residual",
    "emit_plot_data",
    "energy_identity_residual",
    "exterior_derivative",
    "format_solver_config",
    "fractional_power",
    "from_physical",
    "gagliardo_nirenberg_check",
    "galerkin_convergence_study",
    "get_preset",
    "gn_ratio_survey",
    "gronwall_envelope",
    "half_dot_map",
    "harmonic_projection",
    "helmholtz_project",
    "hodge_decompose",
    "hodge_laplacian",
    "inner_product",
    "interior_product_map",
    "l2_norm",
    "lions_identity_residual",
    "load_bilinear_map",
    "load_field",
    "load_solution",
    "load_solver_config",
    "lp_norm",
    "navier_stokes_config",
    "newton_local_inverse",
    "nonlinear_term",
    "parametrix",
    "parse_solver_config",
    "project_state",
    "random_form",
    "recover_pressure",
    "remove_harmonic",
    "resample",
    "run_experiment",
    "save_bilinear_map",
    "save_field",
    "save_solution",
    "sobolev_norm",
    "solve_linearized",
    "solve_nonlinear",
    "split_derivative",
    "split_sobolev_norm",
    "taylor_green_pressure_field",
    "taylor_green_state",
    "thread_count",
    "to_physical",
    "trilinear_form",
    "verify_all",
    "write_report",
]

__version__ = "0.1.0"
