"""stochlab: a numerical laboratory for stochastisation of parameter-dependent
ODEs, with persistence checks for invariant manifolds, equilibria, stability,
first integrals and bracket structure."""

from .analyze import (
    AmplitudeSweep,
    AttractionEstimate,
    ConditionResult,
    EquilibriumReport,
    FirstIntegralDrift,
    GapDecay,
    GeneratorCheck,
    InvarianceReport,
    MonotonicityStats,
    OrderEstimate,
    StabilityEstimate,
    check_equilibrium,
    check_invariance,
    check_symplecticity,
    conversion_gap_decay,
    derive_seed,
    empirical_convergence_order,
    equilibrium_attraction,
    fibonacci_sphere,
    first_integral_drift,
    functional_drift_decay,
    generator_amplitude_sweep,
    ll_decomposition_residual,
    lyapunov_monotonicity,
    one_step_generator_check,
    report_to_csv,
    sphere_minus_cap,
    stability_probability,
    uniform_sphere_sampler,
)
from .integrate import (
    SCHEMES,
    EnsembleStats,
    IntegrationError,
    ModelSpec,
    Trajectory,
    apply_generator,
    default_scheme,
    euler_maruyama,
    heun_strat,
    integrate_path,
    rk4,
    run_ensemble,
    solve_rode,
    strat_to_ito,
    validate_model,
    write_csv,
)
from .models import (
    CATALOG,
    CatalogEntry,
    build_model,
    kubo_exact,
    scalar_linear_exact,
    wrap_angles,
)
from .noise import (
    NoisePath,
    ParameterProcess,
    coarse_sum,
    constant_eta,
    iterated_log_eta,
    parameter_sde,
    path_from_csv,
    path_to_csv,
    refine,
    sample_brownian,
    stream,
)
from .vecalg import (
    DoubleBracketStructure,
    PoissonStructure,
    ScalarField,
    bracket_field,
    casimir_field,
    casimir_residual,
    constant_field,
    cross,
    cross_matrix,
    dot,
    double_bracket,
    double_bracket_vf,
    fd_gradient,
    field_product,
    hamiltonian_vf,
    linear_field,
    norm,
    norm_squared_field,
    quadratic_field,
    rigid_body_bracket,
    sphere_field,
)

__version__ = "0.1.0"
