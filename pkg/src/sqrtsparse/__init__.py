"""Square-root Lasso / SLOPE estimation with sparsity-adaptive aggregation."""

__version__ = "0.1.0"

from .model import (
    DataValidationError,
    DegenerateColumnError,
    DesignMatrix,
    DimensionMismatchError,
    GroundTruth,
    RegressionData,
    check_normalization,
    empirical_norm,
    load_design_csv,
    load_response_csv,
    normalize_columns,
    residual,
)
from .penalties import (
    LambdaSequence,
    lambda_sum_bounds,
    prox_backend,
    prox_sorted_l1,
    slope_dual_feasible,
    soft_threshold,
    sorted_l1_norm,
    sqrt_lasso_lambda,
    sqrt_slope_lambdas,
)
from .solvers import (
    DegenerateResidualError,
    FitResult,
    SolverConfig,
    StepSizeError,
    fit_slope_fixed_scale,
    fit_sqrt_lasso,
    fit_sqrt_slope,
    kkt_residual,
)
from .adaptivity import (
    AdaptationConfig,
    AdaptationResult,
    RateConstants,
    WeightFunction,
    assumption1_report,
    lepski_aggregate,
    sigma_hat_sandwich_check,
    sqrt_lasso_level_fitter,
    theoretical_bound_sql,
    theoretical_bound_sqs,
    theory_threshold_constant,
    weight,
)
from .design_conditions import (
    ConeSpec,
    KappaEstimate,
    estimate_kappa,
    monte_carlo_epsilon_concentration,
    monte_carlo_noise_event,
    noise_functionals,
    validate_theorem1_conditions,
    validate_theorem3_conditions,
)
from .experiments import (
    CellRecord,
    ExperimentSpec,
    RateReport,
    calibrate_c0,
    generate_design,
    generate_instance,
    rate_ratios,
    run_grid,
    write_report_csv,
)

__all__ = [name for name in dir() if not name.startswith("_")]
