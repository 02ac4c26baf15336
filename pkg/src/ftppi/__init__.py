"""Budget allocation between fine-tuning and rectification.

When a fixed set of labeled examples must both fine-tune a predictor and
debias (rectify) the estimates computed from its predictions, the split
matters: more fine-tuning shrinks residual variance, fewer rectification
labels inflate it.  This package fits the residual-variance scaling law,
solves for the optimal split, computes rectified means and M-estimates
with confidence intervals, and provides synthetic worlds in which every
one of those quantities has a closed form to test against.
"""

from .allocate import (
    AllocationResult,
    FeasibilityInput,
    SensitivityReport,
    allocation_objective,
    allocation_sensitivity,
    check_feasibility,
    discriminant_peak,
    foc_residual,
    solve_optimal_allocation,
    variance_discriminant,
)
from .core import (
    DEFAULT_SEED,
    ConvergenceError,
    CsvFormatError,
    DomainError,
    FtppiError,
    InsufficientDataError,
    InvalidSplitError,
    LabeledDataset,
    LabeledSample,
    NumericalError,
    ParameterError,
    PlanError,
    Predictor,
    RngSeed,
    SingularHessianError,
    UnderdeterminedFitError,
    UnlabeledDataset,
    UnsupportedSizeError,
    as_seed,
    read_labeled_csv,
    read_predictions_csv,
    read_unlabeled_csv,
    sample_variance,
    split_dataset,
)
from .m_estim import (
    LossModel,
    MEstimateReport,
    SandwichCovariance,
    builtin_loss,
    categorical_loss,
    linear_regression_loss,
    m_estimate_ci,
    mean_loss,
    mnl_loss,
    read_choice_labeled_csv,
    read_choice_unlabeled_csv,
    sandwich_covariance,
    scalarize,
    solve_ppi_m_estimator,
)
from .ppi_mean import (
    MeanEstimateReport,
    Method,
    R2Criterion,
    VarianceParts,
    ft_only_estimate,
    ft_only_report,
    normal_quantile,
    ppi_mean_ci,
    ppi_mean_estimate,
    ppi_mean_variance_hat,
    r2_criterion,
    sample_mean_estimate,
)
from .rampup import (
    RampUpPlan,
    RampUpTrace,
    StageRecord,
    default_rampup_plan,
    rampup_final_estimate,
    run_rampup,
)
from .scaling import (
    LogLogDiagnostic,
    ScalingFit,
    ScalingLaw,
    ScalingObservation,
    eval_variance,
    fit_report_dict,
    fit_scaling_law,
    log_log_diagnostic,
    read_observations_csv,
)
from .simulate import (
    BiasProfile,
    BootstrapReport,
    BruteForceResult,
    ComparisonReport,
    ExternalFtReport,
    MethodStats,
    SimTrainer,
    SyntheticWorld,
    analytic_estimator_variance,
    base_predictor,
    bootstrap_robustness,
    brute_force_allocation,
    external_ft_experiment,
    generate_world_data,
    run_estimator_comparison,
    shifted_law,
    world_from_dict,
    world_to_dict,
)

__version__ = "0.1.0"

__all__ = [
    "DEFAULT_SEED",
    "__version__",
    # errors
    "FtppiError",
    "DomainError",
    "ParameterError",
    "InvalidSplitError",
    "InsufficientDataError",
    "UnderdeterminedFitError",
    "ConvergenceError",
    "SingularHessianError",
    "UnsupportedSizeError",
    "PlanError",
    "NumericalError",
    "CsvFormatError",
    # data plumbing
    "RngSeed",
    "as_seed",
    "LabeledSample",
    "LabeledDataset",
    "UnlabeledDataset",
    "Predictor",
    "split_dataset",
    "sample_variance",
    "read_labeled_csv",
    "read_unlabeled_csv",
    "read_predictions_csv",
    # scaling law
    "ScalingLaw",
    "ScalingObservation",
    "ScalingFit",
    "LogLogDiagnostic",
    "eval_variance",
    "fit_scaling_law",
    "log_log_diagnostic",
    "fit_report_dict",
    "read_observations_csv",
    # allocation
    "AllocationResult",
    "FeasibilityInput",
    "SensitivityReport",
    "foc_residual",
    "allocation_objective",
    "solve_optimal_allocation",
    "variance_discriminant",
    "discriminant_peak",
    "check_feasibility",
    "allocation_sensitivity",
    # rectified mean
    "Method",
    "MeanEstimateReport",
    "R2Criterion",
    "VarianceParts",
    "normal_quantile",
    "ppi_mean_estimate",
    "ppi_mean_variance_hat",
    "ppi_mean_ci",
    "sample_mean_estimate",
    "ft_only_estimate",
    "ft_only_report",
    "r2_criterion",
    # M-estimation
    "LossModel",
    "SandwichCovariance",
    "MEstimateReport",
    "mean_loss",
    "categorical_loss",
    "linear_regression_loss",
    "mnl_loss",
    "builtin_loss",
    "solve_ppi_m_estimator",
    "sandwich_covariance",
    "scalarize",
    "m_estimate_ci",
    "read_choice_labeled_csv",
    "read_choice_unlabeled_csv",
    # simulation
    "BiasProfile",
    "SyntheticWorld",
    "SimTrainer",
    "base_predictor",
    "generate_world_data",
    "analytic_estimator_variance",
    "BruteForceResult",
    "brute_force_allocation",
    "MethodStats",
    "ComparisonReport",
    "run_estimator_comparison",
    "BootstrapReport",
    "bootstrap_robustness",
    "ExternalFtReport",
    "external_ft_experiment",
    "shifted_law",
    "world_from_dict",
    "world_to_dict",
    # ramp-up
    "RampUpPlan",
    "StageRecord",
    "RampUpTrace",
    "default_rampup_plan",
    "run_rampup",
    "rampup_final_estimate",
]
