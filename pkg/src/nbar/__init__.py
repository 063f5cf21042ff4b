"""Simulation, kernel estimation and asymmetry testing for bifurcating
autoregressive processes on binary trees."""

from .asymmetry import (
    PointwiseInterval,
    TestGrid,
    TestResult,
    VarianceInputs,
    asymmetry_test,
    chi2_sf,
    normal_quantile,
    pointwise_confidence_interval,
    wald_statistic,
)
from .diagnostics import (
    ErgodicityReport,
    ManyToOneReport,
    check_assumption1,
    check_assumption2,
    check_function_class,
    eta_tail_mass,
    many_to_one_check,
    marginal_delta,
    run_ergodicity_report,
)
from .errors import ConfigError, DataError
from .estimators import (
    BierensConfig,
    CurveEstimate,
    EstimatorConfig,
    GridSpec,
    NoiseCovarianceEstimate,
    empirical_relative_error,
    estimate_autoregression,
    estimate_bierens,
    estimate_invariant_density,
    estimate_noise_covariance,
    estimate_recursive,
    evaluate_curve,
    nominal_parent_count,
)
from .kernels import EPANECHNIKOV, GAUSSIAN, BandwidthRule, KernelSpec, get_kernel, silverman_constant
from .models import (
    AutoregressivePair,
    ModelSpec,
    NoiseModel,
    RootLaw,
    builtin_models,
    draw_noise,
    model_from_json,
    replicate_seeds,
    resolve_model,
    simulate_nbar,
    simulate_tagged_branch,
    trial_tau_fn,
)
from .rng import derive_key, stream_uniforms
from .studies import (
    MonteCarloReport,
    StudyConfig,
    confidence_bands,
    curve_relative_errors,
    ingest_pairs,
    run_bands_study,
    run_error_study,
    run_power_study,
    run_rejection_study,
)
from .trees import (
    BinaryTreeData,
    collect_pairs,
    full_tree_size,
    generation_size,
    index_to_path,
    path_to_index,
    read_tree_csv,
)

__version__ = "0.1.0"
