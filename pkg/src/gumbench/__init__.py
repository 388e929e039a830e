"""Sampled low-rank orthogonalized-momentum optimizers with a test harness.

The package implements a full-parameter baseline (momentum msign steps), a
projected low-rank baseline with periodic SVD refresh, and a sampled method
that assigns each block a scaled low-rank or compensated full-rank update so
the effective gradient stays unbiased. A deterministic runner, CSV traces,
checkpoints, and built-in verification suites round it out.
"""

from .errors import (
    ConfigError,
    GumBenchError,
    InvalidInputError,
    InvalidProjectorError,
    InvalidStateError,
)
from .linalg import (
    MUON_QUINTIC,
    NEWTON_SCHULZ_DEFAULT,
    NewtonSchulzCoeffs,
    SvdResult,
    load_matrix,
    msign_exact,
    newton_schulz,
    save_matrix,
    spectral_norm,
    stable_rank,
    svd_thin,
    trace_norm,
)
from .metrics import (
    TRACE_CSV_FIELDS,
    GradNormSummary,
    SpectrumHistogram,
    StableRankSummary,
    TraceRecord,
    chi_aggregate,
    chi_residual,
    grad_norm_trace,
    read_trace_csv,
    spectrum_snapshot,
    stable_rank_trace,
    write_trace_csv,
)
from .optim import (
    Assignment,
    BlockState,
    GumConfig,
    MemoryReport,
    Projector,
    TraceHooks,
    external_weights,
    galore_projector,
    gum_full_rank_step,
    gum_low_rank_step,
    init_block_state,
    memory_footprint,
    monte_carlo_unbiasedness,
    muon_step,
    orient_like_block,
    run_period,
    sample_assignments,
    state_scalar_count,
    unbiased_paradigm_step,
)
from .problems import (
    DEFAULT_NLR_SEED,
    MultiBlockQuadratic,
    NoisyLinearRegression,
    mbq_grad,
    mbq_loss,
    mbq_mean_grad,
    mbq_random_instance,
    nlr_grad,
    nlr_grad_with_xi,
    nlr_loss,
    nlr_mean_grad,
    nlr_optimal_value,
    nlr_reference_instance,
)
from .runner import (
    CHECKPOINT_MANIFEST,
    METHODS,
    PROBLEMS,
    STATUS_CONFIG_ERROR,
    STATUS_NUMERICAL_FAILURE,
    STATUS_OK,
    STATUS_VERIFICATION_FAILURE,
    THREADS_ENV_VAR,
    ExperimentConfig,
    GoldenResult,
    RunOutcome,
    build_problem,
    golden_trace_check,
    load_checkpoint,
    run_single,
    run_suite,
    save_checkpoint,
    worker_slots,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "Assignment",
    "BlockState",
    "CHECKPOINT_MANIFEST",
    "ConfigError",
    "DEFAULT_NLR_SEED",
    "ExperimentConfig",
    "GoldenResult",
    "GradNormSummary",
    "GumBenchError",
    "GumConfig",
    "InvalidInputError",
    "InvalidProjectorError",
    "InvalidStateError",
    "MemoryReport",
    "METHODS",
    "MultiBlockQuadratic",
    "MUON_QUINTIC",
    "NEWTON_SCHULZ_DEFAULT",
    "NewtonSchulzCoeffs",
    "NoisyLinearRegression",
    "PROBLEMS",
    "Projector",
    "RunOutcome",
    "SpectrumHistogram",
    "StableRankSummary",
    "STATUS_CONFIG_ERROR",
    "STATUS_NUMERICAL_FAILURE",
    "STATUS_OK",
    "STATUS_VERIFICATION_FAILURE",
    "SvdResult",
    "THREADS_ENV_VAR",
    "TRACE_CSV_FIELDS",
    "TraceHooks",
    "TraceRecord",
    "build_problem",
    "chi_aggregate",
    "chi_residual",
    "external_weights",
    "galore_projector",
    "golden_trace_check",
    "grad_norm_trace",
    "gum_full_rank_step",
    "gum_low_rank_step",
    "init_block_state",
    "load_checkpoint",
    "load_matrix",
    "mbq_grad",
    "mbq_loss",
    "mbq_mean_grad",
    "mbq_random_instance",
    "memory_footprint",
    "monte_carlo_unbiasedness",
    "msign_exact",
    "muon_step",
    "newton_schulz",
    "nlr_grad",
    "nlr_grad_with_xi",
    "nlr_loss",
    "nlr_mean_grad",
    "nlr_optimal_value",
    "nlr_reference_instance",
    "orient_like_block",
    "read_trace_csv",
    "run_period",
    "run_single",
    "run_suite",
    "sample_assignments",
    "save_checkpoint",
    "save_matrix",
    "spectral_norm",
    "spectrum_snapshot",
    "stable_rank",
    "stable_rank_trace",
    "state_scalar_count",
    "svd_thin",
    "trace_norm",
    "unbiased_paradigm_step",
    "worker_slots",
    "write_trace_csv",
]
