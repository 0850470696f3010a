"""Differentially private dueling-bandit simulation library."""

from .dp_mechanisms import (
    BinTreeCounter,
    CapacityError,
    LaplaceSampler,
    bintree_error_bound,
    laplace_inverse_cdf,
    laplace_sample,
    node_noise_scale,
)
from .finite_elim import (
    FiniteElimState,
    FiniteRunResult,
    privacy_half_width,
    pull_count_cap,
    run_finite,
    sampling_half_width,
)
from .harness import (
    AuditReport,
    ConfigError,
    ExperimentConfig,
    RunRecord,
    audit_sensitivity,
    build_config,
    load_instance,
    parse_config_file,
    run_experiment,
    verify_formulas,
)
from .linear_elim import (
    EstimationError,
    LinearRunResult,
    PrivateAggregate,
    compute_kappa,
    eliminate_linear,
    exploration_budget,
    phase_budget,
    phase_count_bound,
    private_mle,
    run_linear,
)
from .optimal_design import (
    Design,
    DesignConvergenceError,
    EpsNet,
    build_eps_net,
    design_for_phase,
    g_optimal_design,
)
from .preference import (
    MatrixEnvironment,
    PreferenceMatrix,
    RegretLedger,
    UtilityEnvironment,
    borda_gap_properties,
    borda_score,
    logit,
    lower_bound_instance,
    lower_bound_surrogate_rewards,
    sigmoid,
    transitivity_holds,
)

__version__ = "0.1.0"
