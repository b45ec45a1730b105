"""Influence network reconstruction from binned event counts."""

from .errors import ConvergenceError, DomainError, HawkesnetError, SchemaError
from .model import (
    CountSeries,
    HawkesParams,
    IntensityPath,
    closed_form_intensity,
    intensity_path,
    nll,
    nll_by_node,
    simulate_hawkes,
    stability_margin,
    stationary_mean,
)
from .em import (
    EmConfig,
    EmIterRecord,
    EmResult,
    em_fit,
    eval_Q,
    mstep_dynamics,
    mstep_observation,
)
from .expkf import (
    ExpkfConfig,
    ExpkfResult,
    ExpkfState,
    ProfileResult,
    expkf_step,
    init_state,
    intensity_and_gradient,
    profile_decay,
    run_filter,
    update_decayed_counts,
)
from .smc import (
    ParticleCloud,
    SmoothedPaths,
    bss_backward,
    pf_forward,
    poisson_obs_loglik,
    systematic_resample,
)
from .statespace import (
    SimulatedStateSpace,
    StateSpaceSpec,
    excitation_path,
    latent_drift,
    link_intensity,
    simulate_statespace,
    transition_noise_std,
    x0_prior,
)
from .mm import (
    MmAccumulators,
    MmConfig,
    MmResult,
    mm_fit,
    mm_precompute,
    mm_step_fixed,
    mm_step_full,
    regularized_mu_update,
    solve_gamma_quartic,
    surrogate_value,
)
from .abm import (
    AbmConfig,
    AbmState,
    abm_step,
    init_abm_state,
    movement_probabilities,
    simulate_abm,
)
from .metrics import (
    EvalReport,
    edge_threshold,
    evaluate,
    frobenius_error,
    frobenius_error_raw,
    hellinger_distance,
    hellinger_distance_raw,
    normalize_matrix,
    relative_error,
)
from .dataio import (
    EventLog,
    EventRecord,
    GapReport,
    aggregate_timestamps,
    gap_filter,
    read_abm_config,
    read_count_series,
    read_em_config,
    read_em_init_spec,
    read_event_log,
    read_hawkes_params,
    read_statespace_spec,
    write_abm_config,
    write_count_series,
    write_em_config,
    write_event_log,
    write_hawkes_params,
    write_statespace_spec,
)
from ._parallel import default_threads, get_thread_cap, set_thread_cap
from .experiments import reproduce_experiment

__version__ = "0.1.0"

__all__ = [
    "ConvergenceError",
    "DomainError",
    "HawkesnetError",
    "SchemaError",
    "CountSeries",
    "HawkesParams",
    "IntensityPath",
    "closed_form_intensity",
    "intensity_path",
    "nll",
    "nll_by_node",
    "simulate_hawkes",
    "stability_margin",
    "stationary_mean",
    "EmConfig",
    "EmIterRecord",
    "EmResult",
    "em_fit",
    "eval_Q",
    "mstep_dynamics",
    "mstep_observation",
    "ParticleCloud",
    "SmoothedPaths",
    "bss_backward",
    "pf_forward",
    "poisson_obs_loglik",
    "systematic_resample",
    "SimulatedStateSpace",
    "StateSpaceSpec",
    "excitation_path",
    "latent_drift",
    "link_intensity",
    "simulate_statespace",
    "transition_noise_std",
    "x0_prior",
    "ExpkfConfig",
    "ExpkfResult",
    "ExpkfState",
    "ProfileResult",
    "expkf_step",
    "init_state",
    "intensity_and_gradient",
    "profile_decay",
    "run_filter",
    "update_decayed_counts",
    "MmAccumulators",
    "MmConfig",
    "MmResult",
    "mm_fit",
    "mm_precompute",
    "mm_step_fixed",
    "mm_step_full",
    "regularized_mu_update",
    "solve_gamma_quartic",
    "surrogate_value",
    "AbmConfig",
    "AbmState",
    "abm_step",
    "init_abm_state",
    "movement_probabilities",
    "simulate_abm",
    "EvalReport",
    "edge_threshold",
    "evaluate",
    "frobenius_error",
    "frobenius_error_raw",
    "hellinger_distance",
    "hellinger_distance_raw",
    "normalize_matrix",
    "relative_error",
    "EventLog",
    "EventRecord",
    "GapReport",
    "aggregate_timestamps",
    "gap_filter",
    "read_abm_config",
    "read_count_series",
    "read_em_config",
    "read_em_init_spec",
    "read_event_log",
    "read_hawkes_params",
    "read_statespace_spec",
    "write_abm_config",
    "write_count_series",
    "write_em_config",
    "write_event_log",
    "write_hawkes_params",
    "write_statespace_spec",
    "default_threads",
    "get_thread_cap",
    "set_thread_cap",
    "reproduce_experiment",
    "__version__",
]
