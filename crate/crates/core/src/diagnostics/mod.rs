//! Gradient-health classification, convergence-time measurement, and
//! Monte-Carlo checks of the dithering theory.
//!
//! The checks compare sampled statistics against quantities computed exactly
//! by enumerating the (small) output spaces, and report the outcome as a
//! [`PropositionReport`].

mod convergence;
mod props;
mod stability;
mod verify;

pub use convergence::{
    measure_t_gamma, quantile, summarize_cells, trend_violations, variance_sweep,
    variance_sweep_cells, ConvergenceRecord, SweepCell, SweepRow, TrendViolation, DEFAULT_M_GRID,
    MIN_SWEEP_SEEDS,
};
pub use props::{
    probe_problem, verify_propositions, ACCURACY_SIGMAS, ADDITIVITY_RATES, PROPOSITIONS,
    UNBIASED_SIGMAS, VARIANCE_SIGMAS,
};
pub use stability::{
    classify_grad, stability_from_norms, stability_summary, GradClass, GradClassifierConfig,
    StabilitySummary,
};
pub use verify::{
    check_gradient_noise_variance, check_pairwise_accuracy, check_unbiasedness,
    check_unbiasedness_with, check_variance_additivity,
    exact_reward_gradient, expected_score_sq_norm, log_log_slope, PropositionReport,
    MIN_VERIFY_SAMPLES, SE_BAND,
};
