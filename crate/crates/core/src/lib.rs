//! Calibration-set selection for post-training quantization by weighted
//! coverage of activation outlier channels.
//!
//! The pipeline runs from an [`ActivationProfile`] (per-layer, per-channel,
//! per-sample activation magnitudes) through an [`OutlierModel`] (thresholds,
//! outlier channels and their weights) to a sparse [`CoverageMatrix`], over
//! which [`greedy_select`] maximizes the total weight of covered channels.
//! Baseline selectors, coverage analysis, the clipping-surrogate bound and a
//! synthetic pool generator round out the toolkit.

pub mod analysis;
pub mod ccap;
pub mod cli;
pub mod coverage;
pub mod error;
pub mod outlier;
pub mod profile;
pub mod selection;
pub mod surrogate;
pub mod synthgen;

pub use analysis::{coverage_report, CoverageReport};
pub use ccap::{read_profile, write_profile};
pub use coverage::{build_coverage_matrix, objective_value, CoverageMatrix};
pub use error::{Error, Result};
pub use outlier::{build_outlier_model, compute_thresholds, OutlierModel, DEFAULT_K_SIGMA};
pub use profile::{validate_profile, ActivationProfile, Diagnostic};
pub use selection::{
    brute_force_optimal, greedy_select, lazy_greedy_select, select_max_actvar, select_max_ppl, select_random,
    select_stratified, ActVarScore, Method, SelectionResult,
};
pub use surrogate::{adaptive_refine, check_surrogate_bound, simulate_deficits, surrogate_loss, DeficitMode};
pub use synthgen::{generate_pool, PoolConfig, Scenario};
