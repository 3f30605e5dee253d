//! Unbiased likelihood estimators and diagnostics of their log.

pub mod diagnostics;
pub mod importance;
pub mod particle_filter;

use serde::{Deserialize, Serialize};

use crate::stats;

pub use diagnostics::{
    batch_diagnostics, loglik_diagnostics, BatchDiagnostics, LogLikDiagnostics,
    JB_CRITICAL_5PCT,
};
pub use importance::{
    antithetic_pairs, is_likelihood_estimate, standard_normals, stratified_allocation,
    DefensiveMixture, LatentProposal, LatentSampler, LatentTarget, SamplingOptions,
};
pub use particle_filter::{bootstrap_particle_filter, PfOptions, StateSpaceModel};

/// A natural-scale unbiased likelihood estimate carried on the log scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LikelihoodEstimate {
    pub log_value: f64,
    pub n_particles: usize,
    /// Estimated variance of `log_value`, when the estimator provides one.
    pub loglik_var_hat: Option<f64>,
    /// Log importance weights of the particles; `log_value` is their log-mean-exp.
    pub particle_log_weights: Option<Vec<f64>>,
    /// Size of the blocks of consecutive particles that are mutually dependent
    /// (2 for antithetic pairs). The jackknife deletes one block at a time.
    #[serde(default = "one")]
    pub block_size: usize,
    /// Sizes of consecutive strata sampled in fixed proportions, if any. The
    /// jackknife then deletes blocks within each stratum.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub strata: Option<Vec<usize>>,
}

fn one() -> usize {
    1
}

impl LikelihoodEstimate {
    /// An exact likelihood dressed as an estimate with zero variance.
    pub fn exact(log_value: f64) -> Self {
        Self {
            log_value,
            n_particles: 0,
            loglik_var_hat: Some(0.0),
            particle_log_weights: None,
            block_size: 1,
            strata: None,
        }
    }

    pub fn from_particles(log_weights: Vec<f64>, block_size: usize) -> Self {
        Self {
            log_value: stats::log_mean_exp(&log_weights),
            n_particles: log_weights.len(),
            loglik_var_hat: None,
            particle_log_weights: Some(log_weights),
            block_size,
            strata: None,
        }
    }
}
