//! Posterior summaries with bootstrap Monte Carlo standard errors.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Is2Error, Result};
use crate::estimator::{self, bootstrap_replicates, DrawSet, MarginalLikelihoodEstimate};
use crate::exec::Execution;
use crate::stats::{self, weighted_moments, weighted_quantile};

/// A statistic and its Monte Carlo standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub mc_se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterSummary {
    pub name: String,
    pub mean: Estimate,
    pub sd: Estimate,
    pub skewness: Estimate,
    pub kurtosis: Estimate,
    pub q05: Estimate,
    pub q95: Estimate,
    /// `√(σ̂²_IS²(φ)/M)` for the mean, from the asymptotic-variance estimator.
    pub mean_asymptotic_se: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trimmed_mean: Option<Estimate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub model_id: String,
    pub proposal_id: String,
    pub master_seed: u64,
    pub draws: usize,
    pub parameters: Vec<ParameterSummary>,
    /// Log marginal likelihood with its delta-method standard error.
    pub log_marginal_likelihood: MarginalLikelihoodEstimate,
    pub log_marginal_likelihood_bootstrap_se: f64,
    pub ess: f64,
    /// `exp(σ̄²) · ESS`, with `σ̄²` the average recorded log-likelihood variance.
    pub adjusted_ess: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mean_loglik_variance: Option<f64>,
    pub mean_particles: f64,
    /// Variance of the normalised weights `M W_i`.
    pub normalized_weight_variance: f64,
    pub bootstrap_resamples: usize,
}

/// Wall-clock facts kept apart from the deterministic summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunTiming {
    pub wall_clock_seconds: f64,
    /// Squared MC standard error of each posterior mean times wall-clock time.
    pub tnv: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SummaryOptions {
    pub bootstrap_resamples: usize,
    pub seed: u64,
    #[serde(default)]
    pub exec: Execution,
    #[serde(default)]
    pub trim: bool,
}

const STATS: usize = 6;

fn parameter_stats(values: &[f64], weights: &[f64]) -> [f64; STATS] {
    let [m, sd, skew, kurt] = weighted_moments(values, weights);
    [
        m,
        sd,
        skew,
        kurt,
        weighted_quantile(values, weights, 0.05),
        weighted_quantile(values, weights, 0.95),
    ]
}

pub fn summarize(draws: &DrawSet, names: &[String], opts: &SummaryOptions) -> Result<PosteriorSummary> {
    if opts.bootstrap_resamples < 100 {
        return Err(Is2Error::invalid("bootstrap needs at least 100 resamples"));
    }
    let d = draws.dim();
    if names.len() != d {
        return Err(Is2Error::invalid("parameter names do not match draw dimension"));
    }
    let m = draws.len();
    let weights = draws.weights()?;
    let w = weights.shifted();
    let columns: Vec<Vec<f64>> = (0..d).map(|j| draws.values(estimator::coordinate(j))).collect();
    let point: Vec<[f64; STATS]> = columns.iter().map(|c| parameter_stats(c, w)).collect();
    let ml = estimator::marginal_likelihood_estimate(draws)?;

    // every replicate recomputes all statistics on one resample
    let reps: Vec<Option<(Vec<[f64; STATS]>, f64)>> =
        bootstrap_replicates(m, opts.bootstrap_resamples, opts.seed, opts.exec, |idx| {
            let rw: Vec<f64> = idx.iter().map(|&i| w[i]).collect();
            let total: f64 = rw.iter().sum();
            if total <= 0.0 {
                return None;
            }
            let per: Vec<[f64; STATS]> = columns
                .iter()
                .map(|c| {
                    let rv: Vec<f64> = idx.iter().map(|&i| c[i]).collect();
                    parameter_stats(&rv, &rw)
                })
                .collect();
            Some((per, (total / m as f64).ln() + weights.shift()))
        });
    let reps: Vec<_> = reps.into_iter().flatten().collect();
    if reps.len() < 2 {
        return Err(Is2Error::AllWeightsZero);
    }
    let se_of = |f: &dyn Fn(&(Vec<[f64; STATS]>, f64)) -> f64| -> f64 {
        let vals: Vec<f64> = reps.iter().map(f).collect();
        stats::sample_sd(&vals)
    };

    let parameters = (0..d)
        .map(|j| {
            let est = |k: usize| Estimate {
                value: point[j][k],
                mc_se: se_of(&|r| r.0[j][k]),
            };
            let mean_est = estimator::self_normalized_estimate(draws, estimator::coordinate(j))?;
            let trimmed_mean = if opts.trim {
                let t = estimator::trimmed_estimate(draws, estimator::coordinate(j))?;
                Some(Estimate {
                    value: t.value,
                    mc_se: t.mc_se,
                })
            } else {
                None
            };
            Ok(ParameterSummary {
                name: names[j].clone(),
                mean: est(0),
                sd: est(1),
                skewness: est(2),
                kurtosis: est(3),
                q05: est(4),
                q95: est(5),
                mean_asymptotic_se: mean_est.mc_se,
                trimmed_mean,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let vars: Vec<f64> = draws
        .draws
        .iter()
        .map(|x| x.loglik_var_hat)
        .filter(|v| v.is_finite())
        .collect();
    let mean_loglik_variance = (vars.len() == m).then(|| stats::mean(&vars));
    let ess = weights.ess();
    Ok(PosteriorSummary {
        model_id: draws.model_id.clone(),
        proposal_id: draws.proposal_id.clone(),
        master_seed: draws.master_seed,
        draws: m,
        parameters,
        log_marginal_likelihood: ml,
        log_marginal_likelihood_bootstrap_se: se_of(&|r| r.1),
        ess,
        adjusted_ess: estimator::adjusted_ess(ess, mean_loglik_variance.unwrap_or(0.0)),
        mean_loglik_variance,
        mean_particles: draws.draws.iter().map(|x| x.n_particles as f64).sum::<f64>() / m as f64,
        normalized_weight_variance: weights.normalized_weight_variance(),
        bootstrap_resamples: opts.bootstrap_resamples,
    })
}

impl PosteriorSummary {
    pub fn timing(&self, wall_clock_seconds: f64) -> RunTiming {
        RunTiming {
            wall_clock_seconds,
            tnv: self
                .parameters
                .iter()
                .map(|p| {
                    (
                        p.name.clone(),
                        crate::tuning::tnv(p.mean.mc_se.powi(2), wall_clock_seconds),
                    )
                })
                .collect(),
        }
    }

    /// Fixed-width table with standard errors in brackets under each value.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "model: {}  proposal: {}", self.model_id, self.proposal_id);
        let _ = writeln!(out, "draws: {}  seed: {}", self.draws, self.master_seed);
        let _ = writeln!(
            out,
            "{:<20}{:>12}{:>12}{:>12}{:>12}{:>12}{:>12}",
            "parameter", "mean", "sd", "skewness", "kurtosis", "5%", "95%"
        );
        for p in &self.parameters {
            let cells = [p.mean, p.sd, p.skewness, p.kurtosis, p.q05, p.q95];
            let _ = write!(out, "{:<20}", p.name);
            for c in cells {
                let _ = write!(out, "{:>12.4}", c.value);
            }
            let _ = write!(out, "\n{:<20}", "");
            for c in cells {
                let _ = write!(out, "{:>12}", format!("({:.4})", c.mc_se));
            }
            out.push('\n');
            if let Some(t) = p.trimmed_mean {
                let _ = writeln!(out, "{:<20}{:>12.4}  trimmed ({:.4})", "", t.value, t.mc_se);
            }
        }
        let _ = writeln!(
            out,
            "log p(y): {:.4} ({:.4})  bootstrap ({:.4})",
            self.log_marginal_likelihood.log_value,
            self.log_marginal_likelihood.mc_se_of_log,
            self.log_marginal_likelihood_bootstrap_se
        );
        let _ = writeln!(out, "ESS: {:.1}  adjusted ESS: {:.1}", self.ess, self.adjusted_ess);
        if let Some(v) = self.mean_loglik_variance {
            let _ = writeln!(out, "mean V(log p̂): {v:.4}  mean N: {:.1}", self.mean_particles);
        }
        out
    }
}
