//! The IS² estimator over a set of weighted parameter draws.
//!
//! A draw's unnormalised weight is `p(θ) p̂_N(y|θ) / g(θ)`. All arithmetic is
//! done on log-weights shifted by their maximum, so weights spanning hundreds
//! of log units are handled without overflow.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Is2Error, Result};
use crate::exec::{map_indexed, Execution};
use crate::rng::{self, KEY_BOOTSTRAP};
use crate::stats;

/// One parameter draw with its likelihood estimate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedDraw {
    pub theta: Vec<f64>,
    pub log_prior: f64,
    /// Log of the unbiased natural-scale likelihood estimate.
    pub log_lik_hat: f64,
    pub log_proposal: f64,
    pub n_particles: u64,
    /// Estimated variance of `log_lik_hat`; zero when the likelihood is exact
    /// and NaN when the estimator provided none.
    pub loglik_var_hat: f64,
    pub antithetic_partner: Option<usize>,
}

impl WeightedDraw {
    /// `log p(θ) + log p̂(y|θ) − log g(θ)`; exactly `-inf` outside the prior support.
    pub fn log_weight(&self) -> f64 {
        if self.log_prior == f64::NEG_INFINITY {
            return f64::NEG_INFINITY;
        }
        self.log_prior + self.log_lik_hat - self.log_proposal
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DrawSet {
    pub draws: Vec<WeightedDraw>,
    pub master_seed: u64,
    pub model_id: String,
    pub proposal_id: String,
}

impl DrawSet {
    pub fn new(
        draws: Vec<WeightedDraw>,
        master_seed: u64,
        model_id: impl Into<String>,
        proposal_id: impl Into<String>,
    ) -> Result<Self> {
        if draws.is_empty() {
            return Err(Is2Error::TooFewDraws { needed: 1, got: 0 });
        }
        let d = draws[0].theta.len();
        for (i, draw) in draws.iter().enumerate() {
            if draw.theta.len() != d {
                return Err(Is2Error::invalid(format!(
                    "draw {i} has dimension {} (expected {d})",
                    draw.theta.len()
                )));
            }
            if !draw.log_proposal.is_finite() {
                return Err(Is2Error::invalid(format!(
                    "draw {i} has non-finite proposal density"
                )));
            }
            if let Some(p) = draw.antithetic_partner {
                if p >= draws.len() || p == i {
                    return Err(Is2Error::invalid(format!(
                        "draw {i} has invalid antithetic partner {p}"
                    )));
                }
            }
        }
        Ok(Self {
            draws,
            master_seed,
            model_id: model_id.into(),
            proposal_id: proposal_id.into(),
        })
    }

    pub fn len(&self) -> usize {
        self.draws.len()
    }

    pub fn is_empty(&self) -> bool {
        self.draws.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.draws[0].theta.len()
    }

    pub fn log_weights(&self) -> Vec<f64> {
        self.draws.iter().map(WeightedDraw::log_weight).collect()
    }

    pub fn weights(&self) -> Result<ShiftedWeights> {
        ShiftedWeights::from_log(&self.log_weights())
    }

    /// Normalised weights `W_i`, summing to one.
    pub fn normalized_weights(&self) -> Result<Vec<f64>> {
        Ok(self.weights()?.normalized())
    }

    pub fn values<F: Fn(&[f64]) -> f64>(&self, phi: F) -> Vec<f64> {
        self.draws.iter().map(|d| phi(&d.theta)).collect()
    }
}

/// Projection onto coordinate `j`, the most common test function.
pub fn coordinate(j: usize) -> impl Fn(&[f64]) -> f64 + Copy {
    move |theta: &[f64]| theta[j]
}

/// Unnormalised weights stored as `exp(log w_i − max)` plus the shift.
#[derive(Debug, Clone)]
pub struct ShiftedWeights {
    shifted: Vec<f64>,
    shift: f64,
    sum: f64,
}

impl ShiftedWeights {
    pub fn from_log(log_weights: &[f64]) -> Result<Self> {
        if log_weights.is_empty() {
            return Err(Is2Error::TooFewDraws { needed: 1, got: 0 });
        }
        let mut shift = f64::NEG_INFINITY;
        for &lw in log_weights {
            if lw.is_nan() || lw == f64::INFINITY {
                return Err(Is2Error::invalid("log-weight is NaN or +inf"));
            }
            shift = shift.max(lw);
        }
        if shift == f64::NEG_INFINITY {
            return Err(Is2Error::AllWeightsZero);
        }
        let shifted: Vec<f64> = log_weights.iter().map(|&lw| (lw - shift).exp()).collect();
        let sum = shifted.iter().sum();
        Ok(Self {
            shifted,
            shift,
            sum,
        })
    }

    pub fn len(&self) -> usize {
        self.shifted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shifted.is_empty()
    }

    /// Weights scaled so the largest is one.
    pub fn shifted(&self) -> &[f64] {
        &self.shifted
    }

    pub fn shift(&self) -> f64 {
        self.shift
    }

    pub fn normalized(&self) -> Vec<f64> {
        self.shifted.iter().map(|w| w / self.sum).collect()
    }

    pub fn mean_of(&self, values: &[f64]) -> f64 {
        debug_assert_eq!(values.len(), self.shifted.len());
        let num: f64 = self
            .shifted
            .iter()
            .zip(values)
            .filter(|(w, _)| **w > 0.0)
            .map(|(w, v)| w * v)
            .sum();
        num / self.sum
    }

    /// `M Σ (φ_i − φ̂)² w_i² / (Σ w_i)²`.
    pub fn asymptotic_variance(&self, values: &[f64], estimate: f64) -> f64 {
        let m = self.shifted.len() as f64;
        let num: f64 = self
            .shifted
            .iter()
            .zip(values)
            .filter(|(w, _)| **w > 0.0)
            .map(|(w, v)| (v - estimate).powi(2) * w * w)
            .sum();
        m * num / (self.sum * self.sum)
    }

    /// `(Σ w)² / Σ w²`, clamped to `[1, M]` against rounding.
    pub fn ess(&self) -> f64 {
        let sum_sq: f64 = self.shifted.iter().map(|w| w * w).sum();
        (self.sum * self.sum / sum_sq).clamp(1.0, self.shifted.len() as f64)
    }

    /// `log((1/M) Σ w_i)` on the original scale.
    pub fn log_mean(&self) -> f64 {
        self.shift + (self.sum / self.shifted.len() as f64).ln()
    }

    /// Delta-method standard error of [`Self::log_mean`]: `sd(w) / (√M · mean(w))`.
    pub fn log_mean_se(&self) -> f64 {
        let m = self.shifted.len() as f64;
        let mean = self.sum / m;
        stats::sample_sd(&self.shifted) / (m.sqrt() * mean)
    }

    /// Variance of the normalised weights `W_i = w_i / mean(w)`; this is the
    /// `v` entering the marginal-likelihood cost model.
    pub fn normalized_weight_variance(&self) -> f64 {
        let m = self.shifted.len() as f64;
        let mean = self.sum / m;
        let scaled: Vec<f64> = self.shifted.iter().map(|w| w / mean).collect();
        stats::sample_variance(&scaled)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PosteriorEstimate {
    pub value: f64,
    pub asym_var_hat: f64,
    /// `sqrt(asym_var_hat / M)`.
    pub mc_se: f64,
    pub ess: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarginalLikelihoodEstimate {
    pub log_value: f64,
    pub mc_se_of_log: f64,
}

fn estimate_from(weights: &ShiftedWeights, values: &[f64]) -> PosteriorEstimate {
    let value = weights.mean_of(values);
    let asym_var_hat = weights.asymptotic_variance(values, value);
    PosteriorEstimate {
        value,
        asym_var_hat,
        mc_se: (asym_var_hat / weights.len() as f64).sqrt(),
        ess: weights.ess(),
    }
}

/// Self-normalised estimate of `E_π[φ]`.
pub fn self_normalized_estimate<F>(draws: &DrawSet, phi: F) -> Result<PosteriorEstimate>
where
    F: Fn(&[f64]) -> f64,
{
    let weights = draws.weights()?;
    Ok(estimate_from(&weights, &draws.values(phi)))
}

pub fn asymptotic_variance_estimate<F>(draws: &DrawSet, phi: F) -> Result<f64>
where
    F: Fn(&[f64]) -> f64,
{
    Ok(self_normalized_estimate(draws, phi)?.asym_var_hat)
}

pub fn ess(draws: &DrawSet) -> Result<f64> {
    Ok(draws.weights()?.ess())
}

/// ESS the proposal would reach with exact likelihoods: `exp(σ²) · ESS_IS²`.
pub fn adjusted_ess(ess_is2: f64, sigma2: f64) -> f64 {
    sigma2.exp() * ess_is2
}

/// `p̂(y) = (1/M) Σ w̃_i`, reported on the log scale.
pub fn marginal_likelihood_estimate(draws: &DrawSet) -> Result<MarginalLikelihoodEstimate> {
    if draws.len() < 2 {
        return Err(Is2Error::TooFewDraws {
            needed: 2,
            got: draws.len(),
        });
    }
    let weights = draws.weights()?;
    Ok(MarginalLikelihoodEstimate {
        log_value: weights.log_mean(),
        mc_se_of_log: weights.log_mean_se(),
    })
}

/// Index of the largest weight; ties go to the lowest index.
fn argmax_weight(log_weights: &[f64]) -> usize {
    let mut best = 0;
    for (i, &lw) in log_weights.iter().enumerate().skip(1) {
        if lw > log_weights[best] {
            best = i;
        }
    }
    best
}

/// Indices kept after removing the largest-weight draw and its antithetic partner.
pub fn trimmed_indices(draws: &DrawSet) -> Result<Vec<usize>> {
    if draws.len() < 3 {
        return Err(Is2Error::TooFewDraws {
            needed: 3,
            got: draws.len(),
        });
    }
    let top = argmax_weight(&draws.log_weights());
    let partner = draws.draws[top].antithetic_partner;
    let kept: Vec<usize> = (0..draws.len())
        .filter(|&i| i != top && Some(i) != partner)
        .collect();
    if kept.len() < 2 {
        return Err(Is2Error::TooFewDraws {
            needed: 2,
            got: kept.len(),
        });
    }
    Ok(kept)
}

/// Self-normalised estimate after deleting the draw with the largest weight
/// (and its antithetic partner, if any).
pub fn trimmed_estimate<F>(draws: &DrawSet, phi: F) -> Result<PosteriorEstimate>
where
    F: Fn(&[f64]) -> f64,
{
    let kept = trimmed_indices(draws)?;
    let log_w: Vec<f64> = kept.iter().map(|&i| draws.draws[i].log_weight()).collect();
    let values: Vec<f64> = kept.iter().map(|&i| phi(&draws.draws[i].theta)).collect();
    let weights = ShiftedWeights::from_log(&log_w)?;
    Ok(estimate_from(&weights, &values))
}

/// Apply `stat` to `n_boot` with-replacement resamples of `0..m`. Resample `b`
/// uses its own stream, so the result is independent of execution order.
pub fn bootstrap_replicates<T, F>(
    m: usize,
    n_boot: usize,
    seed: u64,
    exec: Execution,
    stat: F,
) -> Vec<T>
where
    T: Send,
    F: Fn(&[usize]) -> T + Sync + Send,
{
    let base = rng::derive(seed, KEY_BOOTSTRAP);
    map_indexed(n_boot, exec, |b| {
        let mut rng = rng::stream(base, b as u64);
        let idx: Vec<usize> = (0..m).map(|_| rng.random_range(0..m)).collect();
        stat(&idx)
    })
}

/// Bootstrap standard deviation of the self-normalised estimate.
pub fn bootstrap_mc_se<F>(draws: &DrawSet, phi: F, n_boot: usize, seed: u64) -> Result<f64>
where
    F: Fn(&[f64]) -> f64,
{
    bootstrap_mc_se_with(draws, phi, n_boot, seed, Execution::default())
}

pub fn bootstrap_mc_se_with<F>(
    draws: &DrawSet,
    phi: F,
    n_boot: usize,
    seed: u64,
    exec: Execution,
) -> Result<f64>
where
    F: Fn(&[f64]) -> f64,
{
    if n_boot < 100 {
        return Err(Is2Error::invalid(format!(
            "bootstrap needs at least 100 resamples, got {n_boot}"
        )));
    }
    if draws.len() < 2 {
        return Err(Is2Error::TooFewDraws {
            needed: 2,
            got: draws.len(),
        });
    }
    let weights = draws.weights()?;
    let w = weights.shifted();
    let values = draws.values(phi);
    let reps = bootstrap_replicates(draws.len(), n_boot, seed, exec, |idx| {
        let (mut num, mut den) = (0.0, 0.0);
        for &i in idx {
            if w[i] > 0.0 {
                num += w[i] * values[i];
                den += w[i];
            }
        }
        if den > 0.0 {
            Ok(num / den)
        } else {
            Err(Is2Error::AllWeightsZero)
        }
    });
    let reps: Vec<f64> = reps.into_iter().collect::<Result<_>>()?;
    Ok(stats::sample_sd(&reps))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    /// Draw set with the given natural-scale weights and 1-D theta values.
    pub(crate) fn drawset(weights: &[f64], phis: &[f64]) -> DrawSet {
        let draws = weights
            .iter()
            .zip(phis)
            .map(|(&w, &p)| WeightedDraw {
                theta: vec![p],
                log_prior: 0.0,
                log_lik_hat: w.ln(),
                log_proposal: 0.0,
                n_particles: 1,
                loglik_var_hat: 0.0,
                antithetic_partner: None,
            })
            .collect();
        DrawSet::new(draws, 0, "test", "test").unwrap()
    }

    fn id(t: &[f64]) -> f64 {
        t[0]
    }

    #[test]
    fn self_normalized_examples() {
        assert_eq!(
            self_normalized_estimate(&drawset(&[0.3], &[7.3]), id)
                .unwrap()
                .value,
            7.3
        );
        assert_relative_eq!(
            self_normalized_estimate(&drawset(&[1.0; 3], &[1.0, 2.0, 3.0]), id)
                .unwrap()
                .value,
            2.0
        );
        assert_relative_eq!(
            self_normalized_estimate(&drawset(&[1.0, 2.0, 1.0], &[0.0, 1.0, 2.0]), id)
                .unwrap()
                .value,
            1.0
        );
    }

    #[test]
    fn asymptotic_variance_examples() {
        let eq = drawset(&[1.0; 3], &[1.0, 2.0, 3.0]);
        assert_relative_eq!(
            asymptotic_variance_estimate(&eq, id).unwrap(),
            2.0 / 3.0,
            max_relative = 1e-14
        );
        let single = drawset(&[0.0, 2.0, 0.0], &[1.0, 5.0, 9.0]);
        assert_eq!(asymptotic_variance_estimate(&single, id).unwrap(), 0.0);
        let two = drawset(&[3.0, 1.0], &[0.0, 4.0]);
        assert_relative_eq!(
            asymptotic_variance_estimate(&two, id).unwrap(),
            2.25,
            max_relative = 1e-14
        );
    }

    #[test]
    fn mc_se_matches_asymptotic_variance() {
        let d = drawset(&[3.0, 1.0, 0.5, 2.0], &[0.0, 4.0, 1.0, -2.0]);
        let e = self_normalized_estimate(&d, id).unwrap();
        assert_relative_eq!(e.mc_se, (e.asym_var_hat / 4.0).sqrt(), max_relative = 1e-15);
    }

    #[test]
    fn ess_examples() {
        assert_relative_eq!(ess(&drawset(&[1.0; 4], &[0.0; 4])).unwrap(), 4.0);
        assert_eq!(ess(&drawset(&[1.0, 0.0, 0.0], &[0.0; 3])).unwrap(), 1.0);
        assert_relative_eq!(
            ess(&drawset(&[3.0, 1.0], &[0.0; 2])).unwrap(),
            1.6,
            max_relative = 1e-14
        );
    }

    #[test]
    fn adjusted_ess_examples() {
        assert_eq!(adjusted_ess(1000.0, 0.0), 1000.0);
        assert_relative_eq!(adjusted_ess(1000.0, 1.0), 2718.281828459045, max_relative = 1e-14);
    }

    #[test]
    fn all_zero_weights_error() {
        let d = drawset(&[0.0, 0.0], &[1.0, 2.0]);
        assert!(matches!(
            self_normalized_estimate(&d, id),
            Err(Is2Error::AllWeightsZero)
        ));
        assert!(matches!(ess(&d), Err(Is2Error::AllWeightsZero)));
        assert!(matches!(
            marginal_likelihood_estimate(&d),
            Err(Is2Error::AllWeightsZero)
        ));
    }

    #[test]
    fn prior_outside_support_zeroes_weight() {
        let mut d = drawset(&[1.0, 1.0], &[0.0, 10.0]);
        d.draws[1].log_prior = f64::NEG_INFINITY;
        d.draws[1].log_lik_hat = f64::INFINITY;
        assert_eq!(d.draws[1].log_weight(), f64::NEG_INFINITY);
        assert_eq!(self_normalized_estimate(&d, id).unwrap().value, 0.0);
    }

    #[test]
    fn marginal_likelihood_examples() {
        let c = drawset(&[2.5; 5], &[0.0; 5]);
        let ml = marginal_likelihood_estimate(&c).unwrap();
        assert_relative_eq!(ml.log_value, 2.5f64.ln(), max_relative = 1e-14);
        assert_eq!(ml.mc_se_of_log, 0.0);
        let two = drawset(&[1.0, 2f64.exp()], &[0.0; 2]);
        let expected = ((1.0 + 2f64.exp()) / 2.0).ln();
        assert_relative_eq!(
            marginal_likelihood_estimate(&two).unwrap().log_value,
            expected,
            max_relative = 1e-14
        );
        assert!((expected - 1.433_780_830_483_027).abs() < 1e-12);
        assert!(matches!(
            marginal_likelihood_estimate(&drawset(&[1.0], &[0.0])),
            Err(Is2Error::TooFewDraws { .. })
        ));
    }

    #[test]
    fn huge_log_weights_stay_finite() {
        let mut d = drawset(&[1.0, 1.0, 1.0], &[1.0, 2.0, 6.0]);
        for (draw, lw) in d.draws.iter_mut().zip([900.0, 900.0 + 2f64.ln(), 100.0]) {
            draw.log_lik_hat = lw;
        }
        let e = self_normalized_estimate(&d, id).unwrap();
        assert_relative_eq!(e.value, 5.0 / 3.0, max_relative = 1e-12);
        let ml = marginal_likelihood_estimate(&d).unwrap();
        assert!(ml.log_value.is_finite());
        assert_relative_eq!(ml.log_value, 900.0 + 1.0f64.ln(), max_relative = 1e-12);
    }

    #[test]
    fn trimmed_examples() {
        let d = drawset(&[10.0, 1.0, 1.0], &[5.0, 0.0, 2.0]);
        assert_relative_eq!(trimmed_estimate(&d, id).unwrap().value, 1.0);
        // ties: first maximal draw is dropped
        let eq = drawset(&[1.0; 4], &[8.0, 1.0, 2.0, 3.0]);
        assert_relative_eq!(trimmed_estimate(&eq, id).unwrap().value, 2.0);
        assert!(matches!(
            trimmed_estimate(&drawset(&[1.0; 2], &[0.0; 2]), id),
            Err(Is2Error::TooFewDraws { .. })
        ));
    }

    #[test]
    fn trimming_removes_antithetic_partner() {
        let mut d = drawset(&[1.0, 9.0, 1.0, 1.0], &[4.0, 100.0, -100.0, 2.0]);
        d.draws[1].antithetic_partner = Some(2);
        d.draws[2].antithetic_partner = Some(1);
        assert_relative_eq!(trimmed_estimate(&d, id).unwrap().value, 3.0);
        // a pair plus one leftover is too few
        let mut small = drawset(&[1.0, 9.0, 1.0], &[0.0; 3]);
        small.draws[1].antithetic_partner = Some(0);
        small.draws[0].antithetic_partner = Some(1);
        assert!(matches!(
            trimmed_estimate(&small, id),
            Err(Is2Error::TooFewDraws { needed: 2, got: 1 })
        ));
    }

    #[test]
    fn bootstrap_of_constant_statistic_is_zero() {
        let d = drawset(&[1.0, 2.0, 3.0, 0.5], &[4.0; 4]);
        assert_eq!(bootstrap_mc_se(&d, id, 200, 9).unwrap(), 0.0);
    }

    #[test]
    fn bootstrap_is_deterministic_and_execution_independent() {
        let d = drawset(&[1.0, 2.0, 3.0, 0.5, 0.1], &[4.0, -1.0, 2.0, 0.3, 7.0]);
        let a = bootstrap_mc_se_with(&d, id, 300, 5, Execution::Sequential).unwrap();
        let b = bootstrap_mc_se_with(&d, id, 300, 5, Execution::Parallel).unwrap();
        assert_eq!(a, b);
        assert!(a > 0.0);
        assert!(bootstrap_mc_se(&d, id, 99, 5).is_err());
    }

    #[test]
    fn bootstrap_matches_classical_se_for_equal_weights() {
        use rand_distr::{Distribution, StandardNormal};
        let mut rng = rng::stream(11, 0);
        let m = 4000;
        let phis: Vec<f64> = (0..m).map(|_| StandardNormal.sample(&mut rng)).collect();
        let d = drawset(&vec![1.0; m], &phis);
        let se = bootstrap_mc_se(&d, id, 400, 1).unwrap();
        let expected = 1.0 / (m as f64).sqrt();
        assert!((se / expected - 1.0).abs() < 0.15, "se {se} vs {expected}");
    }

    #[test]
    fn drawset_validation() {
        assert!(DrawSet::new(vec![], 0, "m", "p").is_err());
        let mut d = drawset(&[1.0, 1.0], &[0.0, 0.0]).draws;
        d[0].log_proposal = f64::NEG_INFINITY;
        assert!(DrawSet::new(d, 0, "m", "p").is_err());
    }
}
