//! Choosing the number of particles.
//!
//! A likelihood evaluation with `N` particles costs `τ₀ + τ₁ N`. If `N(θ)` is
//! tuned so that `V(log p̂) = σ²` at every θ, the cost of reaching a fixed
//! posterior precision is proportional to
//! `CT*(σ²) = exp(σ²) (τ₀ + τ₁ γ̄² / σ²)`, where `γ̄²` is the average of the
//! asymptotic variance constant `γ²(θ) = N · V(log p̂_N)`.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Is2Error, Result};
use crate::likelihood::LikelihoodEstimate;
use crate::stats;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostModel {
    /// Overhead per likelihood evaluation, seconds.
    pub tau0: f64,
    /// Cost per particle, seconds.
    pub tau1: f64,
}

impl CostModel {
    pub fn new(tau0: f64, tau1: f64) -> Result<Self> {
        if !(tau0 >= 0.0 && tau0.is_finite()) || !(tau1 > 0.0 && tau1.is_finite()) {
            return Err(Is2Error::invalid(format!(
                "cost model needs tau0 >= 0 and tau1 > 0, got ({tau0}, {tau1})"
            )));
        }
        Ok(Self { tau0, tau1 })
    }

    pub fn eval_time(&self, n: f64) -> f64 {
        self.tau0 + self.tau1 * n
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningProfile {
    pub cost: CostModel,
    pub gamma_bar2: f64,
    pub sigma2_opt: f64,
    /// Pilot particle count used to estimate `gamma_bar2`.
    pub n0: usize,
    /// Pilot estimate of `γ²(θ)` keyed by pilot draw index.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub per_theta_gamma2: Option<BTreeMap<usize, f64>>,
}

impl TuningProfile {
    pub fn new(cost: CostModel, gamma_bar2: f64, n0: usize) -> Self {
        Self {
            cost,
            gamma_bar2,
            sigma2_opt: sigma2_opt(cost, gamma_bar2),
            n0,
            per_theta_gamma2: None,
        }
    }

    /// Particle count giving log-likelihood variance `sigma2` at a typical θ.
    pub fn particles_for(&self, sigma2: f64) -> usize {
        ((self.gamma_bar2 / sigma2).ceil() as usize).max(1)
    }
}

/// Inputs of the marginal-likelihood cost model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MlCostInputs {
    /// Variance of the normalised weights `W_i` under the proposal.
    pub v: f64,
    pub cost: CostModel,
    pub gamma_bar2: f64,
}

/// Leave-one-block-out jackknife variance of `log((1/N) Σ exp(ℓ_j))`.
///
/// Blocks are consecutive runs of `block` particles (a trailing partial block
/// counts as one unit). Weights are shifted by their maximum; a leave-out sum
/// is `S − U_k` unless unit `k` dominates, in which case it is rebuilt from
/// prefix and suffix sums to avoid cancellation.
pub fn jackknife_log_mean_exp(log_weights: &[f64], block: usize) -> Result<f64> {
    stratified_jackknife_log_mean_exp(log_weights, block, &[log_weights.len()])
}

/// Jackknife for particles drawn in fixed-size strata laid out consecutively.
///
/// Deleting a block of stratum `s` rescales only that stratum's mean, so the
/// leave-out estimate is `(n_s/N) mean_s^(−k) + Σ_{r≠s} S_r / N`; the
/// per-stratum jackknife variances add.
pub fn stratified_jackknife_log_mean_exp(log_weights: &[f64], block: usize, strata: &[usize]) -> Result<f64> {
    let block = block.max(1);
    if strata.iter().sum::<usize>() != log_weights.len() {
        return Err(Is2Error::invalid("strata sizes do not add up to the particle count"));
    }
    let ranges: Vec<(usize, usize)> = strata
        .iter()
        .scan(0, |start, &len| {
            let r = (*start, *start + len);
            *start += len;
            Some(r)
        })
        .filter(|r| r.1 > r.0)
        .collect();
    if ranges.iter().any(|&(a, b)| b - a <= block) {
        return Err(Is2Error::TooFewParticles {
            needed: 2 * block * ranges.len(),
            got: log_weights.len(),
        });
    }
    let shift = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if shift == f64::NEG_INFINITY {
        return Ok(f64::INFINITY);
    }
    let n = log_weights.len() as f64;
    let stratum_sum: Vec<f64> = ranges
        .iter()
        .map(|&(a, b)| log_weights[a..b].iter().map(|l| (l - shift).exp()).sum())
        .collect();
    let mut variance = 0.0;
    for (s, &(a, b)) in ranges.iter().enumerate() {
        let units: Vec<&[f64]> = log_weights[a..b].chunks(block).collect();
        let g = units.len();
        let unit_sum: Vec<f64> = units
            .iter()
            .map(|u| u.iter().map(|l| (l - shift).exp()).sum())
            .collect();
        let total = stratum_sum[s];
        let others: f64 = stratum_sum.iter().enumerate().filter(|&(r, _)| r != s).map(|(_, v)| v).sum();
        let mut prefix = vec![0.0; g + 1];
        let mut suffix = vec![0.0; g + 1];
        for k in 0..g {
            prefix[k + 1] = prefix[k] + unit_sum[k];
        }
        for k in (0..g).rev() {
            suffix[k] = suffix[k + 1] + unit_sum[k];
        }
        let n_s = (b - a) as f64;
        let loo: Vec<f64> = (0..g)
            .map(|k| {
                let rest = if unit_sum[k] <= 0.5 * total {
                    total - unit_sum[k]
                } else {
                    prefix[k] + suffix[k + 1]
                };
                let kept = n_s - units[k].len() as f64;
                (n_s / n * rest / kept + others / n).ln() + shift
            })
            .collect();
        if loo.iter().any(|v| !v.is_finite()) {
            // every remaining weight is zero in some leave-out set
            return Ok(f64::INFINITY);
        }
        // deviations from the first value keep identical values exactly at zero
        let dev: Vec<f64> = loo.iter().map(|v| v - loo[0]).collect();
        let mean = stats::mean(&dev);
        let ss: f64 = dev.iter().map(|v| (v - mean).powi(2)).sum();
        variance += (g as f64 - 1.0) / g as f64 * ss;
    }
    Ok(variance)
}

/// Jackknife estimate of `V(log p̂)` from the particles of one estimate.
/// Stratified estimates use the stratified jackknife unless a stratum is too
/// small to delete from, in which case the strata are pooled.
pub fn jackknife_loglik_variance(estimate: &LikelihoodEstimate) -> Result<f64> {
    let weights = estimate
        .particle_log_weights
        .as_deref()
        .ok_or(Is2Error::MissingVariance)?;
    if weights.len() < 10 {
        return Err(Is2Error::TooFewParticles {
            needed: 10,
            got: weights.len(),
        });
    }
    let block = estimate.block_size;
    match estimate.strata.as_deref() {
        Some(strata) if strata.iter().all(|&n_s| n_s == 0 || n_s > block) => {
            stratified_jackknife_log_mean_exp(weights, block, strata)
        }
        _ => jackknife_log_mean_exp(weights, block),
    }
}

/// `V̂(log p̂)`: the estimator's own figure when present, else the jackknife.
pub fn loglik_variance(estimate: &LikelihoodEstimate) -> Result<f64> {
    match estimate.loglik_var_hat {
        Some(v) => Ok(v),
        None => jackknife_loglik_variance(estimate),
    }
}

/// Sample variance of replicated log-likelihood estimates at one θ.
pub fn replicate_loglik_variance(estimates: &[LikelihoodEstimate]) -> f64 {
    let logs: Vec<f64> = estimates.iter().map(|e| e.log_value).collect();
    stats::sample_variance(&logs)
}

/// `γ̄² = (N₀ / J) Σ_j V̂_j`.
pub fn gamma_bar_from_variances(n0: usize, variances: &[f64]) -> f64 {
    n0 as f64 * stats::mean(variances)
}

/// Pilot estimate of `γ̄²` from `J ≥ 5` estimates sharing a particle count.
pub fn estimate_gamma_bar(pilots: &[(Vec<f64>, LikelihoodEstimate)]) -> Result<f64> {
    if pilots.len() < 5 {
        return Err(Is2Error::TooFewPilots {
            needed: 5,
            got: pilots.len(),
        });
    }
    let n0 = pilots[0].1.n_particles;
    if pilots.iter().any(|(_, e)| e.n_particles != n0) {
        return Err(Is2Error::invalid("pilot estimates use different particle counts"));
    }
    let variances: Vec<f64> = pilots
        .iter()
        .map(|(_, e)| loglik_variance(e))
        .collect::<Result<_>>()?;
    Ok(gamma_bar_from_variances(n0, &variances))
}

pub fn ct_star(sigma2: f64, cost: CostModel, gamma_bar2: f64) -> f64 {
    sigma2.exp() * (cost.tau0 + cost.tau1 * gamma_bar2 / sigma2)
}

/// Minimiser of [`ct_star`]: 1 without overhead, otherwise the positive root
/// of `σ⁴ τ₀/γ̄² + σ² τ₁ − τ₁ = 0`, written in a cancellation-free form.
pub fn sigma2_opt(cost: CostModel, gamma_bar2: f64) -> f64 {
    if cost.tau0 == 0.0 {
        return 1.0;
    }
    let a = cost.tau0 / gamma_bar2;
    let t1 = cost.tau1;
    2.0 * t1 / (t1 + (t1 * t1 + 4.0 * a * t1).sqrt())
}

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Golden-section search for the minimiser of a unimodal `f` on `[lo, hi]`.
pub fn golden_section_min<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64, tol: f64) -> f64 {
    let (mut a, mut b) = (lo, hi);
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while (b - a).abs() > tol {
        if fc < fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Golden section in `log σ²` over `[lo, hi]`.
pub fn minimize_sigma2<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64) -> f64 {
    golden_section_min(|s| f(s.exp()), lo.ln(), hi.ln(), 1e-10).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TuneSchedule {
    pub n_init: usize,
    pub growth: f64,
    pub n_max: usize,
}

impl Default for TuneSchedule {
    fn default() -> Self {
        Self {
            n_init: 20,
            growth: 2.0,
            n_max: 1_000_000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TuneOutcome {
    pub n: usize,
    pub v_hat: f64,
    /// The cap was hit before `v_hat` reached the target.
    pub cap_reached: bool,
}

/// Grow `n` geometrically until the estimated log-likelihood variance is at
/// most `target_sigma2`.
///
/// The estimates produced here are pilots only; the caller draws fresh
/// particles for the estimate that enters the importance weight.
pub fn tune_particles<F>(mut estimate: F, target_sigma2: f64, schedule: TuneSchedule) -> Result<TuneOutcome>
where
    F: FnMut(usize) -> Result<LikelihoodEstimate>,
{
    if !(target_sigma2 > 0.0) {
        return Err(Is2Error::invalid("target variance must be positive"));
    }
    if !(schedule.growth > 1.0) || schedule.n_init == 0 {
        return Err(Is2Error::invalid("tuning needs n_init >= 1 and growth > 1"));
    }
    let mut n = schedule.n_init.min(schedule.n_max);
    loop {
        let v_hat = loglik_variance(&estimate(n)?)?;
        if v_hat <= target_sigma2 {
            return Ok(TuneOutcome {
                n,
                v_hat,
                cap_reached: false,
            });
        }
        if n >= schedule.n_max {
            return Ok(TuneOutcome {
                n: schedule.n_max,
                v_hat,
                cap_reached: true,
            });
        }
        n = ((schedule.growth * n as f64).ceil() as usize).min(schedule.n_max);
    }
}

/// Per-individual particle counts `N_i = max(2, ⌈γ̂_i² I / σ²⌉)` so that each
/// of the `I` independent terms contributes about `σ²/I` to the variance.
/// Counts are rounded up to even numbers when antithetic pairs are in use.
pub fn panel_particle_allocation(gamma2: &[f64], sigma2: f64, antithetic: bool) -> Vec<usize> {
    let i = gamma2.len() as f64;
    gamma2
        .iter()
        .map(|g| {
            let raw = (g * i / sigma2).ceil();
            let mut n = if raw.is_finite() { (raw as usize).max(2) } else { 2 };
            if antithetic && n % 2 == 1 {
                n += 1;
            }
            n
        })
        .collect()
}

/// Draws needed for precision `P*`: `⌈σ²_IS(φ) exp(σ²) / P*⌉`.
pub fn required_samples(sigma2_is_phi: f64, sigma2: f64, precision: f64) -> u64 {
    (sigma2_is_phi * sigma2.exp() / precision).ceil() as u64
}

/// Time-normalised variance.
pub fn tnv(var_hat: f64, elapsed_seconds: f64) -> f64 {
    var_hat * elapsed_seconds
}

/// `σ²_IS²(φ) / σ²_IS(φ) = exp(σ²)`.
pub fn inflation_factor(sigma2: f64) -> f64 {
    sigma2.exp()
}

/// Relative inefficiency of the IS² marginal-likelihood estimator:
/// `(exp(σ²)(v + 1) − 1) / v`.
pub fn ml_inflation_factor(sigma2: f64, v: f64) -> f64 {
    (sigma2.exp() * (v + 1.0) - 1.0) / v
}

/// `(τ₀ + τ₁ γ̄² / σ²)(exp(σ²)(v + 1) − 1)`.
pub fn ml_ct_star(sigma2: f64, cost: CostModel, gamma_bar2: f64, v: f64) -> f64 {
    (cost.tau0 + cost.tau1 * gamma_bar2 / sigma2) * (sigma2.exp() * (v + 1.0) - 1.0)
}

/// Minimiser of [`ml_ct_star`] over `σ² ∈ [1e-4, 10]`.
pub fn sigma2_min_ml(v: f64, cost: CostModel, gamma_bar2: f64) -> Result<f64> {
    if !(v > 0.0) {
        return Err(Is2Error::invalid("weight variance v must be positive"));
    }
    Ok(minimize_sigma2(
        |s| ml_ct_star(s, cost, gamma_bar2, v),
        1e-4,
        10.0,
    ))
}

impl MlCostInputs {
    pub fn sigma2_min(&self) -> Result<f64> {
        sigma2_min_ml(self.v, self.cost, self.gamma_bar2)
    }

    /// `CT*_ml(σ²_opt) / CT*_ml(σ²_min(v))`: the price of using `σ²_opt` for
    /// the marginal likelihood.
    pub fn opt_over_min_ratio(&self) -> Result<f64> {
        let smin = self.sigma2_min()?;
        let sopt = sigma2_opt(self.cost, self.gamma_bar2);
        Ok(ml_ct_star(sopt, self.cost, self.gamma_bar2, self.v)
            / ml_ct_star(smin, self.cost, self.gamma_bar2, self.v))
    }
}

/// Least-squares fit of `time = τ₀ + τ₁ N` to `(N, seconds)` measurements.
/// A negative intercept is clamped to zero.
pub fn fit_cost_model(samples: &[(usize, f64)]) -> Result<CostModel> {
    if samples.len() < 2 {
        return Err(Is2Error::invalid("cost fit needs at least two timings"));
    }
    let xs: Vec<f64> = samples.iter().map(|(n, _)| *n as f64).collect();
    let ys: Vec<f64> = samples.iter().map(|(_, t)| *t).collect();
    let mx = stats::mean(&xs);
    let my = stats::mean(&ys);
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Is2Error::invalid("cost fit needs at least two particle counts"));
    }
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let tau1 = sxy / sxx;
    if !(tau1 > 0.0) {
        return Err(Is2Error::invalid("timings do not grow with the particle count"));
    }
    let tau0 = (my - tau1 * mx).max(0.0);
    CostModel::new(tau0, tau1)
}

/// Time `evaluate(N)` `repeats` times at each count and fit `τ₀ + τ₁ N` to
/// the median timing per count.
pub fn measure_cost_model<F>(mut evaluate: F, counts: &[usize], repeats: usize) -> Result<CostModel>
where
    F: FnMut(usize) -> Result<()>,
{
    let mut samples = Vec::with_capacity(counts.len());
    for &n in counts {
        let mut times = Vec::with_capacity(repeats.max(1));
        for _ in 0..repeats.max(1) {
            let start = std::time::Instant::now();
            evaluate(n)?;
            times.push(start.elapsed().as_secs_f64());
        }
        times.sort_by(f64::total_cmp);
        samples.push((n, times[times.len() / 2]));
    }
    fit_cost_model(&samples)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn est_with_var(v: f64, n: usize) -> LikelihoodEstimate {
        LikelihoodEstimate {
            log_value: 0.0,
            n_particles: n,
            loglik_var_hat: Some(v),
            particle_log_weights: None,
            block_size: 1,
            strata: None,
        }
    }

    #[test]
    fn jackknife_of_equal_weights_is_zero() {
        let e = LikelihoodEstimate::from_particles(vec![-4.2; 25], 1);
        assert_eq!(jackknife_loglik_variance(&e).unwrap(), 0.0);
    }

    #[test]
    fn jackknife_hand_example() {
        // leave-one-out values log 1.5, log 1.5, log 1 → V = 4 (ln 1.5)² / 9
        let v = jackknife_log_mean_exp(&[0.0, 0.0, 2f64.ln()], 1).unwrap();
        assert_relative_eq!(v, 4.0 * 1.5f64.ln().powi(2) / 9.0, max_relative = 1e-13);
    }

    #[test]
    fn stratified_jackknife_ignores_between_stratum_spread() {
        let mut lw = vec![0.0; 6];
        lw.extend([3.0; 6]);
        assert_eq!(stratified_jackknife_log_mean_exp(&lw, 1, &[6, 6]).unwrap(), 0.0);
        assert!(jackknife_log_mean_exp(&lw, 1).unwrap() > 0.0);
    }

    #[test]
    fn stratified_jackknife_hand_example() {
        // strata {1, 2, 3} and {4, 4}: N p̂ = 14; deleting from the first
        // stratum gives (3/5)(5/2, 2, 3/2) + 8/5, the second is constant
        let lw: Vec<f64> = [1.0f64, 2.0, 3.0, 4.0, 4.0].iter().map(|w| w.ln()).collect();
        let loo: Vec<f64> = [2.5, 2.0, 1.5].iter().map(|m| (0.6 * m + 1.6f64).ln()).collect();
        let mean = loo.iter().sum::<f64>() / 3.0;
        let expected = 2.0 / 3.0 * loo.iter().map(|v| (v - mean).powi(2)).sum::<f64>();
        let v = stratified_jackknife_log_mean_exp(&lw, 1, &[3, 2]).unwrap();
        assert_relative_eq!(v, expected, max_relative = 1e-12);
        assert!(stratified_jackknife_log_mean_exp(&lw, 1, &[4, 2]).is_err());
    }

    #[test]
    fn jackknife_requires_particles() {
        let e = LikelihoodEstimate::from_particles(vec![0.0; 9], 1);
        assert!(matches!(
            jackknife_loglik_variance(&e),
            Err(Is2Error::TooFewParticles { needed: 10, got: 9 })
        ));
        assert!(matches!(
            jackknife_loglik_variance(&LikelihoodEstimate::exact(0.0)),
            Err(Is2Error::MissingVariance)
        ));
    }

    #[test]
    fn jackknife_blocks_match_pair_means() {
        // blocking pairs equals the plain jackknife on pair-averaged weights
        let lw = [0.1, -0.3, 1.2, 0.0, -2.0, 0.7, 0.4, 0.4];
        let pairs: Vec<f64> = lw
            .chunks(2)
            .map(crate::stats::log_mean_exp)
            .collect();
        assert_relative_eq!(
            jackknife_log_mean_exp(&lw, 2).unwrap(),
            jackknife_log_mean_exp(&pairs, 1).unwrap(),
            max_relative = 1e-12
        );
    }

    #[test]
    fn gamma_bar_examples() {
        assert_relative_eq!(gamma_bar_from_variances(100, &[0.5, 1.5]), 100.0);
        assert_relative_eq!(gamma_bar_from_variances(40, &[0.3; 7]), 12.0, max_relative = 1e-14);
        assert_relative_eq!(gamma_bar_from_variances(24, &[1.068]), 25.632, max_relative = 1e-12);
        let pilots: Vec<_> = (0..6).map(|_| (vec![0.0], est_with_var(0.25, 80))).collect();
        assert_relative_eq!(estimate_gamma_bar(&pilots).unwrap(), 20.0, max_relative = 1e-14);
        assert!(matches!(
            estimate_gamma_bar(&pilots[..4]),
            Err(Is2Error::TooFewPilots { .. })
        ));
    }

    #[test]
    fn ct_star_examples() {
        let c = CostModel::new(0.0, 1.0).unwrap();
        assert_relative_eq!(ct_star(1.0, c, 1.0), std::f64::consts::E, max_relative = 1e-15);
        assert!(ct_star(1e-8, c, 1.0) > 1e7);
        assert!(ct_star(50.0, c, 1.0) > 1e20);
    }

    #[test]
    fn sigma2_opt_examples() {
        for (t1, g) in [(1.0, 1.0), (3e-5, 100.0), (0.2, 0.01)] {
            assert_eq!(sigma2_opt(CostModel::new(0.0, t1).unwrap(), g), 1.0);
        }
        let mixl = CostModel::new(0.067, 8.97e-5).unwrap();
        let s = sigma2_opt(mixl, 25.63);
        assert!((s - 0.17).abs() < 0.005, "{s}");
    }

    #[test]
    fn tune_stops_immediately_when_on_target() {
        let out = tune_particles(|n| Ok(est_with_var(0.5, n)), 1.0, TuneSchedule::default()).unwrap();
        assert_eq!(out.n, 20);
        assert!(!out.cap_reached);
    }

    #[test]
    fn tune_follows_doubling_schedule() {
        let schedule = TuneSchedule {
            n_init: 1,
            growth: 2.0,
            n_max: 1_000_000,
        };
        let mut tried = vec![];
        let out = tune_particles(
            |n| {
                tried.push(n);
                Ok(est_with_var(4.0 / n as f64, n))
            },
            1.0,
            schedule,
        )
        .unwrap();
        assert_eq!(out.n, 4);
        assert_eq!(tried, vec![1, 2, 4]);
    }

    #[test]
    fn tune_reports_cap() {
        let schedule = TuneSchedule {
            n_init: 10,
            growth: 3.0,
            n_max: 100,
        };
        let out = tune_particles(|n| Ok(est_with_var(1e6 / n as f64, n)), 1.0, schedule).unwrap();
        assert_eq!(out.n, 100);
        assert!(out.cap_reached);
    }

    #[test]
    fn panel_allocation_examples() {
        assert_eq!(panel_particle_allocation(&[2.0; 79], 1.0, false)[0], 158);
        assert_eq!(panel_particle_allocation(&[0.0127; 79], 1.0, false)[0], 2);
        assert_eq!(panel_particle_allocation(&[0.0; 5], 1.0, true), vec![2; 5]);
        assert_eq!(panel_particle_allocation(&[0.5, 0.26], 1.0, true), vec![2, 2]);
        assert_eq!(panel_particle_allocation(&[1.4, 0.1], 1.0, true), vec![4, 2]);
        assert_eq!(panel_particle_allocation(&[1.4, 0.1], 1.0, false), vec![3, 2]);
    }

    #[test]
    fn required_samples_examples() {
        assert_eq!(required_samples(1.0, 0.0, 0.01), 100);
        assert_eq!(required_samples(1.0, 1.0, 0.01), 272);
        let a = required_samples(3.0, 0.0, 1e-3);
        let b = required_samples(3.0, 2f64.ln(), 1e-3);
        assert_eq!(b, 2 * a);
    }

    #[test]
    fn tnv_and_inflation_examples() {
        assert_eq!(tnv(2.0, 3.0), 6.0);
        assert_eq!(tnv(0.0, 12.5), 0.0);
        assert_eq!(inflation_factor(0.0), 1.0);
        assert!((inflation_factor(1.0) - std::f64::consts::E).abs() < 1e-12);
        assert!((inflation_factor(0.5) / inflation_factor(1.0) - 0.607).abs() < 5e-4);
        assert_eq!(ml_inflation_factor(0.0, 3.7), 1.0);
        assert_relative_eq!(
            ml_inflation_factor(1.0, 1.0),
            2.0 * std::f64::consts::E - 1.0,
            max_relative = 1e-15
        );
        assert!((ml_inflation_factor(1.3, 1e9) - 1.3f64.exp()).abs() < 1e-6);
    }

    #[test]
    fn ml_ct_star_examples() {
        let c = CostModel::new(0.0, 1.0).unwrap();
        assert_relative_eq!(
            ml_ct_star(1.0, c, 1.0, 1.0),
            2.0 * std::f64::consts::E - 1.0,
            max_relative = 1e-15
        );
        // large v: divided by (v + 1) it approaches ct_star
        let c = CostModel::new(0.3, 0.01).unwrap();
        let v = 1e9;
        assert_relative_eq!(
            ml_ct_star(0.4, c, 12.0, v) / (v + 1.0),
            ct_star(0.4, c, 12.0),
            max_relative = 1e-8
        );
    }

    #[test]
    fn cost_fit_recovers_line() {
        let samples: Vec<(usize, f64)> =
            [10, 20, 40, 80].iter().map(|&n| (n, 0.5 + 0.01 * n as f64)).collect();
        let c = fit_cost_model(&samples).unwrap();
        assert_relative_eq!(c.tau0, 0.5, max_relative = 1e-12);
        assert_relative_eq!(c.tau1, 0.01, max_relative = 1e-12);
        assert!(fit_cost_model(&[(10, 1.0), (10, 2.0)]).is_err());
    }

    #[test]
    fn cost_model_validation() {
        assert!(CostModel::new(-1.0, 1.0).is_err());
        assert!(CostModel::new(0.0, 0.0).is_err());
    }

    #[test]
    fn measured_cost_recovers_sleeping_stub() {
        let (tau0, tau1) = (4e-2, 1e-3);
        let cost = measure_cost_model(
            |n| {
                std::thread::sleep(std::time::Duration::from_secs_f64(tau0 + tau1 * n as f64));
                Ok(())
            },
            &[10, 60, 120],
            3,
        )
        .unwrap();
        assert!((cost.tau0 / tau0 - 1.0).abs() < 0.1, "{cost:?}");
        assert!((cost.tau1 / tau1 - 1.0).abs() < 0.1, "{cost:?}");
    }
}
