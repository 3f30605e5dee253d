//! Particle marginal Metropolis–Hastings with an independent proposal, and a
//! replication study comparing it with IS² at a matched budget.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Is2Error, Result};
use crate::estimator::{self, DrawSet};
use crate::exec::{try_map_indexed, Execution};
use crate::models::{Model, ParticleBudget};
use crate::proposals::ParameterProposal;
use crate::rng::{self, KEY_LIKELIHOOD, KEY_THETA};
use crate::runner::{evaluate_draw, run_is2, Is2Options};
use crate::stats;

const INIT_ATTEMPTS: usize = 100;
const KEY_REFERENCE: u64 = 17;
const KEY_REPLICATION: u64 = 18;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainState {
    pub theta: Vec<f64>,
    pub log_lik_hat: f64,
    pub log_prior: f64,
    pub log_proposal: f64,
    pub n_particles: u64,
}

impl ChainState {
    fn log_weight(&self) -> f64 {
        self.log_prior + self.log_lik_hat - self.log_proposal
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PmmhChain {
    /// State after each iteration, burn-in included.
    pub states: Vec<ChainState>,
    pub accept_count: usize,
    pub burnin: usize,
}

impl PmmhChain {
    pub fn iterations(&self) -> usize {
        self.states.len()
    }

    pub fn acceptance_rate(&self) -> f64 {
        self.accept_count as f64 / self.states.len() as f64
    }

    /// States after burn-in.
    pub fn kept(&self) -> &[ChainState] {
        &self.states[self.burnin.min(self.states.len())..]
    }

    pub fn values<F: Fn(&[f64]) -> f64>(&self, phi: F) -> Vec<f64> {
        self.kept().iter().map(|s| phi(&s.theta)).collect()
    }

    /// Post-burn-in mean of `φ` and its batch-means standard error.
    pub fn estimate<F: Fn(&[f64]) -> f64>(&self, phi: F) -> (f64, f64) {
        let v = self.values(phi);
        (stats::mean(&v), batch_means_se(&v))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let d = self.states.first().map_or(0, |s| s.theta.len());
        let mut header: Vec<String> = (0..d).map(|j| format!("theta_{j}")).collect();
        header.extend(["log_lik_hat", "log_prior", "log_proposal", "n_particles"].map(String::from));
        w.write_record(&header)?;
        for s in &self.states {
            let mut rec: Vec<String> = s.theta.iter().map(|v| format!("{v:?}")).collect();
            rec.extend([s.log_lik_hat, s.log_prior, s.log_proposal].map(|v| format!("{v:?}")));
            rec.push(s.n_particles.to_string());
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Standard error of a mean from `⌊√n⌋` non-overlapping batches.
pub fn batch_means_se(values: &[f64]) -> f64 {
    let n = values.len();
    let size = (n as f64).sqrt().floor() as usize;
    if size < 1 || n / size < 2 {
        return f64::NAN;
    }
    let batches = n / size;
    let means: Vec<f64> = (0..batches)
        .map(|b| stats::mean(&values[b * size..(b + 1) * size]))
        .collect();
    (stats::sample_variance(&means) / batches as f64).sqrt()
}

fn state_at<M: Model + ?Sized>(
    model: &M,
    proposal: &ParameterProposal,
    theta: Vec<f64>,
    budget: &ParticleBudget,
    rng: &mut rng::StreamRng,
) -> Result<Option<ChainState>> {
    match evaluate_draw(model, proposal, theta, budget, rng) {
        Ok(d) => Ok(Some(ChainState {
            theta: d.theta,
            log_lik_hat: d.log_lik_hat,
            log_prior: d.log_prior,
            log_proposal: d.log_proposal,
            n_particles: d.n_particles,
        })),
        // a failed estimate at a proposed point is a rejection
        Err(e) if e.is_numerical() => Ok(None),
        Err(e) => Err(e),
    }
}

/// Independent-proposal PMMH. The likelihood estimate of the current state is
/// carried forward unchanged until a proposal is accepted.
pub fn pmmh_run<M: Model + ?Sized>(
    model: &M,
    proposal: &ParameterProposal,
    iterations: usize,
    burnin: usize,
    budget: &ParticleBudget,
    seed: u64,
) -> Result<PmmhChain> {
    if iterations == 0 {
        return Err(Is2Error::invalid("PMMH needs at least one iteration"));
    }
    let mut moves = rng::stream(rng::derive(seed, KEY_THETA), 0);
    let lik_seed = rng::derive(seed, KEY_LIKELIHOOD);
    let mut current = None;
    for k in 0..INIT_ATTEMPTS {
        let theta = proposal.sample_one(&mut moves);
        let mut r = rng::stream(lik_seed, k as u64);
        if let Some(s) = state_at(model, proposal, theta, budget, &mut r)? {
            if s.log_weight().is_finite() {
                current = Some(s);
                break;
            }
        }
    }
    let mut current = current.ok_or(Is2Error::InitFailure {
        attempts: INIT_ATTEMPTS,
    })?;
    let mut states = Vec::with_capacity(iterations);
    let mut accept_count = 0;
    for t in 0..iterations {
        let theta = proposal.sample_one(&mut moves);
        let u: f64 = moves.random();
        let mut r = rng::stream(lik_seed, (INIT_ATTEMPTS + t) as u64);
        if let Some(cand) = state_at(model, proposal, theta, budget, &mut r)? {
            let log_alpha = cand.log_weight() - current.log_weight();
            if !log_alpha.is_nan() && u.ln() < log_alpha {
                current = cand;
                accept_count += 1;
            }
        }
        states.push(current.clone());
    }
    Ok(PmmhChain {
        states,
        accept_count,
        burnin,
    })
}

/// A named scalar function of the parameters.
pub struct TestFunction {
    pub name: String,
    pub f: Box<dyn Fn(&[f64]) -> f64 + Send + Sync>,
}

impl TestFunction {
    pub fn new(name: impl Into<String>, f: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            name: name.into(),
            f: Box::new(f),
        }
    }

    pub fn coordinates(names: &[String]) -> Vec<Self> {
        names
            .iter()
            .enumerate()
            .map(|(j, n)| Self::new(n.clone(), move |t: &[f64]| t[j]))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompareOptions {
    /// Importance draws per IS² replication, and post-burn-in PMMH length.
    pub draws: usize,
    pub burnin: usize,
    pub replications: usize,
    pub seed: u64,
    #[serde(default)]
    pub exec: Execution,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodStats {
    pub mse: f64,
    /// Variance across replications of the within-replication SE estimate.
    pub se_variance: f64,
    pub mean_se: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionComparison {
    pub name: String,
    pub reference: f64,
    pub is2: MethodStats,
    pub is2_trimmed: MethodStats,
    pub pmmh: MethodStats,
    pub mse_ratio_is2: f64,
    pub mse_ratio_trimmed: f64,
    pub se_variance_ratio_is2: f64,
    pub se_variance_ratio_trimmed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub model_id: String,
    pub proposal_id: String,
    pub replications: usize,
    pub draws: usize,
    pub mean_acceptance_rate: f64,
    pub functions: Vec<FunctionComparison>,
}

struct Replication {
    is2: Vec<(f64, f64)>,
    trimmed: Vec<(f64, f64)>,
    pmmh: Vec<(f64, f64)>,
    acceptance: f64,
}

fn method_stats(estimates: &[(f64, f64)], reference: f64) -> MethodStats {
    let ses: Vec<f64> = estimates.iter().map(|e| e.1).collect();
    MethodStats {
        mse: estimates.iter().map(|e| (e.0 - reference).powi(2)).sum::<f64>() / estimates.len() as f64,
        se_variance: stats::sample_variance(&ses),
        mean_se: stats::mean(&ses),
    }
}

fn ratio(a: f64, b: f64) -> f64 {
    if a == 0.0 && b == 0.0 {
        1.0
    } else {
        a / b
    }
}

/// Replicated IS², trimmed IS² and PMMH runs at a matched budget.
///
/// `reference` holds the true posterior expectation of each function; when
/// absent, a pooled IS² run with ten times the draws stands in.
pub fn compare_is2_pmmh<M: Model + ?Sized>(
    model: &M,
    proposal: &ParameterProposal,
    budget: &ParticleBudget,
    functions: &[TestFunction],
    reference: Option<&[f64]>,
    opts: &CompareOptions,
) -> Result<ComparisonReport> {
    if opts.replications < 20 {
        return Err(Is2Error::invalid("comparison needs at least 20 replications"));
    }
    let reference: Vec<f64> = match reference {
        Some(r) if r.len() == functions.len() => r.to_vec(),
        Some(_) => return Err(Is2Error::invalid("one reference value per function")),
        None => {
            let pooled = run_is2(
                model,
                proposal,
                &Is2Options {
                    draws: 10 * opts.draws,
                    budget: *budget,
                    seed: rng::derive(opts.seed, KEY_REFERENCE),
                    exec: opts.exec,
                    antithetic_theta: false,
                },
            )?;
            functions
                .iter()
                .map(|f| Ok(estimator::self_normalized_estimate(&pooled, &f.f)?.value))
                .collect::<Result<_>>()?
        }
    };
    let reps = try_map_indexed(opts.replications, opts.exec, |r| -> Result<Replication> {
        let seed = rng::derive(rng::derive(opts.seed, KEY_REPLICATION), r as u64);
        let draws: DrawSet = run_is2(
            model,
            proposal,
            &Is2Options {
                draws: opts.draws,
                budget: *budget,
                seed,
                exec: Execution::Sequential,
                antithetic_theta: false,
            },
        )?;
        let chain = pmmh_run(model, proposal, opts.burnin + opts.draws, opts.burnin, budget, seed)?;
        let mut rep = Replication {
            is2: vec![],
            trimmed: vec![],
            pmmh: vec![],
            acceptance: chain.acceptance_rate(),
        };
        for f in functions {
            let e = estimator::self_normalized_estimate(&draws, &f.f)?;
            rep.is2.push((e.value, e.mc_se));
            let t = estimator::trimmed_estimate(&draws, &f.f)?;
            rep.trimmed.push((t.value, t.mc_se));
            rep.pmmh.push(chain.estimate(&f.f));
        }
        Ok(rep)
    })?;
    let column = |k: usize, pick: fn(&Replication) -> &Vec<(f64, f64)>| -> Vec<(f64, f64)> {
        reps.iter().map(|r| pick(r)[k]).collect()
    };
    let compared = functions
        .iter()
        .enumerate()
        .map(|(k, f)| {
            let is2 = method_stats(&column(k, |r| &r.is2), reference[k]);
            let is2_trimmed = method_stats(&column(k, |r| &r.trimmed), reference[k]);
            let pmmh = method_stats(&column(k, |r| &r.pmmh), reference[k]);
            FunctionComparison {
                name: f.name.clone(),
                reference: reference[k],
                mse_ratio_is2: ratio(is2.mse, pmmh.mse),
                mse_ratio_trimmed: ratio(is2_trimmed.mse, pmmh.mse),
                se_variance_ratio_is2: ratio(is2.se_variance, pmmh.se_variance),
                se_variance_ratio_trimmed: ratio(is2_trimmed.se_variance, pmmh.se_variance),
                is2,
                is2_trimmed,
                pmmh,
            }
        })
        .collect();
    Ok(ComparisonReport {
        model_id: model.id(),
        proposal_id: proposal.id(),
        replications: opts.replications,
        draws: opts.draws,
        mean_acceptance_rate: stats::mean(&reps.iter().map(|r| r.acceptance).collect::<Vec<_>>()),
        functions: compared,
    })
}

impl ComparisonReport {
    /// MSE ratios and SE-variance ratios relative to PMMH.
    pub fn to_table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{} replications of {} draws; PMMH acceptance {:.3}",
            self.replications, self.draws, self.mean_acceptance_rate
        );
        let _ = writeln!(out, "{:<20}{:>12}{:>12}{:>12}", "", "IS²", "IS² trimmed", "PMMH");
        let _ = writeln!(out, "MSE ratio");
        for f in &self.functions {
            let _ = writeln!(out, "{:<20}{:>12.3}{:>12.3}{:>12.3}", f.name, f.mse_ratio_is2, f.mse_ratio_trimmed, 1.0);
        }
        let _ = writeln!(out, "SE variance ratio");
        for f in &self.functions {
            let _ = writeln!(
                out,
                "{:<20}{:>12.3}{:>12.3}{:>12.3}",
                f.name, f.se_variance_ratio_is2, f.se_variance_ratio_trimmed, 1.0
            );
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{lgss, LgssEstimator, LgssModel, LgssParams};

    fn lgss_setup(estimator: LgssEstimator) -> (LgssModel, LgssParams) {
        let p = LgssParams::new(0.6, 0.8, 1.0).unwrap();
        (LgssModel::new(lgss::simulate(&p, 30, 7), 1.0, estimator), p)
    }

    #[test]
    fn point_mass_proposal_freezes_chain() {
        let (model, p) = lgss_setup(LgssEstimator::ParticleFilter);
        let theta0 = LgssModel::theta_of(&p);
        let g = ParameterProposal::gaussian_diag(theta0.clone(), &[0.0, 0.0]).unwrap();
        let chain = pmmh_run(&model, &g, 50, 0, &ParticleBudget::fixed(50), 3).unwrap();
        assert!(chain.states.iter().all(|s| s.theta == theta0));
    }

    #[test]
    fn exact_likelihood_with_posterior_proposal_always_accepts() {
        // with exact weights constant in θ the acceptance ratio is one
        struct Flat;
        impl Model for Flat {
            fn id(&self) -> String {
                "flat".into()
            }
            fn param_names(&self) -> Vec<String> {
                vec!["x".into()]
            }
            fn log_prior(&self, t: &[f64]) -> f64 {
                -0.5 * t[0] * t[0] - 0.5 * (2.0 * std::f64::consts::PI).ln()
            }
            fn estimate_loglik(
                &self,
                _: &[f64],
                _: &ParticleBudget,
                _: &mut rng::StreamRng,
            ) -> Result<crate::LikelihoodEstimate> {
                Ok(crate::LikelihoodEstimate::exact(-3.0))
            }
        }
        let g = ParameterProposal::gaussian_diag(vec![0.0], &[1.0]).unwrap();
        let chain = pmmh_run(&Flat, &g, 200, 0, &ParticleBudget::fixed(1), 5).unwrap();
        assert_eq!(chain.accept_count, 200);
    }

    #[test]
    fn rejections_keep_the_current_estimate() {
        let (model, p) = lgss_setup(LgssEstimator::ParticleFilter);
        let g = ParameterProposal::student_t(LgssModel::theta_of(&p), &[vec![0.3, 0.0], vec![0.0, 0.3]], 5.0).unwrap();
        let chain = pmmh_run(&model, &g, 300, 0, &ParticleBudget::fixed(20), 9).unwrap();
        assert!(chain.accept_count > 0 && chain.accept_count < 300);
        let changes = chain
            .states
            .windows(2)
            .filter(|w| w[0].log_lik_hat != w[1].log_lik_hat)
            .count();
        let moves = chain.states.windows(2).filter(|w| w[0].theta != w[1].theta).count();
        assert_eq!(changes, moves);
        assert!(moves <= chain.accept_count);
    }

    #[test]
    fn constant_function_has_zero_mse() {
        let (model, p) = lgss_setup(LgssEstimator::Exact);
        let g = ParameterProposal::student_t(LgssModel::theta_of(&p), &[vec![0.3, 0.0], vec![0.0, 0.3]], 5.0).unwrap();
        let f = [TestFunction::new("one", |_: &[f64]| 1.0)];
        let report = compare_is2_pmmh(
            &model,
            &g,
            &ParticleBudget::fixed(1),
            &f,
            Some(&[1.0]),
            &CompareOptions {
                draws: 50,
                burnin: 5,
                replications: 20,
                seed: 1,
                exec: Execution::Parallel,
            },
        )
        .unwrap();
        let c = &report.functions[0];
        assert_eq!(c.is2.mse, 0.0);
        assert_eq!(c.pmmh.mse, 0.0);
        assert!(report.to_table().contains("MSE ratio"));
    }

    #[test]
    fn batch_means_of_iid_noise_match_classical_se() {
        let mut r = rng::stream(2, 2);
        let v: Vec<f64> = (0..40_000).map(|_| r.random::<f64>()).collect();
        let se = batch_means_se(&v);
        let classical = (1.0f64 / 12.0 / 40_000.0).sqrt();
        assert!((se / classical - 1.0).abs() < 0.25);
    }
}
