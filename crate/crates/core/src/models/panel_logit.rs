//! Random-intercept panel logit.
//!
//! `P(y_it = 1 | α_i) = Λ(x_itᵀβ + α_i)` with `α_i ~ N(0, σ_α²)` independent
//! across individuals. Inference is over `θ = (β, log σ_α²)`.
//!
//! Each individual's integral is estimated by importance sampling from a
//! defensive mixture of its Laplace approximation and the random-effect
//! prior; the panel estimate is the product of the individual estimates.

use std::path::Path;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{log_normal_pdf, logistic, softplus, Model, ParticleBudget};
use crate::error::{Is2Error, Result};
use crate::likelihood::{
    is_likelihood_estimate, DefensiveMixture, LatentProposal, LatentSampler, LatentTarget,
    LikelihoodEstimate, SamplingOptions,
};
use crate::rng::{self, StreamRng, KEY_PILOT};
use crate::tuning;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelIndividual {
    /// One covariate row per occasion.
    pub x: Vec<Vec<f64>>,
    pub y: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelData {
    pub individuals: Vec<PanelIndividual>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelParams {
    pub beta: Vec<f64>,
    pub sigma_alpha2: f64,
}

impl PanelData {
    pub fn new(individuals: Vec<PanelIndividual>) -> Result<Self> {
        let Some(first) = individuals.first() else {
            return Err(Is2Error::invalid("panel needs at least one individual"));
        };
        let Some(row) = first.x.first() else {
            return Err(Is2Error::invalid("panel needs at least one occasion"));
        };
        let p = row.len();
        for (i, ind) in individuals.iter().enumerate() {
            if ind.x.is_empty() || ind.x.len() != ind.y.len() || ind.x.iter().any(|r| r.len() != p) {
                return Err(Is2Error::invalid(format!("individual {i} has ragged covariates")));
            }
        }
        Ok(Self { individuals })
    }

    pub fn n_individuals(&self) -> usize {
        self.individuals.len()
    }

    pub fn n_covariates(&self) -> usize {
        self.individuals[0].x[0].len()
    }

    pub fn n_observations(&self) -> usize {
        self.individuals.iter().map(|i| i.y.len()).sum()
    }

    /// Intercept plus standard-normal covariates, one column per `β` entry.
    pub fn simulate(params: &PanelParams, individuals: usize, occasions: usize, seed: u64) -> Result<Self> {
        let inds = (0..individuals)
            .map(|i| {
                let mut rng = rng::stream(seed, i as u64);
                let alpha = params.sigma_alpha2.sqrt() * rng.sample::<f64, _>(StandardNormal);
                let mut x = Vec::with_capacity(occasions);
                let mut y = Vec::with_capacity(occasions);
                for _ in 0..occasions {
                    let row: Vec<f64> = (0..params.beta.len())
                        .map(|k| if k == 0 { 1.0 } else { rng.sample(StandardNormal) })
                        .collect();
                    let eta: f64 = row.iter().zip(&params.beta).map(|(a, b)| a * b).sum();
                    y.push(rng.random::<f64>() < logistic(eta + alpha));
                    x.push(row);
                }
                PanelIndividual { x, y }
            })
            .collect();
        Self::new(inds)
    }

    /// Long-format CSV: `individual,occasion,y,x0,x1,…`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let mut header = vec!["individual".to_string(), "occasion".into(), "y".into()];
        header.extend((0..self.n_covariates()).map(|k| format!("x{k}")));
        w.write_record(&header)?;
        for (i, ind) in self.individuals.iter().enumerate() {
            for (t, (row, y)) in ind.x.iter().zip(&ind.y).enumerate() {
                let mut rec = vec![i.to_string(), t.to_string(), (*y as u8).to_string()];
                rec.extend(row.iter().map(|v| format!("{v:?}")));
                w.write_record(&rec)?;
            }
        }
        w.flush()?;
        Ok(())
    }

    /// Reads the format of [`PanelData::write_csv`]; rows of one individual
    /// must be contiguous.
    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let mut inds: Vec<PanelIndividual> = Vec::new();
        let mut last: Option<String> = None;
        for rec in r.records() {
            let rec = rec?;
            if rec.len() < 4 {
                return Err(Is2Error::invalid("panel CSV needs individual, occasion, y and covariates"));
            }
            let y = match &rec[2] {
                "0" => false,
                "1" => true,
                other => return Err(Is2Error::invalid(format!("outcome must be 0 or 1, got {other}"))),
            };
            let row = rec
                .iter()
                .skip(3)
                .map(|v| v.trim().parse::<f64>().map_err(|e| Is2Error::invalid(format!("bad covariate {v}: {e}"))))
                .collect::<Result<Vec<_>>>()?;
            if last.as_deref() != Some(&rec[0]) {
                inds.push(PanelIndividual { x: vec![], y: vec![] });
                last = Some(rec[0].to_string());
            }
            let ind = inds.last_mut().expect("pushed above");
            ind.x.push(row);
            ind.y.push(y);
        }
        Self::new(inds)
    }
}

/// Log-likelihood of one individual's outcomes given linear predictors and `α`.
fn log_obs(eta: &[f64], y: &[bool], alpha: f64) -> f64 {
    eta.iter()
        .zip(y)
        .map(|(e, &yi)| if yi { -softplus(-(e + alpha)) } else { -softplus(e + alpha) })
        .sum()
}

/// Mode and curvature-based scale of `α ↦ log p(y|α) + log N(α; 0, σ²)`.
pub(crate) fn laplace(eta: &[f64], y: &[bool], sigma2: f64) -> (f64, f64) {
    let f = |a: f64| log_obs(eta, y, a) - 0.5 * a * a / sigma2;
    let derivs = |a: f64| {
        let mut g = -a / sigma2;
        let mut h = -1.0 / sigma2;
        for (e, &yi) in eta.iter().zip(y) {
            let p = logistic(e + a);
            g += yi as u8 as f64 - p;
            h -= p * (1.0 - p);
        }
        (g, h)
    };
    let mut a = 0.0;
    for _ in 0..100 {
        let (g, h) = derivs(a);
        let step = -g / h;
        let f0 = f(a);
        let mut t = 1.0;
        while f(a + t * step) < f0 && t > 1e-12 {
            t *= 0.5;
        }
        a += t * step;
        if (t * step).abs() < 1e-12 * (1.0 + a.abs()) {
            break;
        }
    }
    let (_, h) = derivs(a);
    (a, (-1.0 / h).sqrt())
}

struct Individual<'a> {
    eta: Vec<f64>,
    y: &'a [bool],
    sigma2: f64,
}

impl LatentTarget for Individual<'_> {
    fn latent_dim(&self) -> usize {
        1
    }

    fn log_obs_density(&self, x: &[f64]) -> f64 {
        log_obs(&self.eta, self.y, x[0])
    }

    fn log_latent_prior(&self, x: &[f64]) -> f64 {
        log_normal_pdf(x[0], 0.0, self.sigma2)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PanelLogitModel {
    pub data: PanelData,
    /// Weight of the Laplace component in the defensive mixture.
    #[serde(default = "default_pi")]
    pub pi: f64,
    #[serde(default = "default_sampling")]
    pub sampling: SamplingOptions,
    /// Particles per individual used to estimate `γ_i²` under a target budget.
    #[serde(default = "default_pilot")]
    pub pilot_particles: usize,
    #[serde(default = "default_beta_var")]
    pub beta_prior_var: f64,
}

fn default_pi() -> f64 {
    0.5
}

fn default_sampling() -> SamplingOptions {
    SamplingOptions {
        antithetic: false,
        stratified: true,
    }
}

fn default_pilot() -> usize {
    20
}

fn default_beta_var() -> f64 {
    100.0
}

impl PanelLogitModel {
    pub fn new(data: PanelData) -> Self {
        Self {
            data,
            pi: default_pi(),
            sampling: default_sampling(),
            pilot_particles: default_pilot(),
            beta_prior_var: default_beta_var(),
        }
    }

    pub fn with_sampling(mut self, sampling: SamplingOptions) -> Self {
        self.sampling = sampling;
        self
    }

    pub fn params(&self, theta: &[f64]) -> PanelParams {
        let k = self.data.n_covariates();
        PanelParams {
            beta: theta[..k].to_vec(),
            sigma_alpha2: theta[k].exp(),
        }
    }

    pub fn theta_of(p: &PanelParams) -> Vec<f64> {
        let mut t = p.beta.clone();
        t.push(p.sigma_alpha2.ln());
        t
    }

    fn individual<'a>(&'a self, p: &PanelParams, i: usize) -> Individual<'a> {
        let ind = &self.data.individuals[i];
        Individual {
            eta: ind
                .x
                .iter()
                .map(|row| row.iter().zip(&p.beta).map(|(a, b)| a * b).sum())
                .collect(),
            y: &ind.y,
            sigma2: p.sigma_alpha2,
        }
    }

    /// Linear predictors, outcomes and the Laplace mode/scale of individual `i`.
    pub(crate) fn individual_parts(&self, p: &PanelParams, i: usize) -> (Vec<f64>, &[bool]) {
        let ind = self.individual(p, i);
        (ind.eta, ind.y)
    }

    pub(crate) fn log_obs(eta: &[f64], y: &[bool], alpha: f64) -> f64 {
        log_obs(eta, y, alpha)
    }

    /// Log-likelihood with no random effect (`σ_α² = 0`).
    pub fn plain_logit_loglik(&self, beta: &[f64]) -> f64 {
        let p = PanelParams {
            beta: beta.to_vec(),
            sigma_alpha2: 0.0,
        };
        (0..self.data.n_individuals())
            .map(|i| {
                let ind = self.individual(&p, i);
                log_obs(&ind.eta, ind.y, 0.0)
            })
            .sum()
    }

    /// Importance-sampling estimate of individual `i`'s likelihood with `n`
    /// particles. At `σ_α² = 0` the latent effect is degenerate and the plain
    /// logit likelihood is returned exactly.
    pub fn individual_estimate(
        &self,
        p: &PanelParams,
        i: usize,
        n: usize,
        rng: &mut StreamRng,
    ) -> Result<LikelihoodEstimate> {
        let target = self.individual(p, i);
        if p.sigma_alpha2 == 0.0 {
            let lw = log_obs(&target.eta, target.y, 0.0);
            return Ok(LikelihoodEstimate::from_particles(vec![lw; n.max(1)], 1));
        }
        let (mode, sd) = laplace(&target.eta, target.y, p.sigma_alpha2);
        let sampler = LatentSampler::Defensive(DefensiveMixture::new(
            LatentProposal::new(vec![mode], vec![sd], true)?,
            LatentProposal::new(vec![0.0], vec![p.sigma_alpha2.sqrt()], false)?,
            self.pi,
        )?);
        is_likelihood_estimate(&target, &sampler, n, self.sampling, rng).map_err(|e| match e {
            Is2Error::NonFiniteWeight { particle, .. } => Is2Error::NonFiniteWeight {
                individual: Some(i),
                particle,
            },
            other => other,
        })
    }

    /// Panel likelihood estimate at natural parameters.
    ///
    /// Individual `i` draws from stream `i` of a seed forked off `rng`. Under a
    /// target budget each individual first runs `pilot_particles` on a
    /// separate stream to estimate `γ_i²`, then gets
    /// `N_i = max(2, ⌈γ_i² I / σ²⌉)` fresh particles.
    pub fn loglik_estimate(
        &self,
        p: &PanelParams,
        budget: &ParticleBudget,
        rng: &mut StreamRng,
    ) -> Result<LikelihoodEstimate> {
        let seed = rng::fork(rng);
        let count = self.data.n_individuals();
        let (counts, gamma2) = match *budget {
            ParticleBudget::Fixed { n } => (vec![n; count], None),
            ParticleBudget::Target { sigma2, .. } => {
                let pilot_seed = rng::derive(seed, KEY_PILOT);
                let gamma2 = (0..count)
                    .map(|i| {
                        let pilot = self.individual_estimate(
                            p,
                            i,
                            self.pilot_particles,
                            &mut rng::stream(pilot_seed, i as u64),
                        )?;
                        Ok(self.pilot_particles as f64 * tuning::loglik_variance(&pilot)?)
                    })
                    .collect::<Result<Vec<f64>>>()?;
                (
                    tuning::panel_particle_allocation(&gamma2, sigma2, self.sampling.antithetic),
                    Some(gamma2),
                )
            }
        };
        let mut log_value = 0.0;
        let mut var = Some(0.0);
        for (i, &n) in counts.iter().enumerate() {
            let est = self.individual_estimate(p, i, n, &mut rng::stream(seed, i as u64))?;
            log_value += est.log_value;
            let v = if n >= 10 {
                Some(tuning::jackknife_loglik_variance(&est)?)
            } else {
                gamma2.as_ref().map(|g| g[i] / n as f64)
            };
            var = var.zip(v).map(|(a, b)| a + b);
        }
        Ok(LikelihoodEstimate {
            log_value,
            n_particles: counts.iter().sum(),
            loglik_var_hat: var,
            particle_log_weights: None,
            block_size: 1,
            strata: None,
        })
    }
}

impl Model for PanelLogitModel {
    fn id(&self) -> String {
        format!(
            "panel_logit(I={}, obs={})",
            self.data.n_individuals(),
            self.data.n_observations()
        )
    }

    fn param_names(&self) -> Vec<String> {
        let mut names: Vec<String> = (0..self.data.n_covariates()).map(|k| format!("beta_{k}")).collect();
        names.push("log_sigma_alpha2".into());
        names
    }

    fn log_prior(&self, theta: &[f64]) -> f64 {
        let k = self.data.n_covariates();
        let beta: f64 = theta[..k].iter().map(|b| log_normal_pdf(*b, 0.0, self.beta_prior_var)).sum();
        // half-Cauchy(1) on σ_α, expressed on κ = log σ_α²
        let kappa = theta[k];
        let sigma = (2.0 / std::f64::consts::PI).ln() - softplus(kappa) + 0.5 * kappa - 2f64.ln();
        beta + sigma
    }

    fn estimate_loglik(
        &self,
        theta: &[f64],
        budget: &ParticleBudget,
        rng: &mut StreamRng,
    ) -> Result<LikelihoodEstimate> {
        self.loglik_estimate(&self.params(theta), budget, rng)
    }
}
