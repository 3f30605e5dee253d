//! One-factor stochastic volatility model.
//!
//! `x₁ ~ N(c, σ²/(1−φ²))`, `x_t = c + φ(x_{t−1} − c) + N(0, σ²)`,
//! `y_t ~ N(0, exp(x_t))`. Inference is over `θ = (c, logit φ, log σ²)`.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{filter_particles, log_inv_gamma_pdf, log_normal_pdf, logistic, softplus, Model, ParticleBudget};
use crate::error::{Is2Error, Result};
use crate::likelihood::{bootstrap_particle_filter, LikelihoodEstimate, PfOptions, StateSpaceModel};
use crate::rng::{self, StreamRng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SvParams {
    pub c: f64,
    pub phi: f64,
    pub sigma_eta2: f64,
}

impl SvParams {
    /// `sigma_eta2 = 0` is allowed and fixes the log-variance at `c`.
    pub fn new(c: f64, phi: f64, sigma_eta2: f64) -> Result<Self> {
        if !(0.0..1.0).contains(&phi) || !(sigma_eta2 >= 0.0) || !c.is_finite() {
            return Err(Is2Error::invalid(format!(
                "SV needs 0 <= phi < 1 and sigma_eta2 >= 0 (got {phi}, {sigma_eta2})"
            )));
        }
        Ok(Self { c, phi, sigma_eta2 })
    }
}

struct Filter<'a> {
    p: SvParams,
    y: &'a [f64],
}

impl StateSpaceModel for Filter<'_> {
    fn n_periods(&self) -> usize {
        self.y.len()
    }

    fn initial_state(&self, noise: f64) -> f64 {
        self.p.c + (self.p.sigma_eta2 / (1.0 - self.p.phi * self.p.phi)).sqrt() * noise
    }

    fn transition(&self, _t: usize, prev: f64, noise: f64) -> f64 {
        self.p.c + self.p.phi * (prev - self.p.c) + self.p.sigma_eta2.sqrt() * noise
    }

    fn log_obs_density(&self, t: usize, x: f64) -> f64 {
        log_normal_pdf(self.y[t], 0.0, x.exp())
    }
}

/// Bootstrap particle filter estimate of the SV likelihood.
pub fn sv_loglik_estimate(
    p: &SvParams,
    y: &[f64],
    n: usize,
    opts: PfOptions,
    rng: &mut StreamRng,
) -> Result<LikelihoodEstimate> {
    bootstrap_particle_filter(&Filter { p: *p, y }, n, opts, rng)
}

pub fn simulate(p: &SvParams, t: usize, seed: u64) -> Vec<f64> {
    let mut rng = rng::stream(seed, 0);
    let f = Filter { p: *p, y: &[] };
    let mut x = f.initial_state(rng.sample(StandardNormal));
    (0..t)
        .map(|k| {
            if k > 0 {
                x = f.transition(k, x, rng.sample(StandardNormal));
            }
            (0.5 * x).exp() * rng.sample::<f64, _>(StandardNormal)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvModel {
    pub y: Vec<f64>,
    #[serde(default)]
    pub antithetic: bool,
    /// Normal prior variance of `c`.
    #[serde(default = "default_c_var")]
    pub c_prior_var: f64,
    /// Inverse-gamma shape and scale of the prior on `σ²`.
    #[serde(default = "default_sigma_prior")]
    pub sigma_prior: (f64, f64),
}

fn default_c_var() -> f64 {
    10.0
}

fn default_sigma_prior() -> (f64, f64) {
    (2.5, 0.25)
}

impl SvModel {
    pub fn new(y: Vec<f64>) -> Self {
        Self {
            y,
            antithetic: false,
            c_prior_var: default_c_var(),
            sigma_prior: default_sigma_prior(),
        }
    }

    pub fn params(&self, theta: &[f64]) -> SvParams {
        SvParams {
            c: theta[0],
            phi: logistic(theta[1]),
            sigma_eta2: theta[2].exp(),
        }
    }

    pub fn theta_of(p: &SvParams) -> Vec<f64> {
        vec![p.c, (p.phi / (1.0 - p.phi)).ln(), p.sigma_eta2.ln()]
    }
}

impl Model for SvModel {
    fn id(&self) -> String {
        format!("sv(T={})", self.y.len())
    }

    fn param_names(&self) -> Vec<String> {
        vec!["c".into(), "logit_phi".into(), "log_sigma_eta2".into()]
    }

    fn log_prior(&self, theta: &[f64]) -> f64 {
        let (a, b) = self.sigma_prior;
        // φ ~ U(0, 1): log φ(1−φ) is the logistic Jacobian
        let log_jac_phi = -softplus(-theta[1]) - softplus(theta[1]);
        log_normal_pdf(theta[0], 0.0, self.c_prior_var)
            + log_jac_phi
            + log_inv_gamma_pdf(theta[2].exp(), a, b)
            + theta[2]
    }

    fn estimate_loglik(
        &self,
        theta: &[f64],
        budget: &ParticleBudget,
        rng: &mut StreamRng,
    ) -> Result<LikelihoodEstimate> {
        let p = self.params(theta);
        if !(p.phi < 1.0) {
            return Err(Is2Error::invalid("phi left the stationary region"));
        }
        let opts = PfOptions {
            antithetic: self.antithetic,
        };
        let (n, var) = filter_particles(budget, rng, |n, r| sv_loglik_estimate(&p, &self.y, n, opts, r))?;
        let mut est = sv_loglik_estimate(&p, &self.y, n, opts, rng)?;
        est.loglik_var_hat = var;
        Ok(est)
    }
}
