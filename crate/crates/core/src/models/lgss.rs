//! Linear-Gaussian state space model with a Kalman oracle.
//!
//! `x₁ ~ N(0, q/(1−φ²))`, `x_t = φ x_{t−1} + N(0, q)`, `y_t = x_t + N(0, r)`.
//! Inference is over `θ = (atanh φ, log q)` with `r` known.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{filter_particles, log_inv_gamma_pdf, log_normal_pdf, Model, ParticleBudget};
use crate::error::{Is2Error, Result};
use crate::likelihood::{bootstrap_particle_filter, LikelihoodEstimate, PfOptions, StateSpaceModel};
use crate::rng::{self, StreamRng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LgssParams {
    pub phi: f64,
    pub q: f64,
    pub r: f64,
}

impl LgssParams {
    pub fn new(phi: f64, q: f64, r: f64) -> Result<Self> {
        if !(phi.abs() < 1.0) || !(q > 0.0) || !(r > 0.0) {
            return Err(Is2Error::invalid(format!(
                "LGSS needs |phi| < 1, q > 0, r > 0 (got {phi}, {q}, {r})"
            )));
        }
        Ok(Self { phi, q, r })
    }

    fn stationary_var(&self) -> f64 {
        self.q / (1.0 - self.phi * self.phi)
    }
}

/// Prediction-error decomposition of the exact log-likelihood.
pub fn kalman_loglik(p: &LgssParams, y: &[f64]) -> f64 {
    let (mut m, mut v) = (0.0, p.stationary_var());
    let mut ll = 0.0;
    for &yt in y {
        let f = v + p.r;
        ll += log_normal_pdf(yt, m, f);
        let k = v / f;
        m += k * (yt - m);
        v *= 1.0 - k;
        m *= p.phi;
        v = p.phi * p.phi * v + p.q;
    }
    ll
}

/// `t` observations from stream 0 of `seed`.
pub fn simulate(p: &LgssParams, t: usize, seed: u64) -> Vec<f64> {
    let mut rng = rng::stream(seed, 0);
    let mut x = p.stationary_var().sqrt() * rng.sample::<f64, _>(StandardNormal);
    let mut y = Vec::with_capacity(t);
    for k in 0..t {
        if k > 0 {
            x = p.phi * x + p.q.sqrt() * rng.sample::<f64, _>(StandardNormal);
        }
        y.push(x + p.r.sqrt() * rng.sample::<f64, _>(StandardNormal));
    }
    y
}

struct Filter<'a> {
    p: LgssParams,
    y: &'a [f64],
}

impl StateSpaceModel for Filter<'_> {
    fn n_periods(&self) -> usize {
        self.y.len()
    }

    fn initial_state(&self, noise: f64) -> f64 {
        self.p.stationary_var().sqrt() * noise
    }

    fn transition(&self, _t: usize, prev: f64, noise: f64) -> f64 {
        self.p.phi * prev + self.p.q.sqrt() * noise
    }

    fn log_obs_density(&self, t: usize, x: f64) -> f64 {
        log_normal_pdf(self.y[t], x, self.p.r)
    }
}

/// Bootstrap particle filter estimate of the LGSS likelihood.
pub fn pf_loglik(
    p: &LgssParams,
    y: &[f64],
    n: usize,
    opts: PfOptions,
    rng: &mut StreamRng,
) -> Result<LikelihoodEstimate> {
    bootstrap_particle_filter(&Filter { p: *p, y }, n, opts, rng)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LgssEstimator {
    /// Kalman filter; the weights are exact.
    Exact,
    #[default]
    ParticleFilter,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LgssModel {
    pub y: Vec<f64>,
    pub r: f64,
    #[serde(default)]
    pub estimator: LgssEstimator,
    #[serde(default)]
    pub antithetic: bool,
    /// Inverse-gamma shape and scale of the prior on `q`.
    #[serde(default = "default_q_prior")]
    pub q_prior: (f64, f64),
}

fn default_q_prior() -> (f64, f64) {
    (2.0, 1.0)
}

impl LgssModel {
    pub fn new(y: Vec<f64>, r: f64, estimator: LgssEstimator) -> Self {
        Self {
            y,
            r,
            estimator,
            antithetic: false,
            q_prior: default_q_prior(),
        }
    }

    /// Natural parameters at `θ = (atanh φ, log q)`.
    pub fn params(&self, theta: &[f64]) -> LgssParams {
        LgssParams {
            phi: theta[0].tanh(),
            q: theta[1].exp(),
            r: self.r,
        }
    }

    pub fn theta_of(p: &LgssParams) -> Vec<f64> {
        vec![p.phi.atanh(), p.q.ln()]
    }
}

impl Model for LgssModel {
    fn id(&self) -> String {
        format!("lgss(T={})", self.y.len())
    }

    fn param_names(&self) -> Vec<String> {
        vec!["atanh_phi".into(), "log_q".into()]
    }

    fn log_prior(&self, theta: &[f64]) -> f64 {
        let p = self.params(theta);
        let (a, b) = self.q_prior;
        // φ ~ U(−1, 1) and q ~ IG(a, b), with the Jacobians of tanh and exp
        let jac_phi = (1.0 - p.phi * p.phi).ln();
        if !jac_phi.is_finite() {
            return f64::NEG_INFINITY;
        }
        0.5f64.ln() + jac_phi + log_inv_gamma_pdf(p.q, a, b) + theta[1]
    }

    fn estimate_loglik(
        &self,
        theta: &[f64],
        budget: &ParticleBudget,
        rng: &mut StreamRng,
    ) -> Result<LikelihoodEstimate> {
        let p = self.params(theta);
        if !(p.phi.abs() < 1.0) {
            return Err(Is2Error::invalid("phi left the stationary region"));
        }
        match self.estimator {
            LgssEstimator::Exact => Ok(LikelihoodEstimate::exact(kalman_loglik(&p, &self.y))),
            LgssEstimator::ParticleFilter => {
                let opts = PfOptions {
                    antithetic: self.antithetic,
                };
                let (n, var) = filter_particles(budget, rng, |n, r| pf_loglik(&p, &self.y, n, opts, r))?;
                let mut est = pf_loglik(&p, &self.y, n, opts, rng)?;
                est.loglik_var_hat = var;
                Ok(est)
            }
        }
    }

    fn exact_loglik(&self, theta: &[f64]) -> Option<f64> {
        Some(kalman_loglik(&self.params(theta), &self.y))
    }
}
