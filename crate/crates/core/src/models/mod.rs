//! Built-in models.
//!
//! Each model exposes its parameters on an unbounded scale (`θ ∈ ℝᵈ`); bounded
//! natural parameters are reached through `tanh`, `exp` or logistic maps whose
//! Jacobians are folded into [`Model::log_prior`].

pub mod lgss;
pub mod panel_logit;
pub mod quadrature;
pub mod sv;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::likelihood::LikelihoodEstimate;
use crate::rng::StreamRng;

pub use lgss::{kalman_loglik, LgssEstimator, LgssModel, LgssParams};
pub use panel_logit::{PanelData, PanelLogitModel, PanelParams};
pub use quadrature::{gauss_hermite, gh_quadrature_loglik};
pub use sv::{SvModel, SvParams};

/// How many particles a likelihood estimate may use.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ParticleBudget {
    /// The same particle count everywhere (per individual for panel models).
    Fixed { n: usize },
    /// Aim for `V(log p̂) ≈ sigma2`. With `gamma_bar2` the count is
    /// `⌈γ̄²/σ²⌉`; without it the count is tuned from pilot particles.
    Target {
        sigma2: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        gamma_bar2: Option<f64>,
    },
}

impl ParticleBudget {
    pub fn fixed(n: usize) -> Self {
        ParticleBudget::Fixed { n }
    }

    pub fn target(sigma2: f64) -> Self {
        ParticleBudget::Target {
            sigma2,
            gamma_bar2: None,
        }
    }
}

/// A Bayesian model with an unbiasedly estimable likelihood.
pub trait Model: Sync {
    fn id(&self) -> String;

    fn param_names(&self) -> Vec<String>;

    fn dim(&self) -> usize {
        self.param_names().len()
    }

    /// Log prior density of `θ` on the sampling scale, Jacobian included.
    fn log_prior(&self, theta: &[f64]) -> f64;

    /// Natural-scale unbiased likelihood estimate, returned in log form.
    fn estimate_loglik(
        &self,
        theta: &[f64],
        budget: &ParticleBudget,
        rng: &mut StreamRng,
    ) -> Result<LikelihoodEstimate>;

    /// Exact log-likelihood, when the model has a closed form.
    fn exact_loglik(&self, _theta: &[f64]) -> Option<f64> {
        None
    }
}

/// Particle count for a filter-type estimator under `budget`, together with
/// the implied variance of the log estimate when one is known.
///
/// Untuned targets run the doubling schedule on replicate pilots drawn from
/// a stream forked off `rng`; the pilots never enter the returned estimate.
pub(crate) fn filter_particles<F>(
    budget: &ParticleBudget,
    rng: &mut StreamRng,
    mut estimate: F,
) -> Result<(usize, Option<f64>)>
where
    F: FnMut(usize, &mut StreamRng) -> Result<LikelihoodEstimate>,
{
    match *budget {
        ParticleBudget::Fixed { n } => Ok((n, None)),
        ParticleBudget::Target {
            sigma2,
            gamma_bar2: Some(g),
        } => {
            let n = ((g / sigma2).ceil() as usize).max(1);
            Ok((n, Some(g / n as f64)))
        }
        ParticleBudget::Target {
            sigma2,
            gamma_bar2: None,
        } => {
            let mut pilot = crate::rng::stream(
                crate::rng::derive(crate::rng::fork(rng), crate::rng::KEY_PILOT),
                0,
            );
            let outcome = crate::tuning::tune_particles(
                |n| {
                    let reps = (0..PILOT_REPLICATES)
                        .map(|_| estimate(n, &mut pilot))
                        .collect::<Result<Vec<_>>>()?;
                    let mut e = reps[0].clone();
                    e.loglik_var_hat = Some(crate::tuning::replicate_loglik_variance(&reps));
                    Ok(e)
                },
                sigma2,
                crate::tuning::TuneSchedule::default(),
            )?;
            Ok((outcome.n, Some(outcome.v_hat)))
        }
    }
}

const PILOT_REPLICATES: usize = 10;

pub(crate) const LN_2PI: f64 = 1.837_877_066_409_345_3;

pub(crate) fn log_normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    -0.5 * (LN_2PI + var.ln() + (x - mean).powi(2) / var)
}

/// Inverse-gamma log density with shape `a` and scale `b`.
pub(crate) fn log_inv_gamma_pdf(x: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 {
        return f64::NEG_INFINITY;
    }
    a * b.ln() - statrs::function::gamma::ln_gamma(a) - (a + 1.0) * x.ln() - b / x
}

/// `log(1 + eˣ)` without overflow.
pub(crate) fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Logistic function.
pub(crate) fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
