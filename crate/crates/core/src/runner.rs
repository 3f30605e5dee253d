//! The IS² sampling driver.

use serde::{Deserialize, Serialize};

use crate::error::{Is2Error, Result};
use crate::estimator::{DrawSet, WeightedDraw};
use crate::exec::{try_map_indexed, Execution};
use crate::models::{Model, ParticleBudget};
use crate::proposals::ParameterProposal;
use crate::rng::{self, KEY_LIKELIHOOD, KEY_THETA};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Is2Options {
    pub draws: usize,
    pub budget: ParticleBudget,
    pub seed: u64,
    #[serde(default)]
    pub exec: Execution,
    /// Draw parameters in antithetic pairs `(θ, 2μ − θ)`.
    #[serde(default)]
    pub antithetic_theta: bool,
}

/// Draw `i`'s parameter and partner. Paired draws share the seed of pair `i / 2`.
fn parameter_draw(proposal: &ParameterProposal, opts: &Is2Options, i: usize) -> (Vec<f64>, Option<usize>) {
    let theta_seed = rng::derive(opts.seed, KEY_THETA);
    if opts.antithetic_theta {
        let (a, b) = proposal.sample_pair(&mut rng::stream(theta_seed, (i / 2) as u64));
        (if i % 2 == 0 { a } else { b }, Some(i ^ 1))
    } else {
        (proposal.sample_one(&mut rng::stream(theta_seed, i as u64)), None)
    }
}

/// Run IS²: draw `θ_i ~ g`, estimate `p̂(y|θ_i)` and record the weight
/// ingredients. Draw `i` uses only streams keyed by `(seed, i)`, so the result
/// is identical under any execution mode or thread count.
pub fn run_is2<M: Model + ?Sized>(model: &M, proposal: &ParameterProposal, opts: &Is2Options) -> Result<DrawSet> {
    if opts.draws == 0 {
        return Err(Is2Error::TooFewDraws { needed: 1, got: 0 });
    }
    if opts.antithetic_theta && opts.draws % 2 == 1 {
        return Err(Is2Error::OddCount(opts.draws));
    }
    if proposal.dim() != model.dim() {
        return Err(Is2Error::invalid(format!(
            "proposal dimension {} does not match model dimension {}",
            proposal.dim(),
            model.dim()
        )));
    }
    let lik_seed = rng::derive(opts.seed, KEY_LIKELIHOOD);
    let draws = try_map_indexed(opts.draws, opts.exec, |i| {
        let (theta, partner) = parameter_draw(proposal, opts, i);
        evaluate_draw(model, proposal, theta, &opts.budget, &mut rng::stream(lik_seed, i as u64))
            .map(|d| WeightedDraw {
                antithetic_partner: partner,
                ..d
            })
    })?;
    DrawSet::new(draws, opts.seed, model.id(), proposal.id())
}

/// Weight ingredients at a single `θ`. Points outside the prior support are
/// not evaluated and carry a zero weight.
pub fn evaluate_draw<M: Model + ?Sized>(
    model: &M,
    proposal: &ParameterProposal,
    theta: Vec<f64>,
    budget: &ParticleBudget,
    rng: &mut rng::StreamRng,
) -> Result<WeightedDraw> {
    let log_prior = model.log_prior(&theta);
    let log_proposal = proposal.log_density(&theta);
    if log_prior == f64::NEG_INFINITY {
        return Ok(WeightedDraw {
            theta,
            log_prior,
            log_lik_hat: f64::NEG_INFINITY,
            log_proposal,
            n_particles: 0,
            loglik_var_hat: f64::NAN,
            antithetic_partner: None,
        });
    }
    let est = model.estimate_loglik(&theta, budget, rng)?;
    Ok(WeightedDraw {
        theta,
        log_prior,
        log_lik_hat: est.log_value,
        log_proposal,
        n_particles: est.n_particles as u64,
        loglik_var_hat: est.loglik_var_hat.unwrap_or(f64::NAN),
        antithetic_partner: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{lgss, LgssEstimator, LgssModel, LgssParams};

    fn setup() -> (LgssModel, ParameterProposal) {
        let p = LgssParams::new(0.7, 0.5, 1.0).unwrap();
        let model = LgssModel::new(lgss::simulate(&p, 40, 3), 1.0, LgssEstimator::ParticleFilter);
        let prop = ParameterProposal::student_t(LgssModel::theta_of(&p), &[vec![0.2, 0.0], vec![0.0, 0.3]], 5.0).unwrap();
        (model, prop)
    }

    #[test]
    fn run_is_independent_of_execution_mode() {
        let (model, prop) = setup();
        let mut opts = Is2Options {
            draws: 64,
            budget: ParticleBudget::fixed(30),
            seed: 99,
            exec: Execution::Sequential,
            antithetic_theta: false,
        };
        let a = run_is2(&model, &prop, &opts).unwrap();
        opts.exec = Execution::Parallel;
        let b = run_is2(&model, &prop, &opts).unwrap();
        // Debug output compares NaN variance fields too
        assert_eq!(format!("{a:?}"), format!("{b:?}"));
        assert!(a.draws.iter().all(|d| d.log_lik_hat.is_finite()));
    }

    #[test]
    fn antithetic_parameter_pairs_are_linked() {
        let (model, prop) = setup();
        let opts = Is2Options {
            draws: 10,
            budget: ParticleBudget::fixed(10),
            seed: 1,
            exec: Execution::Sequential,
            antithetic_theta: true,
        };
        let ds = run_is2(&model, &prop, &opts).unwrap();
        for (i, d) in ds.draws.iter().enumerate() {
            assert_eq!(d.antithetic_partner, Some(i ^ 1));
        }
        let odd = Is2Options { draws: 9, ..opts };
        assert!(matches!(run_is2(&model, &prop, &odd), Err(Is2Error::OddCount(9))));
    }

    #[test]
    fn exact_estimator_reduces_to_plain_importance_sampling() {
        let (mut model, prop) = setup();
        model.estimator = LgssEstimator::Exact;
        let opts = Is2Options {
            draws: 50,
            budget: ParticleBudget::fixed(1),
            seed: 4,
            exec: Execution::Parallel,
            antithetic_theta: false,
        };
        let ds = run_is2(&model, &prop, &opts).unwrap();
        for d in &ds.draws {
            let w = model.log_prior(&d.theta) + model.exact_loglik(&d.theta).unwrap() - prop.log_density(&d.theta);
            assert_eq!(d.log_weight(), w);
        }
    }
}
