//! Bootstrap particle filter for scalar-state state space models.
//!
//! `log p̂ = Σ_t log((1/n) Σ_j p(y_t | x_t^j))` with multinomial resampling
//! after every period. The product over periods is unbiased for `p(y|θ)`.

use rand::Rng;
use rand_distr::{Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use super::LikelihoodEstimate;
use crate::error::{Is2Error, Result};
use crate::rng::StreamRng;

/// State dynamics driven by standard-normal noise, so the filter controls
/// (and can antithetically pair) every random input.
pub trait StateSpaceModel {
    fn n_periods(&self) -> usize;
    fn initial_state(&self, noise: f64) -> f64;
    fn transition(&self, t: usize, prev: f64, noise: f64) -> f64;
    fn log_obs_density(&self, t: usize, x: f64) -> f64;
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PfOptions {
    /// Pair the noise of particles `2j` and `2j + 1` as `(u, −u)`.
    pub antithetic: bool,
}

fn fill_noise(noise: &mut [f64], antithetic: bool, rng: &mut StreamRng) {
    if antithetic {
        let mut chunks = noise.chunks_exact_mut(2);
        for pair in &mut chunks {
            let u: f64 = rng.sample(StandardNormal);
            pair[0] = u;
            pair[1] = -u;
        }
        for v in chunks.into_remainder() {
            *v = rng.sample(StandardNormal);
        }
    } else {
        for v in noise.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
    }
}

/// Multinomial resampling in O(n) from sorted uniforms built out of
/// exponential spacings. `weights` are unnormalised and non-negative.
fn multinomial_ancestors(weights: &[f64], total: f64, out: &mut [usize], rng: &mut StreamRng) {
    let n = out.len();
    let mut spacings: Vec<f64> = (0..=n).map(|_| rng.sample::<f64, _>(Exp1)).collect();
    let mut acc = 0.0;
    for s in spacings.iter_mut() {
        acc += *s;
        *s = acc;
    }
    let scale = total / acc;
    let mut j = 0;
    let mut cum = weights[0];
    for (k, o) in out.iter_mut().enumerate() {
        let u = spacings[k] * scale;
        while cum < u && j + 1 < weights.len() {
            j += 1;
            cum += weights[j];
        }
        // never select a zero-weight particle because of rounding at the tail
        while weights[j] == 0.0 && j > 0 {
            j -= 1;
        }
        *o = j;
    }
}

pub fn bootstrap_particle_filter<S: StateSpaceModel + ?Sized>(
    model: &S,
    n: usize,
    opts: PfOptions,
    rng: &mut StreamRng,
) -> Result<LikelihoodEstimate> {
    if n == 0 {
        return Err(Is2Error::invalid("particle filter needs n >= 1"));
    }
    let periods = model.n_periods();
    if periods == 0 {
        return Err(Is2Error::invalid("particle filter needs at least one observation"));
    }
    let mut noise = vec![0.0; n];
    let mut particles = vec![0.0; n];
    let mut scratch = vec![0.0; n];
    let mut log_g = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let mut ancestors = vec![0usize; n];
    let mut log_lik = 0.0;

    fill_noise(&mut noise, opts.antithetic, rng);
    for (x, &u) in particles.iter_mut().zip(&noise) {
        *x = model.initial_state(u);
    }
    for t in 0..periods {
        if t > 0 {
            fill_noise(&mut noise, opts.antithetic, rng);
            for j in 0..n {
                scratch[j] = model.transition(t, particles[ancestors[j]], noise[j]);
            }
            std::mem::swap(&mut particles, &mut scratch);
        }
        let mut max = f64::NEG_INFINITY;
        for (j, (lg, &x)) in log_g.iter_mut().zip(&particles).enumerate() {
            *lg = model.log_obs_density(t, x);
            if lg.is_nan() || *lg == f64::INFINITY {
                return Err(Is2Error::NonFiniteWeight {
                    individual: None,
                    particle: j,
                });
            }
            max = max.max(*lg);
        }
        if max == f64::NEG_INFINITY {
            return Err(Is2Error::ParticleCollapse { t });
        }
        let mut total = 0.0;
        for (w, lg) in weights.iter_mut().zip(&log_g) {
            *w = (lg - max).exp();
            total += *w;
        }
        log_lik += max + (total / n as f64).ln();
        if t + 1 < periods {
            multinomial_ancestors(&weights, total, &mut ancestors, rng);
        }
    }
    Ok(LikelihoodEstimate {
        log_value: log_lik,
        n_particles: n,
        loglik_var_hat: None,
        particle_log_weights: None,
        block_size: 1,
        strata: None,
    })
}
