//! Latent-variable importance sampling estimate of `p(y|θ)`:
//! `p̂_N = (1/N) Σ_j p(y|x_j,θ) p(x_j|θ) / h(x_j)` with `x_j ~ h`.
//!
//! Proposals are Gaussian location-scale families so antithetic pairs can be
//! formed on the standard-normal seeds before the transform.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::LikelihoodEstimate;
use crate::error::{Is2Error, Result};
use crate::rng::StreamRng;
use crate::stats::log_add_exp;

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// A model at a fixed parameter, seen as a latent-variable integrand.
pub trait LatentTarget {
    fn latent_dim(&self) -> usize;
    /// `log p(y | x, θ)`.
    fn log_obs_density(&self, x: &[f64]) -> f64;
    /// `log p(x | θ)`.
    fn log_latent_prior(&self, x: &[f64]) -> f64;
}

/// Diagonal Gaussian importance density for the latent variables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatentProposal {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
    /// Whether building this density has a per-evaluation cost (τ₀ > 0).
    pub overhead: bool,
}

impl LatentProposal {
    pub fn new(mean: Vec<f64>, sd: Vec<f64>, overhead: bool) -> Result<Self> {
        if mean.len() != sd.len() || mean.is_empty() {
            return Err(Is2Error::invalid("latent proposal mean/sd length mismatch"));
        }
        if sd.iter().any(|s| !(*s > 0.0 && s.is_finite())) {
            return Err(Is2Error::invalid("latent proposal sd must be positive"));
        }
        Ok(Self { mean, sd, overhead })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    /// Map standard-normal seeds `u` to `x = mean + sd ⊙ u`.
    pub fn transform(&self, u: &[f64], out: &mut [f64]) {
        for ((o, &z), (m, s)) in out.iter_mut().zip(u).zip(self.mean.iter().zip(&self.sd)) {
            *o = m + s * z;
        }
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        let mut acc = 0.0;
        for ((&xi, m), s) in x.iter().zip(&self.mean).zip(&self.sd) {
            let z = (xi - m) / s;
            acc -= 0.5 * (LN_2PI + z * z) + s.ln();
        }
        acc
    }
}

/// `h = π h_eff + (1 − π) p(x|θ)`; the natural component bounds the
/// importance ratio `p(x|θ) / h(x)` by `1 / (1 − π)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefensiveMixture {
    pub efficient: LatentProposal,
    pub natural: LatentProposal,
    pub pi: f64,
}

impl DefensiveMixture {
    pub fn new(efficient: LatentProposal, natural: LatentProposal, pi: f64) -> Result<Self> {
        if !(pi > 0.0 && pi < 1.0) {
            return Err(Is2Error::invalid(format!("mixture weight {pi} outside (0, 1)")));
        }
        if efficient.dim() != natural.dim() {
            return Err(Is2Error::invalid("mixture components differ in dimension"));
        }
        Ok(Self {
            efficient,
            natural,
            pi,
        })
    }

    pub fn log_density(&self, x: &[f64]) -> f64 {
        Self::log_density_at(&self.efficient, &self.natural, self.pi, x)
    }

    fn log_density_at(eff: &LatentProposal, nat: &LatentProposal, pi: f64, x: &[f64]) -> f64 {
        log_add_exp(
            pi.ln() + eff.log_density(x),
            (1.0 - pi).ln() + nat.log_density(x),
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LatentSampler {
    Single(LatentProposal),
    Defensive(DefensiveMixture),
}

impl LatentSampler {
    pub fn dim(&self) -> usize {
        match self {
            LatentSampler::Single(p) => p.dim(),
            LatentSampler::Defensive(m) => m.efficient.dim(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SamplingOptions {
    /// Draw standard-normal seeds in `(u, −u)` pairs.
    pub antithetic: bool,
    /// Sample each mixture component in exact proportion to its weight.
    pub stratified: bool,
}

/// Expand seeds `u_1..u_k` (each `dim` long, stored flat) into
/// `u_1, −u_1, u_2, −u_2, …`.
pub fn antithetic_pairs(seeds: &[f64], dim: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(2 * seeds.len());
    for u in seeds.chunks(dim) {
        out.extend_from_slice(u);
        out.extend(u.iter().map(|v| -v));
    }
    out
}

/// `count` standard-normal vectors of length `dim`, stored flat. With
/// `antithetic`, consecutive vectors form `(u, −u)` pairs and `count` must be even.
pub fn standard_normals(
    count: usize,
    dim: usize,
    antithetic: bool,
    rng: &mut StreamRng,
) -> Result<Vec<f64>> {
    if antithetic {
        if count % 2 != 0 {
            return Err(Is2Error::OddCount(count));
        }
        let seeds: Vec<f64> = (0..count / 2 * dim)
            .map(|_| rng.sample(StandardNormal))
            .collect();
        Ok(antithetic_pairs(&seeds, dim))
    } else {
        Ok((0..count * dim).map(|_| rng.sample(StandardNormal)).collect())
    }
}

/// Antithetic where possible; an odd count gets one unpaired draw at the end.
fn seeds_for(count: usize, dim: usize, antithetic: bool, rng: &mut StreamRng) -> Vec<f64> {
    if antithetic && count % 2 == 1 {
        let mut v = standard_normals(count - 1, dim, true, rng).expect("even count");
        v.extend((0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)));
        v
    } else {
        standard_normals(count, dim, antithetic, rng).expect("even count")
    }
}

/// Split `n` particles between the efficient and natural components:
/// `n_eff = round_half_up(π n)`, kept within `[1, n − 1]`.
pub fn stratified_allocation(n: usize, pi: f64) -> Result<(usize, usize)> {
    if n < 2 {
        return Err(Is2Error::invalid(format!(
            "stratified allocation needs n >= 2, got {n}"
        )));
    }
    if !(pi > 0.0 && pi < 1.0) {
        return Err(Is2Error::invalid(format!("mixture weight {pi} outside (0, 1)")));
    }
    let n_eff = ((pi * n as f64 + 0.5).floor() as usize).clamp(1, n - 1);
    Ok((n_eff, n - n_eff))
}

/// Importance-sampling estimate of the likelihood with `n` particles.
///
/// With stratified mixture sampling the mixture density uses the realised
/// fraction `n_eff / n`, which keeps the estimate exactly unbiased when `π n`
/// is not an integer. A single particle cannot be stratified and falls back to
/// drawing its component at random.
pub fn is_likelihood_estimate<T: LatentTarget + ?Sized>(
    target: &T,
    sampler: &LatentSampler,
    n: usize,
    opts: SamplingOptions,
    rng: &mut StreamRng,
) -> Result<LikelihoodEstimate> {
    if n == 0 {
        return Err(Is2Error::invalid("likelihood estimate needs n >= 1"));
    }
    let dim = sampler.dim();
    if dim != target.latent_dim() {
        return Err(Is2Error::invalid("latent proposal dimension does not match model"));
    }
    let mut x = vec![0.0; dim];
    let mut log_w = Vec::with_capacity(n);
    let mut strata = None;
    let weigh = |x: &[f64], log_h: f64, log_w: &mut Vec<f64>| -> Result<()> {
        let lw = target.log_obs_density(x) + target.log_latent_prior(x) - log_h;
        if lw.is_nan() || lw == f64::INFINITY {
            return Err(Is2Error::NonFiniteWeight {
                individual: None,
                particle: log_w.len(),
            });
        }
        log_w.push(lw);
        Ok(())
    };

    match sampler {
        LatentSampler::Single(h) => {
            let u = seeds_for(n, dim, opts.antithetic, rng);
            for seed in u.chunks(dim) {
                h.transform(seed, &mut x);
                weigh(&x, h.log_density(&x), &mut log_w)?;
            }
        }
        LatentSampler::Defensive(mix) if opts.stratified && n >= 2 => {
            let (n_eff, n_nat) = stratified_allocation(n, mix.pi)?;
            let realised = n_eff as f64 / n as f64;
            strata = Some(vec![n_eff, n_nat]);
            for (component, count) in [(&mix.efficient, n_eff), (&mix.natural, n_nat)] {
                let u = seeds_for(count, dim, opts.antithetic, rng);
                for seed in u.chunks(dim) {
                    component.transform(seed, &mut x);
                    let log_h = DefensiveMixture::log_density_at(
                        &mix.efficient,
                        &mix.natural,
                        realised,
                        &x,
                    );
                    weigh(&x, log_h, &mut log_w)?;
                }
            }
        }
        LatentSampler::Defensive(mix) => {
            // component chosen per particle (per pair under antithetics)
            let u = seeds_for(n, dim, opts.antithetic, rng);
            let mut component = &mix.efficient;
            for (j, seed) in u.chunks(dim).enumerate() {
                if !opts.antithetic || j % 2 == 0 {
                    component = if rng.random::<f64>() < mix.pi {
                        &mix.efficient
                    } else {
                        &mix.natural
                    };
                }
                component.transform(seed, &mut x);
                weigh(&x, mix.log_density(&x), &mut log_w)?;
            }
        }
    }
    let block = if opts.antithetic { 2 } else { 1 };
    let mut est = LikelihoodEstimate::from_particles(log_w, block);
    est.strata = strata;
    Ok(est)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;
    use crate::stats;
    use approx::assert_relative_eq;

    /// Scalar latent x ~ N(0, v), observation y | x ~ N(x, r).
    struct Conjugate {
        y: f64,
        v: f64,
        r: f64,
    }

    impl LatentTarget for Conjugate {
        fn latent_dim(&self) -> usize {
            1
        }
        fn log_obs_density(&self, x: &[f64]) -> f64 {
            -0.5 * (LN_2PI + self.r.ln() + (self.y - x[0]).powi(2) / self.r)
        }
        fn log_latent_prior(&self, x: &[f64]) -> f64 {
            -0.5 * (LN_2PI + self.v.ln() + x[0] * x[0] / self.v)
        }
    }

    /// Observation density that ignores the latent value.
    struct Flat {
        log_c: f64,
    }

    impl LatentTarget for Flat {
        fn latent_dim(&self) -> usize {
            1
        }
        fn log_obs_density(&self, _x: &[f64]) -> f64 {
            self.log_c
        }
        fn log_latent_prior(&self, x: &[f64]) -> f64 {
            -0.5 * (LN_2PI + x[0] * x[0])
        }
    }

    fn prior_sampler() -> LatentSampler {
        LatentSampler::Single(LatentProposal::new(vec![0.0], vec![1.0], false).unwrap())
    }

    #[test]
    fn prior_proposal_with_constant_observation_is_exact() {
        let t = Flat { log_c: -3.7 };
        for n in [1, 2, 7, 50] {
            let est = is_likelihood_estimate(
                &t,
                &prior_sampler(),
                n,
                SamplingOptions::default(),
                &mut stream(1, n as u64),
            )
            .unwrap();
            assert_relative_eq!(est.log_value, -3.7, max_relative = 1e-14);
        }
    }

    #[test]
    fn single_particle_estimate_is_its_weight() {
        let t = Conjugate {
            y: 0.4,
            v: 1.0,
            r: 0.5,
        };
        let est = is_likelihood_estimate(
            &t,
            &prior_sampler(),
            1,
            SamplingOptions::default(),
            &mut stream(3, 0),
        )
        .unwrap();
        let w = est.particle_log_weights.unwrap();
        assert_eq!(w.len(), 1);
        assert_eq!(est.log_value, w[0]);
    }

    #[test]
    fn antithetic_pairs_are_exact_negatives() {
        assert_eq!(antithetic_pairs(&[0.5], 1), vec![0.5, -0.5]);
        let u = standard_normals(1000, 1, true, &mut stream(5, 0)).unwrap();
        for pair in u.chunks(2) {
            assert_eq!(pair[0] + pair[1], 0.0);
        }
        let (a, b): (Vec<f64>, Vec<f64>) = u.chunks(2).map(|p| (p[0], p[1])).unzip();
        let ma = stats::mean(&a);
        let mb = stats::mean(&b);
        let cov: f64 = a.iter().zip(&b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let corr = cov
            / (a.iter().map(|x| (x - ma).powi(2)).sum::<f64>()
                * b.iter().map(|y| (y - mb).powi(2)).sum::<f64>())
            .sqrt();
        assert_relative_eq!(corr, -1.0, max_relative = 1e-12);
        assert!(matches!(
            standard_normals(3, 1, true, &mut stream(5, 0)),
            Err(Is2Error::OddCount(3))
        ));
    }

    #[test]
    fn stratified_allocation_examples() {
        assert_eq!(stratified_allocation(10, 0.5).unwrap(), (5, 5));
        assert_eq!(stratified_allocation(4, 0.25).unwrap(), (1, 3));
        assert_eq!(stratified_allocation(5, 0.5).unwrap(), (3, 2));
        assert_eq!(stratified_allocation(2, 0.01).unwrap(), (1, 1));
        assert!(stratified_allocation(1, 0.5).is_err());
        for n in 2..200 {
            let (a, b) = stratified_allocation(n, 0.3).unwrap();
            assert_eq!(a + b, n);
            assert!(a >= 1 && b >= 1);
        }
    }

    #[test]
    fn defensive_weights_are_bounded() {
        let t = Conjugate {
            y: 2.5,
            v: 1.0,
            r: 0.3,
        };
        // a deliberately poor efficient component
        let eff = LatentProposal::new(vec![-1.0], vec![0.2], true).unwrap();
        let nat = LatentProposal::new(vec![0.0], vec![1.0], false).unwrap();
        let mix = DefensiveMixture::new(eff, nat, 0.5).unwrap();
        let sampler = LatentSampler::Defensive(mix);
        for (stratified, n) in [(true, 101), (true, 100), (false, 100)] {
            let opts = SamplingOptions {
                antithetic: true,
                stratified,
            };
            let mut rng = stream(8, n as u64);
            let est = is_likelihood_estimate(&t, &sampler, n, opts, &mut rng).unwrap();
            let pi = if stratified {
                stratified_allocation(n, 0.5).unwrap().0 as f64 / n as f64
            } else {
                0.5
            };
            // weight ≤ p(y|x)/(1−π) ≤ max_x p(y|x)/(1−π)
            let bound = -0.5 * (LN_2PI + t.r.ln()) - (1.0 - pi).ln();
            for lw in est.particle_log_weights.unwrap() {
                assert!(lw <= bound + 1e-12);
            }
        }
    }

    #[test]
    fn estimator_is_deterministic_per_stream() {
        let t = Conjugate {
            y: 0.1,
            v: 2.0,
            r: 1.0,
        };
        let opts = SamplingOptions {
            antithetic: true,
            stratified: false,
        };
        let a = is_likelihood_estimate(&t, &prior_sampler(), 10, opts, &mut stream(4, 2)).unwrap();
        let b = is_likelihood_estimate(&t, &prior_sampler(), 10, opts, &mut stream(4, 2)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.block_size, 2);
    }

    #[test]
    fn conjugate_estimate_is_unbiased() {
        let t = Conjugate {
            y: 1.3,
            v: 1.0,
            r: 0.5,
        };
        let exact = -0.5 * (LN_2PI + (t.v + t.r).ln() + t.y * t.y / (t.v + t.r));
        let eff = LatentProposal::new(vec![0.8], vec![0.7], true).unwrap();
        let nat = LatentProposal::new(vec![0.0], vec![1.0], false).unwrap();
        let sampler = LatentSampler::Defensive(DefensiveMixture::new(eff, nat, 0.5).unwrap());
        let opts = SamplingOptions {
            antithetic: true,
            stratified: true,
        };
        let reps = 10_000;
        let ratios: Vec<f64> = (0..reps)
            .map(|k| {
                let est =
                    is_likelihood_estimate(&t, &sampler, 5, opts, &mut stream(21, k)).unwrap();
                (est.log_value - exact).exp()
            })
            .collect();
        let m = stats::mean(&ratios);
        let se = stats::sample_sd(&ratios) / (reps as f64).sqrt();
        assert!((m - 1.0).abs() < 3.0 * se, "mean {m} se {se}");
    }

    #[test]
    fn gaussian_latent_density_integrates_to_one() {
        let h = LatentProposal::new(vec![0.3], vec![1.7], false).unwrap();
        let mix = DefensiveMixture::new(
            h.clone(),
            LatentProposal::new(vec![-2.0], vec![0.5], false).unwrap(),
            0.3,
        )
        .unwrap();
        let (a, b, k) = (-20.0, 20.0, 40_000);
        let step = (b - a) / k as f64;
        let (mut s1, mut s2) = (0.0, 0.0);
        for i in 0..k {
            let x = a + (i as f64 + 0.5) * step;
            s1 += h.log_density(&[x]).exp() * step;
            s2 += mix.log_density(&[x]).exp() * step;
        }
        assert_relative_eq!(s1, 1.0, max_relative = 1e-9);
        assert_relative_eq!(s2, 1.0, max_relative = 1e-9);
    }
}
