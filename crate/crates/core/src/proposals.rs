//! Parameter proposal densities `g(θ)`.
//!
//! Scale matrices are stored as lower-triangular Cholesky factors. A factor
//! with a zero on its diagonal describes a point mass at the location (the
//! zero-scale limit); its log-density is 0 at the location and `-inf`
//! elsewhere.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::function::gamma::ln_gamma;

use crate::error::{Is2Error, Result};
use crate::estimator::DrawSet;
use crate::rng::{self, StreamRng};

const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Covariance inflation applied when fitting a proposal to weighted draws.
pub const FIT_INFLATION: f64 = 1.2;

/// Default Student-t degrees of freedom.
pub const DEFAULT_DF: f64 = 5.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ParameterProposal {
    Gaussian {
        location: Vec<f64>,
        scale_tril: Vec<Vec<f64>>,
    },
    StudentT {
        location: Vec<f64>,
        scale_tril: Vec<Vec<f64>>,
        df: f64,
    },
    Mixture {
        weights: Vec<f64>,
        components: Vec<ParameterProposal>,
    },
}

fn cholesky(cov: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let d = cov.len();
    if cov.iter().any(|row| row.len() != d) {
        return Err(Is2Error::invalid("covariance matrix is not square"));
    }
    let m = DMatrix::from_fn(d, d, |i, j| cov[i][j]);
    let chol = m
        .cholesky()
        .ok_or_else(|| Is2Error::invalid("covariance matrix is not positive definite"))?;
    let l = chol.l();
    Ok((0..d).map(|i| (0..d).map(|j| l[(i, j)]).collect()).collect())
}

fn check_tril(location: &[f64], tril: &[Vec<f64>]) -> Result<()> {
    let d = location.len();
    if d == 0 || tril.len() != d || tril.iter().any(|r| r.len() != d) {
        return Err(Is2Error::invalid("scale factor shape does not match location"));
    }
    for (i, row) in tril.iter().enumerate() {
        if row[i] < 0.0 || !row[i].is_finite() {
            return Err(Is2Error::invalid("scale factor diagonal must be non-negative"));
        }
        if row[i + 1..].iter().any(|v| *v != 0.0) {
            return Err(Is2Error::invalid("scale factor must be lower triangular"));
        }
    }
    Ok(())
}

fn is_degenerate(tril: &[Vec<f64>]) -> bool {
    tril.iter().enumerate().any(|(i, r)| r[i] == 0.0)
}

/// `L⁻¹ (θ − μ)` by forward substitution.
fn whiten(location: &[f64], tril: &[Vec<f64>], theta: &[f64]) -> Vec<f64> {
    let d = location.len();
    let mut z = vec![0.0; d];
    for i in 0..d {
        let mut acc = theta[i] - location[i];
        for j in 0..i {
            acc -= tril[i][j] * z[j];
        }
        z[i] = acc / tril[i][i];
    }
    z
}

fn log_det_tril(tril: &[Vec<f64>]) -> f64 {
    tril.iter().enumerate().map(|(i, r)| r[i].ln()).sum()
}

fn apply(location: &[f64], tril: &[Vec<f64>], z: &[f64], sign: f64) -> Vec<f64> {
    location
        .iter()
        .enumerate()
        .map(|(i, m)| m + sign * (0..=i).map(|j| tril[i][j] * z[j]).sum::<f64>())
        .collect()
}

impl ParameterProposal {
    pub fn gaussian(location: Vec<f64>, cov: &[Vec<f64>]) -> Result<Self> {
        Self::gaussian_from_tril(location.clone(), cholesky(cov)?)
    }

    pub fn gaussian_from_tril(location: Vec<f64>, scale_tril: Vec<Vec<f64>>) -> Result<Self> {
        check_tril(&location, &scale_tril)?;
        Ok(ParameterProposal::Gaussian {
            location,
            scale_tril,
        })
    }

    pub fn gaussian_diag(location: Vec<f64>, sd: &[f64]) -> Result<Self> {
        let d = location.len();
        let tril = (0..d)
            .map(|i| (0..d).map(|j| if i == j { sd[i] } else { 0.0 }).collect())
            .collect();
        Self::gaussian_from_tril(location, tril)
    }

    pub fn student_t(location: Vec<f64>, scale: &[Vec<f64>], df: f64) -> Result<Self> {
        Self::student_t_from_tril(location, cholesky(scale)?, df)
    }

    pub fn student_t_from_tril(location: Vec<f64>, scale_tril: Vec<Vec<f64>>, df: f64) -> Result<Self> {
        check_tril(&location, &scale_tril)?;
        if !(df > 2.0) {
            return Err(Is2Error::invalid(format!("Student-t df must exceed 2, got {df}")));
        }
        Ok(ParameterProposal::StudentT {
            location,
            scale_tril,
            df,
        })
    }

    pub fn mixture(weights: Vec<f64>, components: Vec<ParameterProposal>) -> Result<Self> {
        if weights.len() != components.len() || components.is_empty() {
            return Err(Is2Error::invalid("mixture weights and components differ in length"));
        }
        if weights.iter().any(|w| !(*w >= 0.0)) || (weights.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Is2Error::invalid("mixture weights must lie on the simplex"));
        }
        let d = components[0].dim();
        if components.iter().any(|c| c.dim() != d) {
            return Err(Is2Error::invalid("mixture components differ in dimension"));
        }
        Ok(ParameterProposal::Mixture {
            weights,
            components,
        })
    }

    pub fn dim(&self) -> usize {
        match self {
            ParameterProposal::Gaussian { location, .. }
            | ParameterProposal::StudentT { location, .. } => location.len(),
            ParameterProposal::Mixture { components, .. } => components[0].dim(),
        }
    }

    /// Short human-readable identifier.
    pub fn id(&self) -> String {
        match self {
            ParameterProposal::Gaussian { .. } => format!("gaussian(d={})", self.dim()),
            ParameterProposal::StudentT { df, .. } => {
                format!("student_t(d={}, df={df})", self.dim())
            }
            ParameterProposal::Mixture { components, .. } => {
                format!("mixture(k={}, d={})", components.len(), self.dim())
            }
        }
    }

    fn pick_component<'a>(weights: &[f64], components: &'a [ParameterProposal], rng: &mut StreamRng) -> &'a ParameterProposal {
        let u: f64 = rng.random();
        let mut cum = 0.0;
        for (w, c) in weights.iter().zip(components) {
            cum += w;
            if u < cum && *w > 0.0 {
                return c;
            }
        }
        let last = weights.iter().rposition(|w| *w > 0.0).unwrap_or(0);
        &components[last]
    }

    /// Standard-normal vector and (for Student-t) the mixing divisor.
    fn draw_seed(&self, rng: &mut StreamRng) -> (Vec<f64>, f64) {
        let z: Vec<f64> = (0..self.dim()).map(|_| rng.sample(StandardNormal)).collect();
        let s = match self {
            ParameterProposal::StudentT { df, .. } => {
                let chi2: f64 = ChiSquared::new(*df).expect("df > 2").sample(rng);
                (chi2 / df).sqrt()
            }
            _ => 1.0,
        };
        (z, s)
    }

    pub fn sample_one(&self, rng: &mut StreamRng) -> Vec<f64> {
        match self {
            ParameterProposal::Gaussian {
                location,
                scale_tril,
            }
            | ParameterProposal::StudentT {
                location,
                scale_tril,
                ..
            } => {
                let (mut z, s) = self.draw_seed(rng);
                z.iter_mut().for_each(|v| *v /= s);
                apply(location, scale_tril, &z, 1.0)
            }
            ParameterProposal::Mixture {
                weights,
                components,
            } => Self::pick_component(weights, components, rng).sample_one(rng),
        }
    }

    /// Antithetic pair `μ ± L z / s` from the same seed (same mixture component).
    pub fn sample_pair(&self, rng: &mut StreamRng) -> (Vec<f64>, Vec<f64>) {
        match self {
            ParameterProposal::Gaussian {
                location,
                scale_tril,
            }
            | ParameterProposal::StudentT {
                location,
                scale_tril,
                ..
            } => {
                let (mut z, s) = self.draw_seed(rng);
                z.iter_mut().for_each(|v| *v /= s);
                (
                    apply(location, scale_tril, &z, 1.0),
                    apply(location, scale_tril, &z, -1.0),
                )
            }
            ParameterProposal::Mixture {
                weights,
                components,
            } => Self::pick_component(weights, components, rng).sample_pair(rng),
        }
    }

    /// `m` i.i.d. draws; draw `i` comes from stream `(seed, i)`.
    pub fn sample(&self, m: usize, seed: u64) -> Vec<Vec<f64>> {
        (0..m)
            .map(|i| self.sample_one(&mut rng::stream(seed, i as u64)))
            .collect()
    }

    pub fn log_density(&self, theta: &[f64]) -> f64 {
        match self {
            ParameterProposal::Gaussian {
                location,
                scale_tril,
            } => {
                if is_degenerate(scale_tril) {
                    return point_mass(location, theta);
                }
                let z = whiten(location, scale_tril, theta);
                let q: f64 = z.iter().map(|v| v * v).sum();
                -0.5 * (location.len() as f64 * LN_2PI + q) - log_det_tril(scale_tril)
            }
            ParameterProposal::StudentT {
                location,
                scale_tril,
                df,
            } => {
                if is_degenerate(scale_tril) {
                    return point_mass(location, theta);
                }
                let d = location.len() as f64;
                let z = whiten(location, scale_tril, theta);
                let q: f64 = z.iter().map(|v| v * v).sum();
                ln_gamma(0.5 * (df + d))
                    - ln_gamma(0.5 * df)
                    - 0.5 * d * (df * std::f64::consts::PI).ln()
                    - log_det_tril(scale_tril)
                    - 0.5 * (df + d) * (q / df).ln_1p()
            }
            ParameterProposal::Mixture {
                weights,
                components,
            } => {
                let terms: Vec<f64> = weights
                    .iter()
                    .zip(components)
                    .filter(|(w, _)| **w > 0.0)
                    .map(|(w, c)| w.ln() + c.log_density(theta))
                    .collect();
                crate::stats::log_sum_exp(&terms)
            }
        }
    }
}

fn point_mass(location: &[f64], theta: &[f64]) -> f64 {
    if location == theta {
        0.0
    } else {
        f64::NEG_INFINITY
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FittedProposal {
    pub proposal: ParameterProposal,
    /// The weighted covariance was not positive definite and a diagonal
    /// scale was used instead.
    pub diagonal_fallback: bool,
}

/// Student-t with the importance-weighted mean and `1.2 ×` the weighted
/// covariance as its scale matrix.
pub fn fit_from_weighted_draws(draws: &DrawSet, df: f64) -> Result<FittedProposal> {
    let d = draws.dim();
    let weights = draws.weights()?;
    let ess = weights.ess();
    if ess < (d + 2) as f64 {
        return Err(Is2Error::InsufficientEss {
            ess,
            needed: (d + 2) as f64,
        });
    }
    let w = weights.normalized();
    let mut mean = vec![0.0; d];
    for (draw, wi) in draws.draws.iter().zip(&w) {
        for (m, t) in mean.iter_mut().zip(&draw.theta) {
            *m += wi * t;
        }
    }
    let mut cov = vec![vec![0.0; d]; d];
    for (draw, wi) in draws.draws.iter().zip(&w) {
        for i in 0..d {
            let di = draw.theta[i] - mean[i];
            for j in 0..=i {
                cov[i][j] += wi * di * (draw.theta[j] - mean[j]);
            }
        }
    }
    for i in 0..d {
        for j in 0..=i {
            cov[i][j] *= FIT_INFLATION;
            cov[j][i] = cov[i][j];
        }
    }
    match ParameterProposal::student_t(mean.clone(), &cov, df) {
        Ok(p) if well_conditioned(tril_of(&p), &cov) => Ok(FittedProposal {
            proposal: p,
            diagonal_fallback: false,
        }),
        _ => {
            // unweighted marginal variances of the draws
            let m = draws.len() as f64;
            let sd: Vec<f64> = (0..d)
                .map(|i| {
                    let mu = draws.draws.iter().map(|x| x.theta[i]).sum::<f64>() / m;
                    let var = draws
                        .draws
                        .iter()
                        .map(|x| (x.theta[i] - mu).powi(2))
                        .sum::<f64>()
                        / m;
                    let var = if var > 0.0 { var } else { 1.0 };
                    (FIT_INFLATION * var).sqrt()
                })
                .collect();
            let tril = (0..d)
                .map(|i| (0..d).map(|j| if i == j { sd[i] } else { 0.0 }).collect())
                .collect();
            Ok(FittedProposal {
                proposal: ParameterProposal::student_t_from_tril(mean, tril, df)?,
                diagonal_fallback: true,
            })
        }
    }
}

/// Cholesky diagonal not negligible against the marginal scales.
fn well_conditioned(tril: &[Vec<f64>], cov: &[Vec<f64>]) -> bool {
    tril.iter()
        .enumerate()
        .all(|(i, r)| r[i] > 1e-7 * cov[i][i].sqrt())
}

fn tril_of(p: &ParameterProposal) -> &[Vec<f64>] {
    match p {
        ParameterProposal::Gaussian { scale_tril, .. }
        | ParameterProposal::StudentT { scale_tril, .. } => scale_tril,
        ParameterProposal::Mixture { .. } => &[],
    }
}
