#![allow(dead_code)]

use is2::exec::{map_indexed, Execution};
use is2::models::lgss::{simulate, LgssEstimator, LgssModel, LgssParams};
use is2::proposals::{fit_from_weighted_draws, ParameterProposal};
use is2::runner::{run_is2, Is2Options};
use is2::{Model, ParticleBudget};

pub struct GridMoments {
    pub mean: [f64; 2],
    pub sd: [f64; 2],
    /// Log of the integral of the unnormalised density.
    pub log_z: f64,
}

/// Moments and normalising constant of a two-parameter density known up to a
/// constant, by midpoint rule on a grid. A coarse pass over `[lo, hi]`
/// locates the region holding the mass; a fine `n × n` pass integrates it.
pub fn grid_moments<F>(log_post: F, lo: [f64; 2], hi: [f64; 2], n: usize) -> GridMoments
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let coarse = 200;
    let h = [(hi[0] - lo[0]) / coarse as f64, (hi[1] - lo[1]) / coarse as f64];
    let cells = map_indexed(coarse * coarse, Execution::Parallel, |k| {
        let (i, j) = (k / coarse, k % coarse);
        let x = [lo[0] + (i as f64 + 0.5) * h[0], lo[1] + (j as f64 + 0.5) * h[1]];
        (x, log_post(&x))
    });
    let top = cells.iter().map(|c| c.1).fold(f64::NEG_INFINITY, f64::max);
    let (mut a, mut b) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for (x, lp) in &cells {
        if *lp > top - 30.0 {
            for d in 0..2 {
                a[d] = a[d].min(x[d] - 2.0 * h[d]);
                b[d] = b[d].max(x[d] + 2.0 * h[d]);
            }
        }
    }
    assert!(a[0] > lo[0] && a[1] > lo[1] && b[0] < hi[0] && b[1] < hi[1], "posterior mass touches the grid edge");

    let g = [(b[0] - a[0]) / n as f64, (b[1] - a[1]) / n as f64];
    let fine = map_indexed(n * n, Execution::Parallel, |k| {
        let (i, j) = (k / n, k % n);
        let x = [a[0] + (i as f64 + 0.5) * g[0], a[1] + (j as f64 + 0.5) * g[1]];
        (x, log_post(&x))
    });
    let top = fine.iter().map(|c| c.1).fold(f64::NEG_INFINITY, f64::max);
    let (mut z, mut s1, mut s2) = (0.0, [0.0; 2], [0.0; 2]);
    for (x, lp) in &fine {
        let w = (lp - top).exp();
        z += w;
        for d in 0..2 {
            s1[d] += w * x[d];
            s2[d] += w * x[d] * x[d];
        }
    }
    let mean = [s1[0] / z, s1[1] / z];
    let sd = [
        (s2[0] / z - mean[0] * mean[0]).max(0.0).sqrt(),
        (s2[1] / z - mean[1] * mean[1]).max(0.0).sqrt(),
    ];
    GridMoments {
        mean,
        sd,
        log_z: top + (z * g[0] * g[1]).ln(),
    }
}

pub fn lgss_model(t: usize, seed: u64, estimator: LgssEstimator) -> LgssModel {
    let p = LgssParams::new(0.8, 0.5, 1.0).unwrap();
    LgssModel::new(simulate(&p, t, seed), 1.0, estimator)
}

/// Exact posterior moments of an LGSS model on the `(atanh φ, log q)` scale.
pub fn lgss_oracle(model: &LgssModel) -> GridMoments {
    grid_moments(
        |x| {
            let lp = model.log_prior(x);
            if lp == f64::NEG_INFINITY {
                lp
            } else {
                lp + model.exact_loglik(x).unwrap()
            }
        },
        [-20.0, -12.0],
        [20.0, 8.0],
        600,
    )
}

/// Student-t proposal fitted to a pilot run with exact likelihoods.
pub fn lgss_fitted_proposal(model: &LgssModel, pilot_draws: usize, seed: u64) -> ParameterProposal {
    let mut exact = model.clone();
    exact.estimator = LgssEstimator::Exact;
    let start = ParameterProposal::student_t(vec![0.5, -0.5], &[vec![1.0, 0.0], vec![0.0, 1.5]], 5.0).unwrap();
    let pilot = run_is2(
        &exact,
        &start,
        &Is2Options {
            draws: pilot_draws,
            budget: ParticleBudget::fixed(1),
            seed,
            exec: Execution::Parallel,
            antithetic_theta: false,
        },
    )
    .unwrap();
    fit_from_weighted_draws(&pilot, 5.0).unwrap().proposal
}
