//! Adaptive Gauss–Hermite quadrature for one-dimensional random effects.

use super::panel_logit::{laplace, PanelLogitModel, PanelParams};
use crate::error::{Is2Error, Result};
use crate::stats::log_sum_exp;

/// Nodes and log-weights of the `n`-point rule for `∫ e^{−x²} f(x) dx`.
///
/// Roots come from Newton iteration on orthonormal Hermite polynomials, so the
/// tiny tail weights keep full relative precision.
pub fn gauss_hermite(n: usize) -> (Vec<f64>, Vec<f64>) {
    let pim4 = std::f64::consts::PI.powf(-0.25);
    let mut x = vec![0.0; n];
    let mut lw = vec![0.0; n];
    let nf = n as f64;
    let mut z = 0.0;
    for i in 0..n.div_ceil(2) {
        z = match i {
            0 => (2.0 * nf + 1.0).sqrt() - 1.855_75 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
            1 => z - 1.14 * nf.powf(0.426) / z,
            2 => 1.86 * z - 0.86 * x[0],
            3 => 1.91 * z - 0.91 * x[1],
            _ => 2.0 * z - x[i - 2],
        };
        let mut pp = 0.0;
        for _ in 0..100 {
            let (mut p1, mut p2) = (pim4, 0.0);
            for j in 1..=n {
                let p3 = p2;
                p2 = p1;
                let jf = j as f64;
                p1 = z * (2.0 / jf).sqrt() * p2 - ((jf - 1.0) / jf).sqrt() * p3;
            }
            pp = (2.0 * nf).sqrt() * p2;
            let z1 = z;
            z = z1 - p1 / pp;
            if (z - z1).abs() <= 1e-15 * (1.0 + z.abs()) {
                break;
            }
        }
        x[i] = z;
        x[n - 1 - i] = -z;
        lw[i] = 2f64.ln() - 2.0 * pp.abs().ln();
        lw[n - 1 - i] = lw[i];
    }
    (x, lw)
}

/// `log ∫ exp(g(a)) da` by the `n`-point rule centred at `mode` with scale `sd`.
pub fn adaptive_log_integral<G: Fn(f64) -> f64>(g: G, mode: f64, sd: f64, n: usize) -> f64 {
    let (x, lw) = gauss_hermite(n);
    let s = std::f64::consts::SQRT_2 * sd;
    let terms: Vec<f64> = x
        .iter()
        .zip(&lw)
        .map(|(xk, l)| l + xk * xk + g(mode + s * xk))
        .collect();
    s.ln() + log_sum_exp(&terms)
}

/// Panel log-likelihood by adaptive Gauss–Hermite quadrature over each
/// individual's random effect.
///
/// The `nodes`-point value is checked against the `2·nodes`-point value and
/// the finer one is returned.
pub fn gh_quadrature_loglik(model: &PanelLogitModel, p: &PanelParams, nodes: usize) -> Result<f64> {
    if nodes < 20 {
        return Err(Is2Error::invalid("quadrature needs at least 20 nodes"));
    }
    if p.sigma_alpha2 == 0.0 {
        return Ok(model.plain_logit_loglik(&p.beta));
    }
    let eval = |n: usize| -> f64 {
        (0..model.data.n_individuals())
            .map(|i| {
                let (eta, y) = model.individual_parts(p, i);
                let (mode, sd) = laplace(&eta, y, p.sigma_alpha2);
                let g = |a: f64| {
                    PanelLogitModel::log_obs(&eta, y, a) + super::log_normal_pdf(a, 0.0, p.sigma_alpha2)
                };
                adaptive_log_integral(g, mode, sd, n)
            })
            .sum()
    };
    let coarse = eval(nodes);
    let fine = eval(2 * nodes);
    if (coarse - fine).abs() > 1e-8 || !fine.is_finite() {
        return Err(Is2Error::NotConverged { coarse, fine });
    }
    Ok(fine)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::log_normal_pdf;
    use crate::models::panel_logit::PanelData;
    use crate::rng;
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn rule_integrates_polynomials_exactly() {
        let (x, lw) = gauss_hermite(40);
        let w: Vec<f64> = lw.iter().map(|l| l.exp()).collect();
        let pi = std::f64::consts::PI;
        let moment = |k: i32| x.iter().zip(&w).map(|(x, w)| w * x.powi(k)).sum::<f64>();
        assert_relative_eq!(moment(0), pi.sqrt(), max_relative = 1e-13);
        assert!(moment(1).abs() < 1e-13);
        assert_relative_eq!(moment(2), pi.sqrt() / 2.0, max_relative = 1e-13);
        assert_relative_eq!(moment(6), 15.0 * pi.sqrt() / 8.0, max_relative = 1e-12);
    }

    #[test]
    fn large_rules_stay_finite() {
        let (x, lw) = gauss_hermite(160);
        assert!(x.iter().chain(&lw).all(|v| v.is_finite()));
        let total = log_sum_exp(&lw);
        assert_relative_eq!(total, 0.5 * std::f64::consts::PI.ln(), max_relative = 1e-12);
    }

    #[test]
    fn gaussian_analogue_is_closed_form() {
        // ∫ N(y; a, 1) N(a; 0, s²) da = N(y; 0, 1 + s²)
        let (y, s2) = (1.3, 2.5);
        let g = |a: f64| log_normal_pdf(y, a, 1.0) + log_normal_pdf(a, 0.0, s2);
        let post_var = s2 / (1.0 + s2);
        let got = adaptive_log_integral(g, y * post_var, post_var.sqrt(), 20);
        assert_relative_eq!(got, log_normal_pdf(y, 0.0, 1.0 + s2), max_relative = 1e-13);
    }

    #[test]
    fn vanishing_effect_approaches_plain_logit() {
        let p = PanelParams {
            beta: vec![0.2, -0.7],
            sigma_alpha2: 1.0,
        };
        let m = PanelLogitModel::new(PanelData::simulate(&p, 6, 5, 2).unwrap());
        let plain = m.plain_logit_loglik(&p.beta);
        let zero = PanelParams {
            sigma_alpha2: 0.0,
            ..p.clone()
        };
        assert_eq!(gh_quadrature_loglik(&m, &zero, 20).unwrap(), plain);
        let tiny = PanelParams {
            sigma_alpha2: 1e-10,
            ..p
        };
        assert!((gh_quadrature_loglik(&m, &tiny, 20).unwrap() - plain).abs() < 1e-8);
    }

    #[test]
    fn agrees_with_brute_force_monte_carlo() {
        let p = PanelParams {
            beta: vec![-0.4, 1.1],
            sigma_alpha2: 1.5,
        };
        let m = PanelLogitModel::new(PanelData::simulate(&p, 1, 6, 12).unwrap());
        let exact = gh_quadrature_loglik(&m, &p, 40).unwrap().exp();
        let (eta, y) = m.individual_parts(&p, 0);
        let mut rng = rng::stream(3, 0);
        let draws: Vec<f64> = (0..2_000_000)
            .map(|_| {
                let a = p.sigma_alpha2.sqrt() * rng.sample::<f64, _>(StandardNormal);
                PanelLogitModel::log_obs(&eta, y, a).exp()
            })
            .collect();
        let mean = crate::stats::mean(&draws);
        let se = crate::stats::sample_sd(&draws) / (draws.len() as f64).sqrt();
        assert!((mean - exact).abs() < 3.0 * se, "mc {mean} quad {exact} se {se}");
    }
}
