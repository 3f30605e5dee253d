//! Normality diagnostics for replicated log-likelihood estimates.

use serde::{Deserialize, Serialize};

use crate::error::{Is2Error, Result};
use crate::stats;

/// 95% quantile of χ²₂, i.e. `−2 ln 0.05`.
pub const JB_CRITICAL_5PCT: f64 = 5.991_464_547_107_979;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogLikDiagnostics {
    pub n: usize,
    pub mean: f64,
    /// Unbiased sample variance.
    pub variance: f64,
    pub skewness: f64,
    pub kurtosis: f64,
    pub jb_statistic: f64,
    pub jb_reject_5pct: bool,
}

/// Moments and the Jarque–Bera statistic `(m/6)(S² + (K − 3)²/4)`.
///
/// A zero-variance sample reports skewness 0, kurtosis 3 and a statistic of 0
/// (non-rejection).
pub fn loglik_diagnostics(samples: &[f64]) -> Result<LogLikDiagnostics> {
    if samples.len() < 20 {
        return Err(Is2Error::invalid(format!(
            "diagnostics need at least 20 samples, got {}",
            samples.len()
        )));
    }
    let n = samples.len();
    let mean = stats::mean(samples);
    let variance = stats::sample_variance(samples);
    let (m2, m3, m4) = stats::central_moments(samples);
    // relative threshold: the moments of a constant sample are pure rounding noise
    if m2 <= f64::EPSILON * f64::EPSILON * mean * mean || m2 == 0.0 {
        return Ok(LogLikDiagnostics {
            n,
            mean,
            variance: 0.0,
            skewness: 0.0,
            kurtosis: 3.0,
            jb_statistic: 0.0,
            jb_reject_5pct: false,
        });
    }
    let skewness = m3 / m2.powf(1.5);
    let kurtosis = m4 / (m2 * m2);
    let jb = n as f64 / 6.0 * (skewness * skewness + (kurtosis - 3.0).powi(2) / 4.0);
    Ok(LogLikDiagnostics {
        n,
        mean,
        variance,
        skewness,
        kurtosis,
        jb_statistic: jb,
        jb_reject_5pct: jb > JB_CRITICAL_5PCT,
    })
}

/// Averages over many batches (one batch per parameter draw).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatchDiagnostics {
    pub batches: usize,
    pub mean_variance: f64,
    pub sd_variance: f64,
    pub mean_skewness: f64,
    pub mean_kurtosis: f64,
    pub jb_rejection_rate: f64,
}

pub fn batch_diagnostics(batches: &[Vec<f64>]) -> Result<(BatchDiagnostics, Vec<LogLikDiagnostics>)> {
    if batches.is_empty() {
        return Err(Is2Error::invalid("no batches to diagnose"));
    }
    let per: Vec<LogLikDiagnostics> = batches
        .iter()
        .map(|b| loglik_diagnostics(b))
        .collect::<Result<_>>()?;
    let variances: Vec<f64> = per.iter().map(|d| d.variance).collect();
    let k = per.len() as f64;
    let summary = BatchDiagnostics {
        batches: per.len(),
        mean_variance: stats::mean(&variances),
        sd_variance: stats::sample_sd(&variances),
        mean_skewness: per.iter().map(|d| d.skewness).sum::<f64>() / k,
        mean_kurtosis: per.iter().map(|d| d.kurtosis).sum::<f64>() / k,
        jb_rejection_rate: per.iter().filter(|d| d.jb_reject_5pct).count() as f64 / k,
    };
    Ok((summary, per))
}
