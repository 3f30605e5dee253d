//! Small numerical helpers shared across modules.

/// `log Σ exp(x_i)`, stable under large shifts. Returns `-inf` for an empty
/// slice or when every term is `-inf`.
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if max == f64::INFINITY {
        return f64::INFINITY;
    }
    let s: f64 = xs.iter().map(|&x| (x - max).exp()).sum();
    max + s.ln()
}

/// `log((1/n) Σ exp(x_i))`.
pub fn log_mean_exp(xs: &[f64]) -> f64 {
    log_sum_exp(xs) - (xs.len() as f64).ln()
}

/// `log(exp(a) + exp(b))`.
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if hi == f64::NEG_INFINITY {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance (divisor `n - 1`); zero for fewer than two values.
pub fn sample_variance(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (xs.len() - 1) as f64
}

pub fn sample_sd(xs: &[f64]) -> f64 {
    sample_variance(xs).sqrt()
}

/// Central moments `(m2, m3, m4)` with divisor `n`.
pub fn central_moments(xs: &[f64]) -> (f64, f64, f64) {
    let n = xs.len() as f64;
    let m = mean(xs);
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for &x in xs {
        let d = x - m;
        let d2 = d * d;
        m2 += d2;
        m3 += d2 * d;
        m4 += d2 * d2;
    }
    (m2 / n, m3 / n, m4 / n)
}

/// Weighted mean, standard deviation, skewness and kurtosis with weights that
/// need not be normalised.
pub fn weighted_moments(values: &[f64], weights: &[f64]) -> [f64; 4] {
    let total: f64 = weights.iter().sum();
    let mean = values
        .iter()
        .zip(weights)
        .map(|(v, w)| v * w)
        .sum::<f64>()
        / total;
    let (mut m2, mut m3, mut m4) = (0.0, 0.0, 0.0);
    for (&v, &w) in values.iter().zip(weights) {
        let d = v - mean;
        let d2 = d * d;
        m2 += w * d2;
        m3 += w * d2 * d;
        m4 += w * d2 * d2;
    }
    m2 /= total;
    m3 /= total;
    m4 /= total;
    if m2 <= 0.0 {
        return [mean, 0.0, 0.0, 3.0];
    }
    [mean, m2.sqrt(), m3 / m2.powf(1.5), m4 / (m2 * m2)]
}

/// Weighted quantile: the smallest value whose cumulative normalised weight
/// reaches `p` (inverse of the step-function weighted ECDF).
pub fn weighted_quantile(values: &[f64], weights: &[f64], p: f64) -> f64 {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    let total: f64 = weights.iter().sum();
    let target = p * total;
    let mut cum = 0.0;
    for &i in &order {
        if weights[i] <= 0.0 {
            continue;
        }
        cum += weights[i];
        // relative slack absorbs rounding in the running sum
        if cum >= target * (1.0 - 1e-12) {
            return values[i];
        }
    }
    values[*order.last().expect("weighted_quantile on empty input")]
}
