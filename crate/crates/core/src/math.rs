//! Small numeric helpers shared by the samplers.

use rand::Rng;
use statrs::function::erf::erfc;
use statrs::function::gamma::ln_gamma;

pub(crate) const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

/// Log density of `N(mean, var)` at `x`.
#[inline]
pub fn normal_ln_pdf(x: f64, mean: f64, var: f64) -> f64 {
    let d = x - mean;
    -0.5 * d * d / var - 0.5 * var.ln() - LN_SQRT_2PI
}

#[inline]
pub fn normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    normal_ln_pdf(x, mean, var).exp()
}

/// Standard normal cdf.
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / std::f64::consts::SQRT_2)
}

/// Log density of a location-scale Student-t.
pub fn student_t_ln_pdf(x: f64, df: f64, loc: f64, scale: f64) -> f64 {
    let z = (x - loc) / scale;
    ln_gamma(0.5 * (df + 1.0))
        - ln_gamma(0.5 * df)
        - 0.5 * (df * std::f64::consts::PI).ln()
        - scale.ln()
        - 0.5 * (df + 1.0) * (z * z / df).ln_1p()
}

/// Log density of `Gamma(shape, rate)` at `x > 0`.
pub fn gamma_ln_pdf(x: f64, shape: f64, rate: f64) -> f64 {
    shape * rate.ln() - ln_gamma(shape) + (shape - 1.0) * x.ln() - rate * x
}

/// Draws an index with probability proportional to `exp(log_weights[k])`.
///
/// Weights are shifted by their maximum before exponentiating. Entries equal
/// to `-inf` are never selected unless every entry is `-inf`, in which case
/// the last index is returned.
pub fn sample_log_categorical<R: Rng + ?Sized>(log_weights: &[f64], rng: &mut R) -> usize {
    debug_assert!(!log_weights.is_empty());
    let max = log_weights
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return log_weights.len() - 1;
    }
    let total: f64 = log_weights.iter().map(|&lw| (lw - max).exp()).sum();
    let mut target = rng.random::<f64>() * total;
    for (k, &lw) in log_weights.iter().enumerate() {
        let p = (lw - max).exp();
        if target < p {
            return k;
        }
        target -= p;
    }
    // rounding fell off the end; return the last positive entry
    log_weights
        .iter()
        .rposition(|lw| lw.is_finite())
        .unwrap_or(log_weights.len() - 1)
}

/// Sorted copy with NaNs rejected by the caller.
pub(crate) fn sorted(values: &[f64]) -> Vec<f64> {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    v
}

/// Linear-interpolation quantile (Hyndman-Fan type 7) of sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

pub fn median(values: &[f64]) -> f64 {
    quantile_sorted(&sorted(values), 0.5)
}

/// Median absolute deviation from the median, unscaled.
pub fn median_abs_deviation(values: &[f64]) -> f64 {
    let m = median(values);
    let dev: Vec<f64> = values.iter().map(|v| (v - m).abs()).collect();
    median(&dev)
}

/// Largest absolute deviation from the median.
pub fn max_abs_deviation(values: &[f64]) -> f64 {
    let m = median(values);
    values.iter().map(|v| (v - m).abs()).fold(0.0, f64::max)
}

pub fn interquartile_range(values: &[f64]) -> f64 {
    let s = sorted(values);
    quantile_sorted(&s, 0.75) - quantile_sorted(&s, 0.25)
}
