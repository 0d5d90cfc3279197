//! Posterior predictive density of a further calendar age, with pointwise
//! credible bands, and the posterior of the number of occupied clusters.

use std::collections::BTreeMap;

use rayon::prelude::*;

use crate::calibrate::{fine_resolution, DensityGrid, Hyperparameters};
use crate::curve::CalibrationCurve;
use crate::dpmm::{NormalGamma, PosteriorSamples, StoredState};
use crate::error::{Error, Result};
use crate::math::{self, LN_SQRT_2PI};

const GRID_CHUNK: usize = 256;

#[derive(Debug, Clone, PartialEq)]
pub struct PredictiveDensity {
    pub theta: Vec<f64>,
    /// Pointwise mean over realisations.
    pub mean: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    /// Central probability of the `lower..upper` band.
    pub level: f64,
    /// One row per stored sample, when requested.
    pub realisations: Option<Vec<Vec<f64>>>,
}

impl PredictiveDensity {
    /// Trapezoid integral of the mean curve.
    pub fn mean_mass(&self) -> f64 {
        trapezoid(&self.theta, &self.mean)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictiveOptions {
    pub level: f64,
    pub keep_realisations: bool,
}

impl Default for PredictiveOptions {
    fn default() -> Self {
        Self {
            level: 0.95,
            keep_realisations: false,
        }
    }
}

/// Mixture weights of one realisation: one per stored cluster, then the
/// weight of the fresh-cluster component.
pub fn mixture_weights(sample: &StoredState) -> (Vec<f64>, f64) {
    match &sample.weights {
        Some(w) => {
            let total: f64 = w.iter().sum();
            (w.clone(), (1.0 - total).max(0.0))
        }
        None => {
            let n: usize = sample.counts.iter().sum();
            let denom = n as f64 + sample.alpha;
            let w = sample.counts.iter().map(|&c| c as f64 / denom).collect();
            (w, sample.alpha / denom)
        }
    }
}

/// A realisation prepared for repeated evaluation.
struct Mixture {
    /// `(log weight + log normaliser, phi, tau)` per component.
    normals: Vec<(f64, f64, f64)>,
    p_new: f64,
    base: NormalGamma,
}

impl Mixture {
    fn new(sample: &StoredState, hyper: &Hyperparameters) -> Self {
        let (w, p_new) = mixture_weights(sample);
        let total = w.iter().sum::<f64>() + p_new;
        assert!(
            (total - 1.0).abs() < 1e-12,
            "predictive weights sum to {total}"
        );
        let normals = w
            .iter()
            .zip(sample.clusters())
            .filter(|(w, _)| **w > 0.0)
            .map(|(w, c)| (w.ln() + 0.5 * c.tau.ln() - LN_SQRT_2PI, c.phi, c.tau))
            .collect();
        Self {
            normals,
            p_new,
            base: NormalGamma::prior(sample.mu_phi, hyper),
        }
    }

    fn eval(&self, theta: f64) -> f64 {
        let mut d: f64 = self
            .normals
            .iter()
            .map(|&(lc, phi, tau)| (lc - 0.5 * tau * (theta - phi).powi(2)).exp())
            .sum();
        if self.p_new > 0.0 {
            d += self.p_new * self.base.predictive_ln_pdf(theta).exp();
        }
        d
    }
}

/// Density of one posterior realisation on `grid`: its finite normal mixture
/// plus the Student-t contribution of unrepresented clusters.
pub fn predictive_realisation(sample: &StoredState, hyper: &Hyperparameters, grid: &[f64]) -> Vec<f64> {
    let m = Mixture::new(sample, hyper);
    grid.iter().map(|&t| m.eval(t)).collect()
}

pub fn predictive_density(samples: &PosteriorSamples, grid: &[f64]) -> Result<PredictiveDensity> {
    predictive_density_with(samples, grid, &PredictiveOptions::default())
}

/// Pointwise mean and equal-tailed quantiles of the realisations.
pub fn predictive_density_with(
    samples: &PosteriorSamples,
    grid: &[f64],
    opts: &PredictiveOptions,
) -> Result<PredictiveDensity> {
    if samples.is_empty() {
        return Err(Error::EmptyInput("no stored samples for the predictive density".into()));
    }
    if grid.is_empty() {
        return Err(Error::EmptyInput("empty predictive grid".into()));
    }
    if !(opts.level > 0.0 && opts.level < 1.0) {
        return Err(Error::InvalidParameter(format!("band level must be in (0, 1), got {}", opts.level)));
    }
    let hyper = &samples.config.hyper;
    let mixtures: Vec<Mixture> = samples.states.iter().map(|s| Mixture::new(s, hyper)).collect();
    let (p_lo, p_hi) = (0.5 * (1.0 - opts.level), 0.5 * (1.0 + opts.level));
    let s = mixtures.len() as f64;

    let summaries: Vec<(Vec<f64>, Vec<f64>, Vec<f64>, Vec<Vec<f64>>)> = grid
        .par_chunks(GRID_CHUNK)
        .map(|chunk| {
            let mut mean = Vec::with_capacity(chunk.len());
            let mut lower = Vec::with_capacity(chunk.len());
            let mut upper = Vec::with_capacity(chunk.len());
            // values[k][s]: grid point k, sample s
            let mut values: Vec<Vec<f64>> = chunk
                .iter()
                .map(|&t| mixtures.iter().map(|m| m.eval(t)).collect())
                .collect();
            for v in &mut values {
                mean.push(v.iter().sum::<f64>() / s);
                let mut sorted = v.clone();
                sorted.sort_by(f64::total_cmp);
                lower.push(math::quantile_sorted(&sorted, p_lo));
                upper.push(math::quantile_sorted(&sorted, p_hi));
            }
            if !opts.keep_realisations {
                values.clear();
            }
            (mean, lower, upper, values)
        })
        .collect();

    let mut out = PredictiveDensity {
        theta: grid.to_vec(),
        mean: Vec::with_capacity(grid.len()),
        lower: Vec::with_capacity(grid.len()),
        upper: Vec::with_capacity(grid.len()),
        level: opts.level,
        realisations: None,
    };
    let mut by_point = Vec::new();
    for (mean, lower, upper, values) in summaries {
        out.mean.extend(mean);
        out.lower.extend(lower);
        out.upper.extend(upper);
        by_point.extend(values);
    }
    if opts.keep_realisations {
        let rows = (0..mixtures.len())
            .map(|j| by_point.iter().map(|v: &Vec<f64>| v[j]).collect())
            .collect();
        out.realisations = Some(rows);
    }
    Ok(out)
}

/// Posterior probability of each number of occupied clusters, ascending.
pub fn cluster_count_posterior(samples: &PosteriorSamples) -> Result<Vec<(usize, f64)>> {
    if samples.is_empty() {
        return Err(Error::EmptyInput("no stored samples for the cluster count".into()));
    }
    let mut freq = BTreeMap::new();
    for k in samples.cluster_counts() {
        *freq.entry(k).or_insert(0usize) += 1;
    }
    let total = samples.len() as f64;
    Ok(freq.into_iter().map(|(k, c)| (k, c as f64 / total)).collect())
}

/// Most probable number of occupied clusters (smallest on ties).
pub fn cluster_count_mode(posterior: &[(usize, f64)]) -> Option<usize> {
    posterior
        .iter()
        .fold(None, |best: Option<(usize, f64)>, &(k, p)| match best {
            Some((_, bp)) if bp >= p => best,
            _ => Some((k, p)),
        })
        .map(|(k, _)| k)
}

/// Grid spanning the preliminary ages widened by four absolute deviations
/// either side, cut to the curve support, at the default fine resolution.
pub fn default_grid(preliminary: &[f64], curve: &CalibrationCurve) -> Result<Vec<f64>> {
    if preliminary.is_empty() {
        return Err(Error::EmptyInput("no preliminary ages for the predictive grid".into()));
    }
    let mad = math::median_abs_deviation(preliminary);
    let lo = preliminary.iter().copied().fold(f64::INFINITY, f64::min) - 4.0 * mad;
    let hi = preliminary.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 4.0 * mad;
    let lo = lo.max(curve.min_age());
    let hi = hi.min(curve.max_age());
    let res = fine_resolution(hi - lo);
    DensityGrid::axis((lo / res).floor() * res, hi, res)
        .map(|axis| axis.into_iter().filter(|&t| curve.contains(t)).collect())
}

/// Trapezoid rule over an ascending grid.
pub fn trapezoid(x: &[f64], y: &[f64]) -> f64 {
    x.windows(2)
        .zip(y.windows(2))
        .map(|(x, y)| 0.5 * (x[1] - x[0]) * (y[0] + y[1]))
        .sum()
}

/// Total variation distance between two densities on the same grid.
pub fn total_variation(x: &[f64], a: &[f64], b: &[f64]) -> f64 {
    let diff: Vec<f64> = a.iter().zip(b).map(|(p, q)| (p - q).abs()).collect();
    0.5 * trapezoid(x, &diff)
}
