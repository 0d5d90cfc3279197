//! Univariate slice sampling with stepping out and shrinkage (Neal, 2003).

use rand::Rng;
use rand_distr::{Distribution, Exp1};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SliceConfig {
    /// Initial interval width and stepping-out increment.
    pub width: f64,
    /// Expansion budget; split at random between the two sides, so neither
    /// side ever expands more than this many times.
    pub max_steps: u32,
    /// Hard support `(lo, hi)`.
    pub bounds: Option<(f64, f64)>,
}

impl SliceConfig {
    pub fn new(width: f64) -> Self {
        Self {
            width,
            max_steps: 20,
            bounds: None,
        }
    }

    pub fn max_steps(self, max_steps: u32) -> Self {
        Self { max_steps, ..self }
    }

    pub fn bounds(self, lo: f64, hi: f64) -> Self {
        Self {
            bounds: Some((lo, hi)),
            ..self
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.width > 0.0 && self.width.is_finite()) {
            return Err(Error::InvalidParameter(format!("slice width must be positive, got {}", self.width)));
        }
        if self.max_steps < 1 {
            return Err(Error::InvalidParameter("slice max_steps must be at least 1".into()));
        }
        if let Some((lo, hi)) = self.bounds {
            if !(lo < hi) {
                return Err(Error::InvalidParameter(format!("slice bounds ({lo}, {hi}) are empty")));
            }
        }
        Ok(())
    }
}

/// Outcome of one slice update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SliceDraw {
    pub value: f64,
    /// Log height of the slice; `log_density(value) > level`.
    pub level: f64,
    /// Expansions performed to the left and right.
    pub steps_left: u32,
    pub steps_right: u32,
    pub evaluations: u32,
}

/// One slice-sampling update of `current` targeting `exp(log_density)`.
///
/// Non-finite log densities at trial points are treated as outside the
/// slice.
pub fn slice_sample<F, R>(mut log_density: F, current: f64, cfg: &SliceConfig, rng: &mut R) -> Result<SliceDraw>
where
    F: FnMut(f64) -> f64,
    R: Rng + ?Sized,
{
    let (lo, hi) = cfg.bounds.unwrap_or((f64::NEG_INFINITY, f64::INFINITY));
    if !(current >= lo && current <= hi) {
        return Err(Error::OutOfRange { theta: current, lo, hi });
    }
    let mut evaluations = 1;
    let f0 = log_density(current);
    if !f0.is_finite() {
        return Err(Error::InvalidStart(f0));
    }
    let e: f64 = Exp1.sample(rng);
    let level = f0 - e;

    let mut in_slice = |x: f64, evals: &mut u32| -> bool {
        if x < lo || x > hi {
            return false;
        }
        *evals += 1;
        log_density(x) > level
    };

    let w = cfg.width;
    let mut left = current - w * rng.random::<f64>();
    let mut right = left + w;
    let mut j = (cfg.max_steps as f64 * rng.random::<f64>()).floor() as u32;
    let mut k = cfg.max_steps - 1 - j;
    let (mut steps_left, mut steps_right) = (0, 0);
    while j > 0 && in_slice(left, &mut evaluations) {
        left -= w;
        j -= 1;
        steps_left += 1;
    }
    while k > 0 && in_slice(right, &mut evaluations) {
        right += w;
        k -= 1;
        steps_right += 1;
    }
    left = left.max(lo);
    right = right.min(hi);

    loop {
        let x = left + rng.random::<f64>() * (right - left);
        if in_slice(x, &mut evaluations) {
            return Ok(SliceDraw {
                value: x,
                level,
                steps_left,
                steps_right,
                evaluations,
            });
        }
        if x < current {
            left = x;
        } else {
            right = x;
        }
        if right - left <= f64::EPSILON * current.abs().max(1.0) {
            // interval collapsed onto the current point
            return Ok(SliceDraw {
                value: current,
                level,
                steps_left,
                steps_right,
                evaluations,
            });
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::std_normal_cdf;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ks_statistic(mut draws: Vec<f64>, cdf: impl Fn(f64) -> f64) -> f64 {
        draws.sort_by(f64::total_cmp);
        let n = draws.len() as f64;
        draws
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = cdf(x);
                (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
            })
            .fold(0.0, f64::max)
    }

    fn run<F: FnMut(f64) -> f64>(mut f: F, start: f64, cfg: SliceConfig, n: usize, thin: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = start;
        let mut out = Vec::with_capacity(n);
        for it in 0..n * thin {
            x = slice_sample(&mut f, x, &cfg, &mut rng).unwrap().value;
            if (it + 1) % thin == 0 {
                out.push(x);
            }
        }
        out
    }

    #[test]
    fn standard_normal_moments_and_ks() {
        let draws = run(|x| -0.5 * x * x, 0.3, SliceConfig::new(1.0), 50_000, 5, 11);
        let n = draws.len() as f64;
        let mean = draws.iter().sum::<f64>() / n;
        let sd = (draws.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt();
        assert!(mean.abs() < 0.03, "{mean}");
        assert!((sd - 1.0).abs() < 0.03, "{sd}");
        assert!(ks_statistic(draws, std_normal_cdf) < 0.02);
    }

    #[test]
    fn uniform_target_stays_in_bounds() {
        let cfg = SliceConfig::new(3.0).bounds(2.0, 5.0);
        let draws = run(|_| 0.0, 4.0, cfg, 20_000, 1, 12);
        assert!(draws.iter().all(|x| (2.0..=5.0).contains(x)));
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        assert!((mean - 3.5).abs() < 0.03);
    }

    #[test]
    fn output_is_inside_the_slice_and_steps_are_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let cfg = SliceConfig::new(0.01).max_steps(7).bounds(-50.0, 50.0);
        let f = |x: f64| -x.abs();
        let mut x = 0.0;
        for _ in 0..5_000 {
            let d = slice_sample(f, x, &cfg, &mut rng).unwrap();
            assert!(f(d.value) > d.level);
            assert!(d.steps_left + d.steps_right <= 6);
            assert!((-50.0..=50.0).contains(&d.value));
            x = d.value;
        }
    }

    #[test]
    fn invalid_start_is_an_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cfg = SliceConfig::new(1.0);
        let f = |x: f64| if x > 0.0 { 0.0 } else { f64::NEG_INFINITY };
        assert!(matches!(slice_sample(f, -1.0, &cfg, &mut rng), Err(Error::InvalidStart(_))));
        assert!(matches!(slice_sample(|_| f64::NAN, 0.0, &cfg, &mut rng), Err(Error::InvalidStart(_))));
        let bounded = cfg.bounds(0.0, 1.0);
        assert!(matches!(slice_sample(|_| 0.0, 2.0, &bounded, &mut rng), Err(Error::OutOfRange { .. })));
    }

    #[test]
    fn nan_trial_points_shrink_instead_of_crashing() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let cfg = SliceConfig::new(4.0);
        let f = |x: f64| if x.abs() < 1.0 { -0.5 * x * x } else { f64::NAN };
        let mut x = 0.0;
        for _ in 0..2_000 {
            x = slice_sample(f, x, &cfg, &mut rng).unwrap().value;
            assert!(x.abs() < 1.0);
        }
    }

    #[test]
    fn bimodal_mode_masses() {
        // 0.5 N(-3, 1) + 0.5 N(3, 1); by symmetry each side holds mass 0.5
        let f = |x: f64| {
            let a = -0.5 * (x + 3.0).powi(2);
            let b = -0.5 * (x - 3.0).powi(2);
            a.max(b) + (-(a - b).abs()).exp().ln_1p()
        };
        let draws = run(f, 3.0, SliceConfig::new(5.0), 50_000, 10, 14);
        let left = draws.iter().filter(|x| **x < 0.0).count() as f64 / draws.len() as f64;
        assert!((left - 0.5).abs() < 0.05, "{left}");
    }

    #[test]
    fn discretised_target_kernel_preserves_distribution() {
        // piecewise-constant density on [0, 5) with cell weights p
        let p = [0.1f64, 0.3, 0.15, 0.25, 0.2];
        let f = |x: f64| {
            let k = x.floor() as usize;
            p.get(k).map_or(f64::NEG_INFINITY, |w| w.ln())
        };
        let cfg = SliceConfig::new(1.5).bounds(0.0, 5.0 - 1e-12);
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let mut counts = [[0u64; 5]; 5];
        let mut x = 2.5;
        for _ in 0..1_000_000 {
            let next = slice_sample(f, x, &cfg, &mut rng).unwrap().value;
            counts[x.floor() as usize][next.floor() as usize] += 1;
            x = next;
        }
        let kernel: Vec<Vec<f64>> = counts
            .iter()
            .map(|row| {
                let total: u64 = row.iter().sum();
                row.iter().map(|&c| c as f64 / total as f64).collect()
            })
            .collect();
        // stationary distribution of the empirical kernel by power iteration
        let mut pi = vec![0.2; 5];
        for _ in 0..10_000 {
            let mut next = vec![0.0; 5];
            for (i, row) in kernel.iter().enumerate() {
                for (j, k) in row.iter().enumerate() {
                    next[j] += pi[i] * k;
                }
            }
            pi = next;
        }
        let tv: f64 = pi.iter().zip(&p).map(|(a, b)| (a - b).abs()).sum::<f64>() / 2.0;
        assert!(tv < 0.01, "{pi:?}");
    }
}
