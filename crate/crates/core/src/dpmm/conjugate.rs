//! Normal-Gamma algebra for cluster means and precisions.

use rand::Rng;
use rand_distr::{Distribution, Gamma, StandardNormal};

use crate::calibrate::Hyperparameters;
use crate::math::student_t_ln_pdf;

/// Mean and precision of one mixture component.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cluster {
    pub phi: f64,
    pub tau: f64,
}

/// `(phi, tau) ~ NormalGamma(mean, lambda, shape, rate)`: `tau ~ Gamma(shape,
/// rate)` and `phi | tau ~ N(mean, 1 / (lambda tau))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormalGamma {
    pub mean: f64,
    pub lambda: f64,
    pub shape: f64,
    pub rate: f64,
}

impl NormalGamma {
    /// The base measure centred on `mu_phi`.
    pub fn prior(mu_phi: f64, hyper: &Hyperparameters) -> Self {
        Self {
            mean: mu_phi,
            lambda: hyper.lambda,
            shape: hyper.nu1,
            rate: hyper.nu2,
        }
    }

    /// Posterior after observing `data` as draws from `N(phi, 1/tau)`.
    pub fn posterior(&self, data: &[f64]) -> Self {
        if data.is_empty() {
            return *self;
        }
        let n = data.len() as f64;
        let mean = data.iter().sum::<f64>() / n;
        let ss = data.iter().map(|x| (x - mean).powi(2)).sum::<f64>();
        self.posterior_from_stats(n, mean, ss)
    }

    /// Posterior from the count, sample mean and centred sum of squares.
    pub fn posterior_from_stats(&self, n: f64, mean: f64, ss: f64) -> Self {
        if n == 0.0 {
            return *self;
        }
        let lambda_n = self.lambda + n;
        let d = mean - self.mean;
        Self {
            mean: (self.lambda * self.mean + n * mean) / lambda_n,
            lambda: lambda_n,
            shape: self.shape + 0.5 * n,
            rate: self.rate + 0.5 * ss + self.lambda * n * d * d / (2.0 * lambda_n),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Cluster {
        let gamma = Gamma::new(self.shape, 1.0 / self.rate).expect("positive Normal-Gamma parameters");
        let tau: f64 = gamma.sample(rng).max(f64::MIN_POSITIVE);
        let z: f64 = StandardNormal.sample(rng);
        Cluster {
            phi: self.mean + z / (self.lambda * tau).sqrt(),
            tau,
        }
    }

    /// Parameters `(df, loc, scale)` of the Student-t density of a new
    /// observation with `(phi, tau)` integrated out.
    pub fn predictive_t(&self) -> (f64, f64, f64) {
        let scale = (self.rate * (self.lambda + 1.0) / (self.shape * self.lambda)).sqrt();
        (2.0 * self.shape, self.mean, scale)
    }

    pub fn predictive_ln_pdf(&self, x: f64) -> f64 {
        let (df, loc, scale) = self.predictive_t();
        student_t_ln_pdf(x, df, loc, scale)
    }
}

/// Density of a calendar age drawn from a fresh cluster of the base measure
/// centred on `mu_phi`: a Student-t with `2 nu1` degrees of freedom.
pub fn base_marginal(theta: f64, mu_phi: f64, hyper: &Hyperparameters) -> f64 {
    ln_base_marginal(theta, mu_phi, hyper).exp()
}

pub fn ln_base_marginal(theta: f64, mu_phi: f64, hyper: &Hyperparameters) -> f64 {
    NormalGamma::prior(mu_phi, hyper).predictive_ln_pdf(theta)
}
