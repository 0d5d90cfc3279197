use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use statrs::function::gamma::ln_gamma;

use super::conjugate::NormalGamma;
use super::state::DpmmState;
use crate::calibrate::{ln_likelihood_unchecked, Determination, Hyperparameters};
use crate::curve::CalibrationCurve;
use crate::error::{Error, Result};
use crate::math::std_normal_cdf;
use crate::slice::{slice_sample, SliceConfig};

/// Slice-samples `theta[i]` from its conditional: the calibration
/// likelihood times the normal density of its cluster, on the curve support.
pub fn update_theta<R: Rng + ?Sized>(
    state: &mut DpmmState,
    i: usize,
    det: &Determination,
    curve: &CalibrationCurve,
    hyper: &Hyperparameters,
    rng: &mut R,
) -> Result<f64> {
    let cluster = state.clusters[state.labels[i]];
    let (lo, hi) = curve.support();
    let cfg = SliceConfig::new(hyper.slice_width)
        .max_steps(hyper.slice_max_steps)
        .bounds(lo, hi);
    let sigma2 = det.sigma * det.sigma;
    let target = |t: f64| {
        let d = t - cluster.phi;
        ln_likelihood_unchecked(det.x, sigma2, curve, t) - 0.5 * cluster.tau * d * d
    };
    let draw = slice_sample(target, state.theta[i], &cfg, rng)?;
    state.theta[i] = draw.value;
    Ok(draw.value)
}

/// Per-cluster count, mean and centred sum of squares of the member ages.
pub(crate) fn cluster_stats(state: &DpmmState) -> Vec<(f64, f64, f64)> {
    let k = state.clusters.len();
    let mut sum = vec![0.0; k];
    for (&t, &c) in state.theta.iter().zip(&state.labels) {
        sum[c] += t;
    }
    let mean: Vec<f64> = sum
        .iter()
        .zip(&state.counts)
        .map(|(s, &n)| if n > 0 { s / n as f64 } else { 0.0 })
        .collect();
    let mut ss = vec![0.0; k];
    for (&t, &c) in state.theta.iter().zip(&state.labels) {
        ss[c] += (t - mean[c]).powi(2);
    }
    (0..k).map(|j| (state.counts[j] as f64, mean[j], ss[j])).collect()
}

/// Redraws `(phi, tau)` for every represented cluster from its Normal-Gamma
/// posterior; empty clusters draw from the base measure.
pub fn update_cluster_params<R: Rng + ?Sized>(state: &mut DpmmState, hyper: &Hyperparameters, rng: &mut R) {
    let prior = NormalGamma::prior(state.mu_phi, hyper);
    let stats = cluster_stats(state);
    for (cluster, (n, mean, ss)) in state.clusters.iter_mut().zip(stats) {
        *cluster = prior.posterior_from_stats(n, mean, ss).sample(rng);
    }
}

/// `log L(alpha; c)` for the allocation partition, up to a constant.
pub fn alpha_log_likelihood(alpha: f64, counts: &[usize], n: usize) -> f64 {
    let occupied = counts.iter().filter(|&&c| c > 0);
    let k = occupied.clone().count() as f64;
    let sizes: f64 = occupied.map(|&c| ln_gamma(c as f64)).sum();
    k * alpha.ln() + sizes + ln_gamma(alpha) - ln_gamma(alpha + n as f64)
}

/// Log Metropolis-Hastings ratio for moving the concentration from `current`
/// to `proposal` under the positive truncated-normal random walk.
pub fn alpha_log_acceptance(current: f64, proposal: f64, counts: &[usize], n: usize, hyper: &Hyperparameters) -> f64 {
    let sd = hyper.alpha_prop_sd;
    let prior = |a: f64| (hyper.eta1 - 1.0) * a.ln() - hyper.eta2 * a;
    prior(proposal) - prior(current) + std_normal_cdf(current / sd).ln() - std_normal_cdf(proposal / sd).ln()
        + alpha_log_likelihood(proposal, counts, n)
        - alpha_log_likelihood(current, counts, n)
}

/// One Metropolis-Hastings step for the concentration. Returns whether the
/// proposal was accepted.
pub fn update_alpha<R: Rng + ?Sized>(state: &mut DpmmState, hyper: &Hyperparameters, rng: &mut R) -> bool {
    let proposal = loop {
        let z: f64 = StandardNormal.sample(rng);
        let a = state.alpha + hyper.alpha_prop_sd * z;
        if a > 0.0 {
            break a;
        }
    };
    let log_ratio = alpha_log_acceptance(state.alpha, proposal, &state.counts, state.n(), hyper);
    let accept = log_ratio >= 0.0 || rng.random::<f64>().ln() < log_ratio;
    if accept {
        state.alpha = proposal;
    }
    accept
}

/// Exact Gibbs draw of the centring `mu_phi` given the occupied clusters.
pub fn update_mu_phi<R: Rng + ?Sized>(state: &mut DpmmState, hyper: &Hyperparameters, rng: &mut R) -> Result<f64> {
    let (mut sum_tau, mut sum_tau_phi) = (0.0, 0.0);
    for (c, &n) in state.clusters.iter().zip(&state.counts) {
        if n > 0 {
            sum_tau += c.tau;
            sum_tau_phi += c.tau * c.phi;
        }
    }
    if sum_tau == 0.0 {
        return Err(Error::Invariant("no occupied cluster for the centring update".into()));
    }
    let precision = hyper.psi + hyper.lambda * sum_tau;
    let mean = (hyper.xi * hyper.psi + hyper.lambda * sum_tau_phi) / precision;
    let z: f64 = StandardNormal.sample(rng);
    state.mu_phi = mean + z / precision.sqrt();
    Ok(state.mu_phi)
}

/// Prior expected number of occupied clusters among `n` observations.
pub fn expected_clusters(alpha: f64, n: usize) -> f64 {
    (0..n).map(|i| alpha / (alpha + i as f64)).sum()
}
