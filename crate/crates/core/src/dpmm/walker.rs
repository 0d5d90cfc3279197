//! Walker's slice sampler for the stick-breaking representation.

use rand::Rng;

use super::conjugate::NormalGamma;
use super::state::{beta_draw, DpmmState};
use crate::calibrate::Hyperparameters;
use crate::error::{Error, Result};
use crate::math::{normal_ln_pdf, sample_log_categorical};

const MAX_STICKS: usize = 100_000;

/// Redraws the sticks up to the highest occupied label from their Beta
/// posteriors given the allocations; sticks above it are discarded.
pub fn update_weights<R: Rng + ?Sized>(state: &mut DpmmState, rng: &mut R) -> Result<()> {
    let k = state.labels.iter().max().map_or(0, |&c| c + 1);
    state.clusters.truncate(k);
    state.counts.truncate(k);
    let mut tail: usize = state.counts.iter().sum();
    let mut rest = 1.0;
    state.weights.clear();
    for j in 0..k {
        tail -= state.counts[j];
        let v = beta_draw(1.0 + state.counts[j] as f64, state.alpha + tail as f64, rng)?;
        state.weights.push(v * rest);
        rest *= 1.0 - v;
    }
    state.remainder = rest;
    Ok(())
}

/// Auxiliary slice levels `u_i ~ U(0, w_{c_i})`.
pub fn slice_levels<R: Rng + ?Sized>(state: &DpmmState, rng: &mut R) -> Vec<f64> {
    state
        .labels
        .iter()
        .map(|&c| rng.random::<f64>() * state.weights[c])
        .collect()
}

/// Appends prior sticks, with base-measure parameters, until the
/// unrepresented mass falls below `min_level`.
pub fn extend_sticks<R: Rng + ?Sized>(
    state: &mut DpmmState,
    min_level: f64,
    hyper: &Hyperparameters,
    rng: &mut R,
) -> Result<()> {
    let base = NormalGamma::prior(state.mu_phi, hyper);
    while state.remainder >= min_level {
        if state.clusters.len() >= MAX_STICKS {
            return Err(Error::Invariant(format!(
                "stick list exceeded {MAX_STICKS} entries (alpha = {}, level = {min_level})",
                state.alpha
            )));
        }
        let v = beta_draw(1.0, state.alpha, rng)?;
        state.weights.push(v * state.remainder);
        state.remainder *= 1.0 - v;
        state.clusters.push(base.sample(rng));
        state.counts.push(0);
    }
    Ok(())
}

/// Reallocates observation `i` among the sticks whose weight exceeds its
/// slice level, with probability proportional to the cluster density.
pub fn walker_reallocate<R: Rng + ?Sized>(state: &mut DpmmState, i: usize, level: f64, rng: &mut R) -> usize {
    let old = state.labels[i];
    let theta = state.theta[i];
    let mut candidates = Vec::new();
    let mut log_w = Vec::new();
    for (j, (c, &w)) in state.clusters.iter().zip(&state.weights).enumerate() {
        if w > level || j == old {
            candidates.push(j);
            log_w.push(normal_ln_pdf(theta, c.phi, 1.0 / c.tau));
        }
    }
    let k = candidates[sample_log_categorical(&log_w, rng)];
    state.counts[old] -= 1;
    state.counts[k] += 1;
    state.labels[i] = k;
    k
}

/// Weights, slice levels, stick extension and reallocation of every
/// observation.
pub fn walker_sweep<R: Rng + ?Sized>(state: &mut DpmmState, hyper: &Hyperparameters, rng: &mut R) -> Result<()> {
    update_weights(state, rng)?;
    let levels = slice_levels(state, rng);
    let min_level = levels.iter().copied().fold(f64::INFINITY, f64::min).max(f64::MIN_POSITIVE);
    extend_sticks(state, min_level, hyper, rng)?;
    for (i, &u) in levels.iter().enumerate() {
        walker_reallocate(state, i, u, rng);
    }
    Ok(())
}
