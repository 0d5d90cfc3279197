use rand::Rng;

use super::conjugate::{ln_base_marginal, NormalGamma};
use super::state::DpmmState;
use crate::calibrate::Hyperparameters;
use crate::math::{normal_ln_pdf, sample_log_categorical};

/// Reallocates observation `i` given the other allocations and the explicit
/// cluster parameters. A new cluster takes its parameters from the
/// Normal-Gamma posterior given `theta[i]` alone. Returns the new label.
pub fn polya_reallocate<R: Rng + ?Sized>(state: &mut DpmmState, i: usize, hyper: &Hyperparameters, rng: &mut R) -> usize {
    let old = state.labels[i];
    state.counts[old] -= 1;
    if state.counts[old] == 0 {
        remove_cluster(state, old);
    }
    let theta = state.theta[i];
    let mut log_w: Vec<f64> = state
        .clusters
        .iter()
        .zip(&state.counts)
        .map(|(c, &n)| (n as f64).ln() + normal_ln_pdf(theta, c.phi, 1.0 / c.tau))
        .collect();
    log_w.push(state.alpha.ln() + ln_base_marginal(theta, state.mu_phi, hyper));
    let k = sample_log_categorical(&log_w, rng);
    if k == state.clusters.len() {
        let fresh = NormalGamma::prior(state.mu_phi, hyper).posterior(&[theta]).sample(rng);
        state.clusters.push(fresh);
        state.counts.push(0);
    }
    state.counts[k] += 1;
    state.labels[i] = k;
    k
}

/// Removes empty cluster `j`, moving the last cluster into its slot.
fn remove_cluster(state: &mut DpmmState, j: usize) {
    let last = state.clusters.len() - 1;
    state.clusters.swap_remove(j);
    state.counts.swap_remove(j);
    if j != last {
        for c in &mut state.labels {
            if *c == last {
                *c = j;
            }
        }
    }
}
