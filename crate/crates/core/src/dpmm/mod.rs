//! Dirichlet process mixture of normals over the calendar ages, fitted by
//! Gibbs sampling.
//!
//! Each sweep updates, in order: every calendar age by slice sampling; the
//! allocations and cluster parameters (Pólya urn or Walker slice scheme);
//! the concentration `alpha` by Metropolis-Hastings; the centring `mu_phi`
//! exactly.

mod chain;
pub mod conjugate;
mod io;
mod polya;
mod state;
mod updates;
pub mod walker;

pub use chain::{run_chain, ChainConfig, PosteriorSamples, Sampler, StoredState};
pub use conjugate::{base_marginal, ln_base_marginal, Cluster, NormalGamma};
pub use io::{read_samples, write_samples};
pub use polya::polya_reallocate;
pub use state::{init_state, init_state_at, DpmmState, SamplerKind};
pub use updates::{
    alpha_log_acceptance, alpha_log_likelihood, expected_clusters, update_alpha, update_cluster_params,
    update_mu_phi, update_theta,
};
pub use walker::walker_reallocate;

#[cfg(test)]
mod tests;
