use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::conjugate::Cluster;
use super::polya::polya_reallocate;
use super::state::{init_state, DpmmState, SamplerKind};
use super::updates::{update_alpha, update_cluster_params, update_mu_phi, update_theta};
use super::walker::walker_sweep;
use crate::calibrate::{Determination, Hyperparameters};
use crate::curve::CalibrationCurve;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub n_iter: usize,
    /// Leading iterations discarded.
    pub n_burn: usize,
    /// Keep every `thin`-th iteration after burn-in.
    pub thin: usize,
    pub sampler: SamplerKind,
    pub seed: u64,
    pub hyper: Hyperparameters,
}

impl ChainConfig {
    pub const DEFAULT_ITERATIONS: usize = 50_000;
    pub const DEFAULT_BURN: usize = 25_000;
    pub const DEFAULT_THIN: usize = 5;

    pub fn new(hyper: Hyperparameters) -> Self {
        Self {
            n_iter: Self::DEFAULT_ITERATIONS,
            n_burn: Self::DEFAULT_BURN,
            thin: Self::DEFAULT_THIN,
            sampler: SamplerKind::default(),
            seed: 0,
            hyper,
        }
    }

    pub fn iterations(self, n_iter: usize, n_burn: usize, thin: usize) -> Self {
        Self {
            n_iter,
            n_burn,
            thin,
            ..self
        }
    }

    pub fn sampler(self, sampler: SamplerKind) -> Self {
        Self { sampler, ..self }
    }

    pub fn seed(self, seed: u64) -> Self {
        Self { seed, ..self }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_burn >= self.n_iter {
            return Err(Error::InvalidParameter(format!(
                "burn-in ({}) must be shorter than the chain ({})",
                self.n_burn, self.n_iter
            )));
        }
        if self.thin < 1 {
            return Err(Error::InvalidParameter("thin must be at least 1".into()));
        }
        self.hyper.validate()
    }

    /// Number of states a run keeps.
    pub fn n_stored(&self) -> usize {
        (self.n_iter - self.n_burn) / self.thin
    }

    fn keeps(&self, iteration: usize) -> bool {
        iteration >= self.n_burn && (iteration - self.n_burn + 1) % self.thin == 0
    }
}

/// One retained iteration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoredState {
    /// Zero-based iteration index within the chain.
    pub iteration: usize,
    #[serde(skip)]
    pub theta: Vec<f64>,
    pub labels: Vec<usize>,
    pub phi: Vec<f64>,
    pub tau: Vec<f64>,
    /// Stick weights of the represented clusters (Walker only).
    pub weights: Option<Vec<f64>>,
    pub counts: Vec<usize>,
    pub alpha: f64,
    pub mu_phi: f64,
}

impl StoredState {
    pub fn capture(iteration: usize, state: &DpmmState, kind: SamplerKind) -> Self {
        Self {
            iteration,
            theta: state.theta.clone(),
            labels: state.labels.clone(),
            phi: state.clusters.iter().map(|c| c.phi).collect(),
            tau: state.clusters.iter().map(|c| c.tau).collect(),
            weights: (kind == SamplerKind::Walker).then(|| state.weights.clone()),
            counts: state.counts.clone(),
            alpha: state.alpha,
            mu_phi: state.mu_phi,
        }
    }

    pub fn clusters(&self) -> impl Iterator<Item = Cluster> + '_ {
        self.phi.iter().zip(&self.tau).map(|(&phi, &tau)| Cluster { phi, tau })
    }

    pub fn n_occupied(&self) -> usize {
        self.counts.iter().filter(|&&c| c > 0).count()
    }

    /// Rebuilds the full sampler state.
    pub fn to_state(&self) -> Result<DpmmState> {
        DpmmState::from_parts(
            self.theta.clone(),
            self.labels.clone(),
            self.clusters().collect(),
            self.weights.clone().unwrap_or_default(),
            self.alpha,
            self.mu_phi,
        )
    }
}

/// Thinned output of one chain.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorSamples {
    pub config: ChainConfig,
    /// Determination ids, in model order.
    pub ids: Vec<String>,
    pub states: Vec<StoredState>,
    /// Fraction of concentration proposals accepted over the whole run.
    pub alpha_acceptance: f64,
}

impl PosteriorSamples {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    /// Stored draws of `theta[i]`.
    pub fn theta_draws(&self, i: usize) -> Vec<f64> {
        self.states.iter().map(|s| s.theta[i]).collect()
    }

    pub fn alpha_draws(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.alpha).collect()
    }

    pub fn cluster_counts(&self) -> Vec<usize> {
        self.states.iter().map(StoredState::n_occupied).collect()
    }
}

/// A running chain: state, private random stream and the fixed inputs.
pub struct Sampler<'a> {
    dets: &'a [Determination],
    curve: &'a CalibrationCurve,
    hyper: Hyperparameters,
    kind: SamplerKind,
    state: DpmmState,
    rng: ChaCha8Rng,
    alpha_proposals: u64,
    alpha_accepted: u64,
}

impl<'a> Sampler<'a> {
    pub fn new(
        dets: &'a [Determination],
        curve: &'a CalibrationCurve,
        hyper: Hyperparameters,
        kind: SamplerKind,
        seed: u64,
    ) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let state = init_state(dets, curve, &hyper, kind, &mut rng)?;
        Ok(Self::assemble(dets, curve, hyper, kind, state, rng))
    }

    /// Starts from a given state rather than the default initialisation.
    pub fn from_state(
        dets: &'a [Determination],
        curve: &'a CalibrationCurve,
        hyper: Hyperparameters,
        kind: SamplerKind,
        state: DpmmState,
        seed: u64,
    ) -> Result<Self> {
        if state.n() != dets.len() {
            return Err(Error::InvalidParameter(format!(
                "state holds {} ages for {} determinations",
                state.n(),
                dets.len()
            )));
        }
        hyper.validate()?;
        state.validate(curve, kind)?;
        Ok(Self::assemble(dets, curve, hyper, kind, state, ChaCha8Rng::seed_from_u64(seed)))
    }

    fn assemble(
        dets: &'a [Determination],
        curve: &'a CalibrationCurve,
        hyper: Hyperparameters,
        kind: SamplerKind,
        state: DpmmState,
        rng: ChaCha8Rng,
    ) -> Self {
        Self {
            dets,
            curve,
            hyper,
            kind,
            state,
            rng,
            alpha_proposals: 0,
            alpha_accepted: 0,
        }
    }

    pub fn state(&self) -> &DpmmState {
        &self.state
    }

    pub fn alpha_acceptance(&self) -> f64 {
        if self.alpha_proposals == 0 {
            return f64::NAN;
        }
        self.alpha_accepted as f64 / self.alpha_proposals as f64
    }

    /// One full Gibbs sweep: ages, allocations and cluster parameters,
    /// concentration, centring.
    pub fn sweep(&mut self) -> Result<()> {
        let (state, rng, hyper) = (&mut self.state, &mut self.rng, &self.hyper);
        for (i, det) in self.dets.iter().enumerate() {
            update_theta(state, i, det, self.curve, hyper, rng)?;
        }
        match self.kind {
            SamplerKind::Polya => {
                for i in 0..state.n() {
                    polya_reallocate(state, i, hyper, rng);
                }
            }
            SamplerKind::Walker => walker_sweep(state, hyper, rng)?,
        }
        update_cluster_params(state, hyper, rng);
        self.alpha_proposals += 1;
        if update_alpha(state, hyper, rng) {
            self.alpha_accepted += 1;
        }
        update_mu_phi(state, hyper, rng)?;
        state.validate(self.curve, self.kind)
    }
}

/// Runs one chain and keeps the thinned post-burn-in states.
pub fn run_chain(dets: &[Determination], curve: &CalibrationCurve, cfg: &ChainConfig) -> Result<PosteriorSamples> {
    cfg.validate()?;
    let mut sampler = Sampler::new(dets, curve, cfg.hyper.clone(), cfg.sampler, cfg.seed)?;
    let mut states = Vec::with_capacity(cfg.n_stored());
    for it in 0..cfg.n_iter {
        sampler.sweep()?;
        if cfg.keeps(it) {
            states.push(StoredState::capture(it, sampler.state(), cfg.sampler));
        }
    }
    debug_assert_eq!(states.len(), cfg.n_stored());
    Ok(PosteriorSamples {
        config: cfg.clone(),
        ids: dets.iter().map(|d| d.id.clone()).collect(),
        states,
        alpha_acceptance: sampler.alpha_acceptance(),
    })
}
