use rand::Rng;
use rand_distr::{Beta, Distribution, Gamma};
use serde::{Deserialize, Serialize};

use super::conjugate::{Cluster, NormalGamma};
use crate::calibrate::{map_estimates, Determination, Hyperparameters, COARSE_RESOLUTION};
use crate::curve::CalibrationCurve;
use crate::error::{Error, Result};

/// Which update is used for the allocations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SamplerKind {
    /// Marginal Pólya-urn (Chinese restaurant) reallocation.
    Polya,
    /// Walker's slice sampler over explicit stick-breaking weights.
    #[default]
    Walker,
}

impl std::str::FromStr for SamplerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "polya" => Ok(Self::Polya),
            "walker" => Ok(Self::Walker),
            other => Err(Error::InvalidParameter(format!(
                "unknown sampler {other:?}; expected polya or walker"
            ))),
        }
    }
}

impl std::fmt::Display for SamplerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Polya => "polya",
            Self::Walker => "walker",
        })
    }
}

/// Full state of the mixture sampler.
///
/// Cluster counts are kept in step with `labels`. Under the Pólya scheme
/// every cluster is occupied; under the Walker scheme the cluster table holds
/// every represented stick, including empty ones, with `weights` alongside.
#[derive(Debug, Clone, PartialEq)]
pub struct DpmmState {
    pub(crate) theta: Vec<f64>,
    pub(crate) labels: Vec<usize>,
    pub(crate) clusters: Vec<Cluster>,
    pub(crate) counts: Vec<usize>,
    pub(crate) weights: Vec<f64>,
    /// Stick mass not assigned to any represented cluster (Walker only).
    pub(crate) remainder: f64,
    pub(crate) alpha: f64,
    pub(crate) mu_phi: f64,
}

impl DpmmState {
    /// Assembles a state from explicit parts. `weights` must be empty
    /// (Pólya) or one per cluster (Walker).
    pub fn from_parts(
        theta: Vec<f64>,
        labels: Vec<usize>,
        clusters: Vec<Cluster>,
        weights: Vec<f64>,
        alpha: f64,
        mu_phi: f64,
    ) -> Result<Self> {
        if theta.len() != labels.len() {
            return Err(Error::InvalidParameter(format!(
                "{} ages but {} labels",
                theta.len(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&c| c >= clusters.len()) {
            return Err(Error::InvalidParameter(format!(
                "label {bad} has no cluster ({} clusters)",
                clusters.len()
            )));
        }
        if !weights.is_empty() && weights.len() != clusters.len() {
            return Err(Error::InvalidParameter("one weight per cluster required".into()));
        }
        let mut counts = vec![0; clusters.len()];
        for &c in &labels {
            counts[c] += 1;
        }
        let remainder = if weights.is_empty() { 0.0 } else { 1.0 - weights.iter().sum::<f64>() };
        Ok(Self {
            theta,
            labels,
            clusters,
            counts,
            weights,
            remainder,
            alpha,
            mu_phi,
        })
    }

    pub fn n(&self) -> usize {
        self.theta.len()
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn clusters(&self) -> &[Cluster] {
        &self.clusters
    }

    /// Members per cluster, indexed like [`clusters`](Self::clusters).
    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    /// Stick-breaking weights; empty under the Pólya scheme.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn remainder(&self) -> f64 {
        self.remainder
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn mu_phi(&self) -> f64 {
        self.mu_phi
    }

    pub fn n_occupied(&self) -> usize {
        self.counts.iter().filter(|&&c| c > 0).count()
    }

    /// Checks every structural invariant of the state.
    pub fn validate(&self, curve: &CalibrationCurve, kind: SamplerKind) -> Result<()> {
        let bad = |msg: String| Err(Error::Invariant(msg));
        if self.theta.len() != self.labels.len() {
            return bad("theta and labels differ in length".into());
        }
        if self.counts.len() != self.clusters.len() {
            return bad("cluster counts out of step with cluster table".into());
        }
        let mut counts = vec![0; self.clusters.len()];
        for &c in &self.labels {
            if c >= self.clusters.len() {
                return bad(format!("label {c} points past the cluster table"));
            }
            counts[c] += 1;
        }
        if counts != self.counts {
            return bad("cluster counts disagree with labels".into());
        }
        for (i, &t) in self.theta.iter().enumerate() {
            if !curve.contains(t) {
                return bad(format!("theta[{i}] = {t} outside curve support"));
            }
        }
        for (j, c) in self.clusters.iter().enumerate() {
            if !(c.tau > 0.0 && c.tau.is_finite() && c.phi.is_finite()) {
                return bad(format!("cluster {j} has phi {} tau {}", c.phi, c.tau));
            }
        }
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return bad(format!("alpha = {}", self.alpha));
        }
        if !self.mu_phi.is_finite() {
            return bad(format!("mu_phi = {}", self.mu_phi));
        }
        match kind {
            SamplerKind::Polya => {
                if let Some(j) = self.counts.iter().position(|&c| c == 0) {
                    return bad(format!("cluster {j} is empty after compaction"));
                }
                if !self.weights.is_empty() {
                    return bad("Pólya state carries stick weights".into());
                }
            }
            SamplerKind::Walker => {
                if self.weights.len() != self.clusters.len() {
                    return bad("one stick weight per represented cluster required".into());
                }
                if let Some(w) = self.weights.iter().find(|w| !(**w >= 0.0 && **w < 1.0)) {
                    return bad(format!("stick weight {w} outside [0, 1)"));
                }
                let total: f64 = self.weights.iter().sum();
                if !(self.remainder >= 0.0) || (total + self.remainder - 1.0).abs() > 1e-9 {
                    return bad(format!("stick weights sum to {total} with remainder {}", self.remainder));
                }
            }
        }
        Ok(())
    }
}

/// Starting state: ages at the coarse MAP estimates, labels dealt
/// round-robin over `n_init_clusters`, cluster parameters and the
/// concentration drawn from their priors.
pub fn init_state<R: Rng + ?Sized>(
    dets: &[Determination],
    curve: &CalibrationCurve,
    hyper: &Hyperparameters,
    kind: SamplerKind,
    rng: &mut R,
) -> Result<DpmmState> {
    if dets.is_empty() {
        return Err(Error::EmptyInput("no determinations to model".into()));
    }
    hyper.validate()?;
    let (lo, hi) = curve.support();
    let theta: Vec<f64> = map_estimates(dets, curve, COARSE_RESOLUTION)?
        .into_iter()
        .map(|t| t.clamp(lo, hi))
        .collect();
    init_state_at(theta, hyper, kind, rng)
}

/// As [`init_state`] with given starting ages.
pub fn init_state_at<R: Rng + ?Sized>(
    theta: Vec<f64>,
    hyper: &Hyperparameters,
    kind: SamplerKind,
    rng: &mut R,
) -> Result<DpmmState> {
    let n = theta.len();
    let k = hyper.n_init_clusters.min(n).max(1);
    let labels: Vec<usize> = (0..n).map(|i| i % k).collect();
    let base = NormalGamma::prior(hyper.xi, hyper);
    let clusters: Vec<Cluster> = (0..k).map(|_| base.sample(rng)).collect();
    let alpha = Gamma::new(hyper.eta1, 1.0 / hyper.eta2)
        .map_err(|e| Error::InvalidParameter(format!("alpha prior: {e}")))?
        .sample(rng)
        .max(f64::MIN_POSITIVE);
    let mut state = DpmmState::from_parts(theta, labels, clusters, Vec::new(), alpha, hyper.xi)?;
    if kind == SamplerKind::Walker {
        super::walker::update_weights(&mut state, rng)?;
    }
    Ok(state)
}

/// `Beta(a, b)` draw kept strictly inside (0, 1).
pub(crate) fn beta_draw<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> Result<f64> {
    let v: f64 = Beta::new(a, b)
        .map_err(|e| Error::Invariant(format!("Beta({a}, {b}): {e}")))?
        .sample(rng);
    if v.is_nan() {
        return Err(Error::Invariant(format!("Beta({a}, {b}) draw is NaN")));
    }
    Ok(v.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON / 2.0))
}
