//! Bayesian nonparametric calibration of related radiocarbon determinations.
//!
//! The calendar ages of a set of samples are modelled jointly as draws from
//! an unknown density with a Dirichlet process mixture of normals prior. The
//! crate provides independent grid calibration and summed probability
//! distributions as baselines, a Gibbs sampler for the mixture (Pólya urn and
//! Walker slice variants), the posterior predictive density with pointwise
//! bands, and a simulation harness comparing the two approaches.

pub mod calibrate;
pub mod curve;
pub mod dpmm;
mod error;
pub mod math;
pub mod predictive;
pub mod simstudy;
pub mod slice;

pub use calibrate::{
    calibrate_independent, default_hyperparameters, hpd_from_draws, hpd_intervals, read_determinations, spd, write_determinations, DensityGrid,
    Determination, HpdInterval, Hyperparameters, MadMode,
};
pub use curve::{CalibrationCurve, CurvePoint};
pub use dpmm::{run_chain, ChainConfig, DpmmState, PosteriorSamples, SamplerKind};
pub use error::{Error, Result};
pub use predictive::{cluster_count_posterior, predictive_density, PredictiveDensity};
pub use slice::{slice_sample, SliceConfig};
