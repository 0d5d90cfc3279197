//! Simulation study: synthetic scenarios, calibration losses and the
//! improvement of joint DPMM calibration over independent calibration.

use std::fmt::Write as _;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Normal, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Beta, ContinuousCDF};

use crate::calibrate::{
    calibrate_independent, default_hyperparameters, DensityGrid, Determination, Hyperparameters,
};
use crate::curve::CalibrationCurve;
use crate::dpmm::{run_chain, ChainConfig, SamplerKind};
use crate::error::{Error, Result};
use crate::math::normal_pdf;

/// Laboratory measurement sd used for every synthetic determination.
pub const SIGMA_OBS: f64 = 25.0;

const MAX_ATTEMPTS: usize = 50_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    SingleNormal,
    ThreeNormal,
    Uniform,
}

impl Family {
    pub const ALL: [Family; 3] = [Family::SingleNormal, Family::ThreeNormal, Family::Uniform];

    /// Interval every generated calendar age must fall in.
    pub fn bounds(self) -> (f64, f64) {
        match self {
            Family::SingleNormal => (100.0, 49_500.0),
            Family::ThreeNormal | Family::Uniform => (100.0, 15_000.0),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Family::SingleNormal => "single_normal",
            Family::ThreeNormal => "three_normal",
            Family::Uniform => "uniform",
        }
    }
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| {
                Error::InvalidParameter(format!(
                    "unknown family {s:?}; expected one of single_normal, three_normal, uniform"
                ))
            })
    }
}

/// The calendar-age density behind a scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Truth {
    /// Finite normal mixture; `precisions` are `1 / sd^2`.
    Normals {
        weights: Vec<f64>,
        means: Vec<f64>,
        precisions: Vec<f64>,
    },
    Uniform { start: f64, length: f64 },
}

impl Truth {
    pub fn density(&self, theta: f64) -> f64 {
        match self {
            Truth::Normals {
                weights,
                means,
                precisions,
            } => weights
                .iter()
                .zip(means)
                .zip(precisions)
                .map(|((w, m), p)| w * normal_pdf(theta, *m, 1.0 / p))
                .sum(),
            Truth::Uniform { start, length } => {
                if theta >= *start && theta <= start + length {
                    1.0 / length
                } else {
                    0.0
                }
            }
        }
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            Truth::Normals {
                weights,
                means,
                precisions,
            } => {
                let mut u = rng.random::<f64>();
                let mut j = weights.len() - 1;
                for (k, w) in weights.iter().enumerate() {
                    if u < *w {
                        j = k;
                        break;
                    }
                    u -= w;
                }
                let z: f64 = rand_distr::StandardNormal.sample(rng);
                means[j] + z / precisions[j].sqrt()
            }
            Truth::Uniform { start, length } => start + length * rng.random::<f64>(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Scenario {
    pub family: Family,
    pub true_theta: Vec<f64>,
    #[serde(skip)]
    pub dets: Vec<Determination>,
    pub truth: Truth,
    /// Whole samples discarded for leaving the family bounds.
    pub rejected: usize,
}

impl Scenario {
    pub fn n(&self) -> usize {
        self.true_theta.len()
    }
}

fn draw_truth<R: Rng + ?Sized>(family: Family, rng: &mut R) -> Truth {
    // cluster precision ~ Gamma(shape 1, rate 1e4)
    let precision = Gamma::<f64>::new(1.0, 1e-4).expect("valid gamma");
    let phase = |centre: f64, tau: f64, rng: &mut R| {
        // centre ~ N(centre, 100 / tau^2)
        Normal::new(centre, 10.0 / tau).expect("finite normal").sample(rng)
    };
    match family {
        Family::SingleNormal => {
            let tau = precision.sample(rng).max(f64::MIN_POSITIVE);
            Truth::Normals {
                weights: vec![1.0],
                means: vec![phase(10_000.0, tau, rng)],
                precisions: vec![tau],
            }
        }
        Family::ThreeNormal => {
            let taus: Vec<f64> = (0..3).map(|_| precision.sample(rng).max(f64::MIN_POSITIVE)).collect();
            let means = taus.iter().map(|&t| phase(3_000.0, t, rng)).collect();
            // Dir(1, 1, 1) by normalised unit exponentials
            let e: Vec<f64> = (0..3).map(|_| rand_distr::Exp1.sample(rng)).collect::<Vec<f64>>();
            let total: f64 = e.iter().sum();
            Truth::Normals {
                weights: e.iter().map(|x| x / total).collect(),
                means,
                precisions: taus,
            }
        }
        Family::Uniform => Truth::Uniform {
            start: Uniform::new(100.0, 14_000.0).expect("valid range").sample(rng),
            length: Uniform::new(50.0, 1_000.0).expect("valid range").sample(rng),
        },
    }
}

/// Synthetic determinations `X ~ N(m(theta), SIGMA_OBS^2 + rho(theta)^2)`
/// at the given calendar ages.
pub fn synthesise<R: Rng + ?Sized>(
    theta: &[f64],
    curve: &CalibrationCurve,
    prefix: &str,
    rng: &mut R,
) -> Result<Vec<Determination>> {
    theta
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let p = curve.at(t)?;
            let sd = (SIGMA_OBS * SIGMA_OBS + p.sd * p.sd).sqrt();
            let z: f64 = rand_distr::StandardNormal.sample(rng);
            Determination::new(format!("{prefix}{}", i + 1), p.mean + sd * z, SIGMA_OBS)
        })
        .collect()
}

/// Draws a family member and `n` calendar ages from it, redrawing
/// everything whenever an age leaves the family bounds.
pub fn gen_scenario<R: Rng + ?Sized>(
    family: Family,
    n: usize,
    curve: &CalibrationCurve,
    rng: &mut R,
) -> Result<Scenario> {
    if n == 0 {
        return Err(Error::InvalidParameter("scenario size must be positive".into()));
    }
    let (lo, hi) = family.bounds();
    for rejected in 0..MAX_ATTEMPTS {
        let truth = draw_truth(family, rng);
        let mut theta = Vec::with_capacity(n);
        while theta.len() < n {
            let t = truth.sample(rng);
            if !(lo..=hi).contains(&t) {
                break;
            }
            theta.push(t);
        }
        if theta.len() < n {
            continue;
        }
        let dets = synthesise(&theta, curve, "sim", rng)?;
        return Ok(Scenario {
            family,
            true_theta: theta,
            dets,
            truth,
            rejected,
        });
    }
    Err(Error::InvalidParameter(format!(
        "no {family} scenario within bounds after {MAX_ATTEMPTS} attempts"
    )))
}

/// The three-phase mixture used for the density-reconstruction fixture.
pub fn three_phase_truth() -> Truth {
    Truth::Normals {
        weights: vec![0.1, 0.4, 0.5],
        means: vec![3500.0, 4200.0, 5000.0],
        precisions: vec![200.0f64.powi(-2), 100.0f64.powi(-2), 300.0f64.powi(-2)],
    }
}

pub const THREE_PHASE_SEED: u64 = 20_210_301;
pub const THREE_PHASE_N: usize = 100;

/// The bundled three-phase fixture: 100 ages from [`three_phase_truth`]
/// and their synthetic determinations, from a fixed seed. Each phase
/// contributes exactly its weight times 100 ages, in random order.
pub fn three_phase_fixture(curve: &CalibrationCurve) -> Result<Scenario> {
    let mut rng = ChaCha8Rng::seed_from_u64(THREE_PHASE_SEED);
    let truth = three_phase_truth();
    let Truth::Normals { weights, means, precisions } = &truth else {
        unreachable!()
    };
    let mut theta = Vec::with_capacity(THREE_PHASE_N);
    for ((w, m), p) in weights.iter().zip(means).zip(precisions) {
        let k = (w * THREE_PHASE_N as f64).round() as usize;
        let phase = Normal::new(*m, 1.0 / p.sqrt()).expect("finite normal");
        theta.extend((0..k).map(|_| phase.sample(&mut rng)));
    }
    rand::seq::SliceRandom::shuffle(theta.as_mut_slice(), &mut rng);
    let dets = synthesise(&theta, curve, "tp", &mut rng)?;
    Ok(Scenario {
        family: Family::ThreeNormal,
        true_theta: theta,
        dets,
        truth,
        rejected: 0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    L1,
    L2,
}

impl LossKind {
    fn of(self, d: f64) -> f64 {
        match self {
            LossKind::L1 => d.abs(),
            LossKind::L2 => d * d,
        }
    }
}

/// Posterior expected loss estimated from draws.
pub fn posterior_loss(draws: &[f64], truth: f64, kind: LossKind) -> Result<f64> {
    if draws.is_empty() {
        return Err(Error::EmptyInput("no posterior draws".into()));
    }
    Ok(draws.iter().map(|d| kind.of(d - truth)).sum::<f64>() / draws.len() as f64)
}

/// Posterior expected loss of a normalised grid posterior by quadrature.
pub fn grid_loss(grid: &DensityGrid, truth: f64, kind: LossKind) -> f64 {
    grid.theta
        .iter()
        .zip(&grid.density)
        .map(|(t, d)| kind.of(t - truth) * d)
        .sum::<f64>()
        * grid.resolution
}

/// The same expectation by sampling grid nodes with their cell masses.
pub fn grid_loss_monte_carlo<R: Rng + ?Sized>(
    grid: &DensityGrid,
    truth: f64,
    kind: LossKind,
    n_draws: usize,
    rng: &mut R,
) -> f64 {
    let mut cdf = Vec::with_capacity(grid.density.len());
    let mut acc = 0.0;
    for d in &grid.density {
        acc += d;
        cdf.push(acc);
    }
    (0..n_draws)
        .map(|_| {
            let u = rng.random::<f64>() * acc;
            let k = cdf.partition_point(|&c| c <= u).min(cdf.len() - 1);
            kind.of(grid.theta[k] - truth)
        })
        .sum::<f64>()
        / n_draws as f64
}

/// Percentage reduction in loss relative to independent calibration.
pub fn improvement(loss_np: f64, loss_indep: f64) -> Result<f64> {
    if !(loss_indep > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "independent loss must be positive, got {loss_indep}"
        )));
    }
    Ok(100.0 * (1.0 - loss_np / loss_indep))
}

/// Sd of the curve mean over the span of the true ages, at 1-year steps.
pub fn curve_variation(curve: &CalibrationCurve, theta: &[f64]) -> Result<f64> {
    let lo = theta.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = theta.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let axis = DensityGrid::axis(lo, hi, 1.0)?;
    let m: Vec<f64> = axis.iter().map(|&t| curve.at(t).map(|p| p.mean)).collect::<Result<_>>()?;
    let mean = m.iter().sum::<f64>() / m.len() as f64;
    Ok((m.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / m.len() as f64).sqrt())
}

/// Whether the curve is too flat over the truth's span to separate ages.
pub fn curve_is_flat(curve: &CalibrationCurve, theta: &[f64]) -> Result<bool> {
    Ok(curve_variation(curve, theta)? < 2.0 * SIGMA_OBS)
}

/// Exact two-sided Clopper-Pearson interval for `x` successes in `n`.
pub fn clopper_pearson(x: usize, n: usize, level: f64) -> (f64, f64) {
    let a = 0.5 * (1.0 - level);
    let (xf, nf) = (x as f64, n as f64);
    let lo = if x == 0 {
        0.0
    } else {
        Beta::new(xf, nf - xf + 1.0).expect("valid beta").inverse_cdf(a)
    };
    let hi = if x == n {
        1.0
    } else {
        Beta::new(xf + 1.0, nf - xf).expect("valid beta").inverse_cdf(1.0 - a)
    };
    (lo, hi)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyConfig {
    pub families: Vec<Family>,
    pub n_values: Vec<usize>,
    pub n_runs: usize,
    pub samplers: Vec<SamplerKind>,
    pub n_iter: usize,
    pub n_burn: usize,
    pub thin: usize,
    pub seed: u64,
    /// Grid spacing of the independent-calibration baseline.
    pub resolution: f64,
    /// `key=value` overrides applied to each run's default hyperparameters.
    pub overrides: Vec<(String, String)>,
}

impl Default for StudyConfig {
    fn default() -> Self {
        Self {
            families: vec![Family::SingleNormal],
            n_values: vec![50],
            n_runs: 10,
            samplers: vec![SamplerKind::Polya, SamplerKind::Walker],
            n_iter: 10_000,
            n_burn: 5_000,
            thin: 5,
            seed: 1,
            resolution: 1.0,
            overrides: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub family: Family,
    pub n: usize,
    pub run: usize,
    pub seed: u64,
    pub sampler: SamplerKind,
    pub l1_np: f64,
    pub l2_np: f64,
    pub l1_indep: f64,
    pub l2_indep: f64,
    pub l1_improvement: f64,
    pub l2_improvement: f64,
    pub flat_curve: bool,
    pub alpha_acceptance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImprovementSummary {
    /// Fraction of runs with positive improvement.
    pub prop_improved: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub mean: f64,
    pub max: f64,
    pub min: f64,
}

impl ImprovementSummary {
    fn of(values: &[f64]) -> Self {
        let improved = values.iter().filter(|v| **v > 0.0).count();
        let (ci_lo, ci_hi) = clopper_pearson(improved, values.len(), 0.95);
        Self {
            prop_improved: improved as f64 / values.len() as f64,
            ci_lo,
            ci_hi,
            mean: values.iter().sum::<f64>() / values.len() as f64,
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRow {
    pub family: Family,
    pub n: usize,
    pub sampler: SamplerKind,
    pub runs: usize,
    pub flagged_flat: usize,
    pub l1: ImprovementSummary,
    pub l2: ImprovementSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyResults {
    pub config: StudyConfig,
    pub rows: Vec<StudyRow>,
    pub runs: Vec<RunRecord>,
}

/// Seed of run `run` derived from the master seed.
pub fn run_seed(master: u64, run: usize) -> u64 {
    master ^ run as u64
}

/// One scenario scored under every requested sampler.
pub fn run_one(
    family: Family,
    n: usize,
    run: usize,
    cfg: &StudyConfig,
    curve: &CalibrationCurve,
) -> Result<Vec<RunRecord>> {
    let seed = run_seed(cfg.seed, run);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scenario = gen_scenario(family, n, curve, &mut rng)?;
    let chain_seed = rng.next_u64();
    let hyper = study_hyperparameters(&scenario.dets, curve, &cfg.overrides)?;
    let flat = curve_is_flat(curve, &scenario.true_theta)?;

    let (mut l1_indep, mut l2_indep) = (0.0, 0.0);
    for (det, &t) in scenario.dets.iter().zip(&scenario.true_theta) {
        let grid = calibrate_independent(det, curve, cfg.resolution)?;
        l1_indep += grid_loss(&grid, t, LossKind::L1);
        l2_indep += grid_loss(&grid, t, LossKind::L2);
    }
    let nf = n as f64;
    l1_indep /= nf;
    l2_indep /= nf;

    cfg.samplers
        .iter()
        .map(|&sampler| {
            let chain = ChainConfig::new(hyper.clone())
                .iterations(cfg.n_iter, cfg.n_burn, cfg.thin)
                .sampler(sampler)
                .seed(chain_seed);
            let samples = run_chain(&scenario.dets, curve, &chain)?;
            let (mut l1, mut l2) = (0.0, 0.0);
            for (i, &t) in scenario.true_theta.iter().enumerate() {
                let draws = samples.theta_draws(i);
                l1 += posterior_loss(&draws, t, LossKind::L1)?;
                l2 += posterior_loss(&draws, t, LossKind::L2)?;
            }
            let (l1, l2) = (l1 / nf, l2 / nf);
            Ok(RunRecord {
                family,
                n,
                run,
                seed,
                sampler,
                l1_np: l1,
                l2_np: l2,
                l1_indep,
                l2_indep,
                l1_improvement: improvement(l1, l1_indep)?,
                l2_improvement: improvement(l2, l2_indep)?,
                flat_curve: flat,
                alpha_acceptance: samples.alpha_acceptance,
            })
        })
        .collect()
}

fn study_hyperparameters(
    dets: &[Determination],
    curve: &CalibrationCurve,
    overrides: &[(String, String)],
) -> Result<Hyperparameters> {
    let mut h = default_hyperparameters(dets, curve)?;
    for (k, v) in overrides {
        h.set(k, v)?;
    }
    h.validate()?;
    Ok(h)
}

/// Runs every (family, n, run) combination in parallel on the current
/// rayon pool and summarises them per sampler.
pub fn run_study(cfg: &StudyConfig, curve: &CalibrationCurve) -> Result<StudyResults> {
    if cfg.n_runs == 0 || cfg.families.is_empty() || cfg.n_values.is_empty() || cfg.samplers.is_empty() {
        return Err(Error::InvalidParameter("study needs at least one family, size, run and sampler".into()));
    }
    let tasks: Vec<(Family, usize, usize)> = cfg
        .families
        .iter()
        .flat_map(|&f| {
            cfg.n_values
                .iter()
                .flat_map(move |&n| (0..cfg.n_runs).map(move |r| (f, n, r)))
        })
        .collect();
    let per_task: Vec<Vec<RunRecord>> = tasks
        .par_iter()
        .map(|&(f, n, r)| run_one(f, n, r, cfg, curve))
        .collect::<Result<_>>()?;
    let runs: Vec<RunRecord> = per_task.into_iter().flatten().collect();

    let mut rows = Vec::new();
    for &family in &cfg.families {
        for &n in &cfg.n_values {
            for &sampler in &cfg.samplers {
                let sel: Vec<&RunRecord> = runs
                    .iter()
                    .filter(|r| r.family == family && r.n == n && r.sampler == sampler)
                    .collect();
                let l1: Vec<f64> = sel.iter().map(|r| r.l1_improvement).collect();
                let l2: Vec<f64> = sel.iter().map(|r| r.l2_improvement).collect();
                rows.push(StudyRow {
                    family,
                    n,
                    sampler,
                    runs: sel.len(),
                    flagged_flat: sel.iter().filter(|r| r.flat_curve).count(),
                    l1: ImprovementSummary::of(&l1),
                    l2: ImprovementSummary::of(&l2),
                });
            }
        }
    }
    Ok(StudyResults {
        config: cfg.clone(),
        rows,
        runs,
    })
}

impl StudyResults {
    /// Wide table with one line per (family, n) and a block of columns per
    /// sampler and loss: proportion improved with its 95% interval, then the
    /// mean, max and min percentage improvement.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("family,n,runs");
        for s in &self.config.samplers {
            for loss in ["l1", "l2"] {
                for col in ["prop_improved", "prop_ci_lo", "prop_ci_hi", "mean", "max", "min"] {
                    let _ = write!(out, ",{s}_{loss}_{col}");
                }
            }
            let _ = write!(out, ",{s}_flat_runs");
        }
        out.push('\n');
        for &family in &self.config.families {
            for &n in &self.config.n_values {
                let mut line = format!("{family},{n},{}", self.config.n_runs);
                for &s in &self.config.samplers {
                    let row = self
                        .rows
                        .iter()
                        .find(|r| r.family == family && r.n == n && r.sampler == s)
                        .expect("row for every combination");
                    for m in [&row.l1, &row.l2] {
                        let _ = write!(
                            line,
                            ",{},{},{},{},{},{}",
                            m.prop_improved, m.ci_lo, m.ci_hi, m.mean, m.max, m.min
                        );
                    }
                    let _ = write!(line, ",{}", row.flagged_flat);
                }
                out.push_str(&line);
                out.push('\n');
            }
        }
        out
    }
}
