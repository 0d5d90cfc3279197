//! Independent calibration of single determinations on a calendar grid,
//! highest posterior density regions, summed probability distributions, and
//! the data-adaptive default hyperparameters for the mixture model.

use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::curve::CalibrationCurve;
use crate::error::{Error, Result};
use crate::math::{self, normal_ln_pdf};

/// Default spacing of the coarse grid used for preliminary MAP ages.
pub const COARSE_RESOLUTION: f64 = 5.0;

/// One radiocarbon measurement.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Determination {
    pub id: String,
    /// Radiocarbon age (14C yr BP).
    pub x: f64,
    /// Laboratory standard deviation (14C yr).
    pub sigma: f64,
}

impl Determination {
    pub fn new(id: impl Into<String>, x: f64, sigma: f64) -> Result<Self> {
        let id = id.into();
        if !x.is_finite() {
            return Err(Error::InvalidParameter(format!("{id}: c14 age {x} is not finite")));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidParameter(format!("{id}: c14 sd must be positive, got {sigma}")));
        }
        Ok(Self { id, x, sigma })
    }
}

/// Reads determinations from a comma-separated file with header
/// `id,c14_age,c14_sig`.
pub fn read_determinations(path: impl AsRef<Path>) -> Result<Vec<Determination>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_determinations(file, &path.display().to_string())
}

pub fn parse_determinations<R: Read>(reader: R, source_name: &str) -> Result<Vec<Determination>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::parse(source_name, 1, e.to_string()))?
        .clone();
    let expected = ["id", "c14_age", "c14_sig"];
    if headers.len() < 3 || headers.iter().take(3).ne(expected) {
        return Err(Error::parse(
            source_name,
            1,
            format!("expected header id,c14_age,c14_sig, found {}", headers.iter().collect::<Vec<_>>().join(",")),
        ));
    }
    let mut out = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line() as usize);
            Error::parse(source_name, line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        let num = |k: usize| -> Result<f64> {
            let field = record.get(k).unwrap_or("");
            field
                .parse::<f64>()
                .map_err(|_| Error::parse(source_name, line, format!("not a number: {field:?}")))
        };
        let det = Determination::new(record.get(0).unwrap_or(""), num(1)?, num(2)?)
            .map_err(|e| Error::parse(source_name, line, e.to_string()))?;
        out.push(det);
    }
    if out.is_empty() {
        return Err(Error::EmptyInput(format!("{source_name}: no determinations")));
    }
    Ok(out)
}

/// Writes determinations in the format read by [`read_determinations`].
pub fn write_determinations(path: impl AsRef<Path>, dets: &[Determination]) -> Result<()> {
    let path = path.as_ref();
    let mut w = csv::Writer::from_path(path).map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
    let err = |e: csv::Error| Error::Format(format!("{}: {e}", path.display()));
    w.write_record(["id", "c14_age", "c14_sig"]).map_err(err)?;
    for d in dets {
        w.write_record([d.id.clone(), d.x.to_string(), d.sigma.to_string()])
            .map_err(err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Density of the measurement `det.x` given calendar age `theta`, with the
/// curve uncertainty marginalised: `N(x; m(theta), rho(theta)^2 + sigma^2)`.
pub fn likelihood(det: &Determination, curve: &CalibrationCurve, theta: f64) -> Result<f64> {
    Ok(ln_likelihood(det, curve, theta)?.exp())
}

pub fn ln_likelihood(det: &Determination, curve: &CalibrationCurve, theta: f64) -> Result<f64> {
    let p = curve.at(theta)?;
    Ok(normal_ln_pdf(det.x, p.mean, p.sd * p.sd + det.sigma * det.sigma))
}

#[inline]
pub(crate) fn ln_likelihood_unchecked(x: f64, sigma2: f64, curve: &CalibrationCurve, theta: f64) -> f64 {
    let p = curve.at_unchecked(theta);
    normal_ln_pdf(x, p.mean, p.sd * p.sd + sigma2)
}

/// A density tabulated on a uniform calendar-age grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityGrid {
    pub theta: Vec<f64>,
    pub density: Vec<f64>,
    pub resolution: f64,
}

impl DensityGrid {
    /// Uniform grid `lo, lo + resolution, ...` not exceeding `hi`.
    pub fn axis(lo: f64, hi: f64, resolution: f64) -> Result<Vec<f64>> {
        if !(resolution > 0.0) || !resolution.is_finite() {
            return Err(Error::InvalidParameter(format!("resolution must be positive, got {resolution}")));
        }
        if !(hi >= lo) {
            return Err(Error::InvalidParameter(format!("empty grid range [{lo}, {hi}]")));
        }
        let steps = ((hi - lo) / resolution + 1e-9).floor() as usize;
        Ok((0..=steps).map(|k| lo + k as f64 * resolution).collect())
    }

    /// Riemann mass `sum(density) * resolution`.
    pub fn mass(&self) -> f64 {
        self.density.iter().sum::<f64>() * self.resolution
    }

    pub fn normalize(&mut self) {
        let mass = self.mass();
        if mass > 0.0 {
            self.density.iter_mut().for_each(|d| *d /= mass);
        }
    }

    pub fn is_normalized(&self) -> bool {
        (self.mass() - 1.0).abs() <= 1e-6
    }

    pub fn mean(&self) -> f64 {
        self.theta
            .iter()
            .zip(&self.density)
            .map(|(t, d)| t * d)
            .sum::<f64>()
            * self.resolution
    }

    /// Mass of grid cells with `lo <= theta <= hi`.
    pub fn mass_between(&self, lo: f64, hi: f64) -> f64 {
        self.theta
            .iter()
            .zip(&self.density)
            .filter(|(t, _)| **t >= lo && **t <= hi)
            .map(|(_, d)| d)
            .sum::<f64>()
            * self.resolution
    }

    /// Number of local maxima (plateaus count once) above `floor` times the
    /// global maximum.
    pub fn count_modes(&self, floor: f64) -> usize {
        let max = self.density.iter().copied().fold(0.0, f64::max);
        let d = &self.density;
        let mut modes = 0;
        let mut k = 0;
        while k < d.len() {
            let mut end = k;
            while end + 1 < d.len() && d[end + 1] == d[k] {
                end += 1;
            }
            let left_lower = k == 0 || d[k - 1] < d[k];
            let right_lower = end + 1 == d.len() || d[end + 1] < d[k];
            if left_lower && right_lower && d[k] > floor * max {
                modes += 1;
            }
            k = end + 1;
        }
        modes
    }
}

/// Posterior of one determination under a uniform prior on the full curve
/// support.
pub fn calibrate_independent(
    det: &Determination,
    curve: &CalibrationCurve,
    resolution: f64,
) -> Result<DensityGrid> {
    let theta = DensityGrid::axis(curve.min_age(), curve.max_age(), resolution)?;
    calibrate_on_grid(det, curve, theta, resolution)
}

/// Posterior of one determination on a caller-supplied uniform grid.
pub fn calibrate_on_grid(
    det: &Determination,
    curve: &CalibrationCurve,
    theta: Vec<f64>,
    resolution: f64,
) -> Result<DensityGrid> {
    if let Some(&t) = theta.iter().find(|t| !curve.contains(**t)) {
        return Err(Error::OutOfRange {
            theta: t,
            lo: curve.min_age(),
            hi: curve.max_age(),
        });
    }
    let s2 = det.sigma * det.sigma;
    let ll: Vec<f64> = theta
        .iter()
        .map(|&t| ln_likelihood_unchecked(det.x, s2, curve, t))
        .collect();
    let max = ll.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut grid = DensityGrid {
        theta,
        density: ll.iter().map(|l| (l - max).exp()).collect(),
        resolution,
    };
    grid.normalize();
    Ok(grid)
}

/// One connected piece of a highest posterior density region.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct HpdInterval {
    pub lo: f64,
    pub hi: f64,
    pub mass: f64,
}

/// Highest posterior density region at probability `level`, as disjoint
/// intervals in ascending order.
///
/// Cells are taken in order of decreasing density (ties by ascending age)
/// until the enclosed mass reaches `level`; each interval runs from the first
/// to the last selected cell of a contiguous run.
pub fn hpd_intervals(grid: &DensityGrid, level: f64) -> Result<Vec<HpdInterval>> {
    if !(level > 0.0 && level < 1.0) {
        return Err(Error::InvalidParameter(format!("HPD level must be in (0, 1), got {level}")));
    }
    if !grid.is_normalized() {
        return Err(Error::Unnormalized { mass: grid.mass() });
    }
    let d = &grid.density;
    let mut order: Vec<usize> = (0..d.len()).collect();
    order.sort_by(|&a, &b| d[b].total_cmp(&d[a]).then(a.cmp(&b)));
    let mut selected = vec![false; d.len()];
    let mut mass = 0.0;
    for &k in &order {
        selected[k] = true;
        mass += d[k] * grid.resolution;
        if mass >= level {
            break;
        }
    }
    let mut out = Vec::new();
    let mut k = 0;
    while k < d.len() {
        if !selected[k] {
            k += 1;
            continue;
        }
        let start = k;
        let mut m = 0.0;
        while k < d.len() && selected[k] {
            m += d[k] * grid.resolution;
            k += 1;
        }
        out.push(HpdInterval {
            lo: grid.theta[start],
            hi: grid.theta[k - 1],
            mass: m,
        });
    }
    Ok(out)
}

/// Histogram of posterior draws as a normalised grid with cells of width
/// `resolution` aligned to multiples of it.
pub fn histogram_grid(draws: &[f64], resolution: f64) -> Result<DensityGrid> {
    if draws.is_empty() {
        return Err(Error::EmptyInput("no draws to summarise".into()));
    }
    if !(resolution > 0.0) || draws.iter().any(|d| !d.is_finite()) {
        return Err(Error::InvalidParameter("draws must be finite and resolution positive".into()));
    }
    let cell = |d: f64| (d / resolution).round();
    let lo = draws.iter().map(|&d| cell(d)).fold(f64::INFINITY, f64::min);
    let hi = draws.iter().map(|&d| cell(d)).fold(f64::NEG_INFINITY, f64::max);
    let len = (hi - lo) as usize + 1;
    let mut counts = vec![0usize; len];
    for &d in draws {
        counts[(cell(d) - lo) as usize] += 1;
    }
    let scale = 1.0 / (draws.len() as f64 * resolution);
    Ok(DensityGrid {
        theta: (0..len).map(|k| (lo + k as f64) * resolution).collect(),
        density: counts.into_iter().map(|c| c as f64 * scale).collect(),
        resolution,
    })
}

/// HPD region of a sample of draws via [`histogram_grid`].
pub fn hpd_from_draws(draws: &[f64], level: f64, resolution: f64) -> Result<Vec<HpdInterval>> {
    hpd_intervals(&histogram_grid(draws, resolution)?, level)
}

/// Summed probability distribution: the pointwise average of the
/// independent posteriors, renormalised.
pub fn spd(dets: &[Determination], curve: &CalibrationCurve, resolution: f64) -> Result<DensityGrid> {
    let theta = DensityGrid::axis(curve.min_age(), curve.max_age(), resolution)?;
    spd_on_grid(dets, curve, theta, resolution)
}

pub fn spd_on_grid(
    dets: &[Determination],
    curve: &CalibrationCurve,
    theta: Vec<f64>,
    resolution: f64,
) -> Result<DensityGrid> {
    if dets.is_empty() {
        return Err(Error::EmptyInput("SPD of an empty determination set".into()));
    }
    let mut acc = vec![0.0; theta.len()];
    for det in dets {
        let g = calibrate_on_grid(det, curve, theta.clone(), resolution)?;
        acc.iter_mut().zip(&g.density).for_each(|(a, d)| *a += d);
    }
    let n = dets.len() as f64;
    let mut grid = DensityGrid {
        theta,
        density: acc.into_iter().map(|a| a / n).collect(),
        resolution,
    };
    grid.normalize();
    Ok(grid)
}

/// Maximum-likelihood calendar age of each determination on a coarse grid
/// over the curve support. Ties go to the youngest (smallest) age.
pub fn map_estimates(
    dets: &[Determination],
    curve: &CalibrationCurve,
    coarse_resolution: f64,
) -> Result<Vec<f64>> {
    let axis = DensityGrid::axis(curve.min_age(), curve.max_age(), coarse_resolution)?;
    let points: Vec<_> = axis.iter().map(|&t| curve.at_unchecked(t)).collect();
    Ok(dets
        .iter()
        .map(|det| {
            let s2 = det.sigma * det.sigma;
            let mut best = (axis[0], f64::NEG_INFINITY);
            for (&t, p) in axis.iter().zip(&points) {
                let ll = normal_ln_pdf(det.x, p.mean, p.sd * p.sd + s2);
                if ll > best.1 {
                    best = (t, ll);
                }
            }
            best.0
        })
        .collect())
}

/// Spread statistic for the preliminary ages.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MadMode {
    /// Median absolute deviation from the median (unscaled).
    #[default]
    Median,
    /// Largest absolute deviation from the median.
    Maximum,
}

/// Fixed hyperparameters of the mixture model plus sampler tuning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    /// Scales the precision of a cluster mean around `mu_phi`.
    pub lambda: f64,
    /// Gamma shape of the cluster precision.
    pub nu1: f64,
    /// Gamma rate of the cluster precision.
    pub nu2: f64,
    /// Prior mean of `mu_phi`.
    pub xi: f64,
    /// Prior precision of `mu_phi`.
    pub psi: f64,
    /// Gamma shape of the concentration.
    pub eta1: f64,
    /// Gamma rate of the concentration.
    pub eta2: f64,
    /// Initial interval width for calendar-age slice updates.
    pub slice_width: f64,
    pub slice_max_steps: u32,
    /// Proposal sd of the concentration random walk.
    pub alpha_prop_sd: f64,
    pub n_init_clusters: usize,
}

impl Hyperparameters {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("lambda", self.lambda),
            ("nu1", self.nu1),
            ("nu2", self.nu2),
            ("psi", self.psi),
            ("eta1", self.eta1),
            ("eta2", self.eta2),
            ("slice_width", self.slice_width),
            ("alpha_prop_sd", self.alpha_prop_sd),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        if !self.xi.is_finite() {
            return Err(Error::InvalidParameter(format!("xi must be finite, got {}", self.xi)));
        }
        if self.slice_max_steps < 1 {
            return Err(Error::InvalidParameter("slice_max_steps must be at least 1".into()));
        }
        if self.n_init_clusters < 1 {
            return Err(Error::InvalidParameter("n_init_clusters must be at least 1".into()));
        }
        Ok(())
    }

    /// Sets one field by name, as used for `key=value` overrides.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let bad = || Error::InvalidParameter(format!("cannot parse {key}={value}"));
        let real = || value.trim().parse::<f64>().map_err(|_| bad());
        match key.trim() {
            "lambda" => self.lambda = real()?,
            "nu1" => self.nu1 = real()?,
            "nu2" => self.nu2 = real()?,
            "xi" => self.xi = real()?,
            "psi" => self.psi = real()?,
            "eta1" => self.eta1 = real()?,
            "eta2" => self.eta2 = real()?,
            "slice_width" => self.slice_width = real()?,
            "alpha_prop_sd" => self.alpha_prop_sd = real()?,
            "slice_max_steps" => self.slice_max_steps = value.trim().parse().map_err(|_| bad())?,
            "n_init_clusters" => self.n_init_clusters = value.trim().parse().map_err(|_| bad())?,
            other => {
                return Err(Error::InvalidParameter(format!(
                    "unknown hyperparameter {other:?}; expected one of {}",
                    Self::KEYS.join(", ")
                )))
            }
        }
        Ok(())
    }

    pub const KEYS: [&'static str; 11] = [
        "lambda",
        "nu1",
        "nu2",
        "xi",
        "psi",
        "eta1",
        "eta2",
        "slice_width",
        "slice_max_steps",
        "alpha_prop_sd",
        "n_init_clusters",
    ];
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperOptions {
    pub coarse_resolution: f64,
    pub mad_mode: MadMode,
}

impl Default for HyperOptions {
    fn default() -> Self {
        Self {
            coarse_resolution: COARSE_RESOLUTION,
            mad_mode: MadMode::Median,
        }
    }
}

pub const DEFAULT_NU1: f64 = 0.25;
pub const DEFAULT_SLICE_MAX_STEPS: u32 = 20;
pub const DEFAULT_ALPHA_PROP_SD: f64 = 1.0;
pub const DEFAULT_INIT_CLUSTERS: usize = 10;
pub const MIN_SLICE_WIDTH: f64 = 50.0;

/// Default hyperparameters adapted to the spread of preliminary MAP ages.
pub fn default_hyperparameters(dets: &[Determination], curve: &CalibrationCurve) -> Result<Hyperparameters> {
    default_hyperparameters_with(dets, curve, &HyperOptions::default())
}

pub fn default_hyperparameters_with(
    dets: &[Determination],
    curve: &CalibrationCurve,
    opts: &HyperOptions,
) -> Result<Hyperparameters> {
    if dets.len() < 2 {
        return Err(Error::DegenerateSpread(
            "default hyperparameters need at least two determinations".into(),
        ));
    }
    let map = map_estimates(dets, curve, opts.coarse_resolution)?;
    hyperparameters_from_ages(&map, opts.mad_mode)
}

/// The default-hyperparameter rules applied to given preliminary ages.
pub fn hyperparameters_from_ages(ages: &[f64], mad_mode: MadMode) -> Result<Hyperparameters> {
    let lo = ages.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = ages.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = hi - lo;
    if !(range > 0.0) {
        return Err(Error::DegenerateSpread(format!(
            "all preliminary calendar ages are identical ({lo} cal BP)"
        )));
    }
    let mad = match mad_mode {
        MadMode::Median => math::median_abs_deviation(ages),
        MadMode::Maximum => math::max_abs_deviation(ages),
    };
    if !(mad > 0.0) {
        return Err(Error::DegenerateSpread(
            "the absolute deviation of the preliminary calendar ages is zero".into(),
        ));
    }
    let nu1 = DEFAULT_NU1;
    Ok(Hyperparameters {
        lambda: (100.0 / range).powi(2),
        nu1,
        nu2: mad * mad * nu1 / 100.0,
        xi: math::median(ages),
        psi: 1.0 / (range * range),
        eta1: 1.0,
        eta2: 1.0,
        slice_width: (0.5 * math::interquartile_range(ages)).max(MIN_SLICE_WIDTH),
        slice_max_steps: DEFAULT_SLICE_MAX_STEPS,
        alpha_prop_sd: DEFAULT_ALPHA_PROP_SD,
        n_init_clusters: DEFAULT_INIT_CLUSTERS,
    })
}

/// Default fine-grid spacing for a span of calendar years.
pub fn fine_resolution(span: f64) -> f64 {
    if span <= 10_000.0 {
        1.0
    } else {
        5.0
    }
}
