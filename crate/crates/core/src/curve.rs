//! Radiocarbon calibration curves.
//!
//! A curve is a table of calendar ages (cal yr BP) with the pointwise
//! posterior mean and standard deviation of the radiocarbon age at each
//! knot. Between knots both columns are interpolated linearly; nothing is
//! extrapolated beyond the first or last knot.

use std::path::Path;

use crate::error::{Error, Result};

const INTCAL20: &str = include_str!("../data/intcal20.14c");

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationCurve {
    cal_age: Vec<f64>,
    c14_mean: Vec<f64>,
    c14_sd: Vec<f64>,
}

/// Curve mean and sd at one calendar age.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub mean: f64,
    pub sd: f64,
}

impl CalibrationCurve {
    /// Builds a curve from columns already in memory. Knots may be given in
    /// either ascending or descending calendar order.
    pub fn new(cal_age: Vec<f64>, c14_mean: Vec<f64>, c14_sd: Vec<f64>) -> Result<Self> {
        let lines: Vec<usize> = (1..=cal_age.len()).collect();
        Self::from_rows(cal_age, c14_mean, c14_sd, &lines, "curve")
    }

    /// The IntCal20 Northern Hemisphere atmospheric curve (0-55000 cal BP).
    pub fn intcal20() -> Self {
        Self::parse(INTCAL20, "intcal20.14c").expect("bundled IntCal20 table is valid")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    /// Parses the comma-separated `.14c` layout: `#` comment lines, then rows
    /// of `CAL BP, 14C age, Sigma[, Delta 14C, Sigma]`.
    pub fn parse(text: &str, source_name: &str) -> Result<Self> {
        let mut cal = Vec::new();
        let mut mean = Vec::new();
        let mut sd = Vec::new();
        let mut lines = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            if fields.len() < 3 {
                return Err(Error::parse(
                    source_name,
                    line_no,
                    format!("expected at least 3 columns, found {}", fields.len()),
                ));
            }
            let mut vals = [0.0; 3];
            for (slot, field) in vals.iter_mut().zip(&fields) {
                *slot = field
                    .parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| {
                        Error::parse(source_name, line_no, format!("not a number: {field:?}"))
                    })?;
            }
            cal.push(vals[0]);
            mean.push(vals[1]);
            sd.push(vals[2]);
            lines.push(line_no);
        }
        Self::from_rows(cal, mean, sd, &lines, source_name)
    }

    fn from_rows(
        mut cal: Vec<f64>,
        mut mean: Vec<f64>,
        mut sd: Vec<f64>,
        lines: &[usize],
        source_name: &str,
    ) -> Result<Self> {
        if cal.len() != mean.len() || cal.len() != sd.len() {
            return Err(Error::InvalidParameter(
                "curve columns differ in length".into(),
            ));
        }
        if cal.len() < 2 {
            return Err(Error::parse(
                source_name,
                lines.last().copied().unwrap_or(0),
                "a curve needs at least two knots",
            ));
        }
        for (k, &s) in sd.iter().enumerate() {
            if !(s > 0.0) {
                return Err(Error::parse(
                    source_name,
                    lines[k],
                    format!("curve sd must be positive, found {s}"),
                ));
            }
        }
        let mut lines = lines.to_vec();
        if cal[0] > cal[cal.len() - 1] {
            cal.reverse();
            mean.reverse();
            sd.reverse();
            lines.reverse();
        }
        for k in 1..cal.len() {
            if cal[k] == cal[k - 1] {
                return Err(Error::parse(
                    source_name,
                    lines[k],
                    format!("duplicate calendar age {}", cal[k]),
                ));
            }
            if cal[k] < cal[k - 1] {
                return Err(Error::parse(
                    source_name,
                    lines[k],
                    format!("calendar ages are not monotone at {}", cal[k]),
                ));
            }
        }
        Ok(Self {
            cal_age: cal,
            c14_mean: mean,
            c14_sd: sd,
        })
    }

    pub fn len(&self) -> usize {
        self.cal_age.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cal_age.is_empty()
    }

    pub fn cal_age(&self) -> &[f64] {
        &self.cal_age
    }

    pub fn c14_mean(&self) -> &[f64] {
        &self.c14_mean
    }

    pub fn c14_sd(&self) -> &[f64] {
        &self.c14_sd
    }

    pub fn min_age(&self) -> f64 {
        self.cal_age[0]
    }

    pub fn max_age(&self) -> f64 {
        self.cal_age[self.cal_age.len() - 1]
    }

    /// `(min_age, max_age)`.
    pub fn support(&self) -> (f64, f64) {
        (self.min_age(), self.max_age())
    }

    pub fn contains(&self, theta: f64) -> bool {
        theta >= self.min_age() && theta <= self.max_age()
    }

    /// Linearly interpolated curve mean and sd at `theta`.
    pub fn at(&self, theta: f64) -> Result<CurvePoint> {
        if !self.contains(theta) {
            return Err(Error::OutOfRange {
                theta,
                lo: self.min_age(),
                hi: self.max_age(),
            });
        }
        Ok(self.at_unchecked(theta))
    }

    /// As [`at`](Self::at) without the support check; `theta` must lie in
    /// the support.
    #[inline]
    pub(crate) fn at_unchecked(&self, theta: f64) -> CurvePoint {
        let ages = &self.cal_age;
        // index of the first knot strictly above theta
        let upper = ages.partition_point(|&a| a <= theta);
        if upper == 0 {
            return self.knot(0);
        }
        if upper >= ages.len() {
            return self.knot(ages.len() - 1);
        }
        let lo = upper - 1;
        let t = (theta - ages[lo]) / (ages[upper] - ages[lo]);
        if t == 0.0 {
            return self.knot(lo);
        }
        CurvePoint {
            mean: self.c14_mean[lo] + t * (self.c14_mean[upper] - self.c14_mean[lo]),
            sd: self.c14_sd[lo] + t * (self.c14_sd[upper] - self.c14_sd[lo]),
        }
    }

    fn knot(&self, k: usize) -> CurvePoint {
        CurvePoint {
            mean: self.c14_mean[k],
            sd: self.c14_sd[k],
        }
    }
}
