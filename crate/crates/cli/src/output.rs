use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use carbcal::predictive::PredictiveDensity;
use carbcal::{DensityGrid, HpdInterval};
use serde::Serialize;

use crate::UsageError;

/// Everything needed to rerun a command.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub subcommand: &'static str,
    pub inputs: Vec<String>,
    pub curve: String,
    pub seed: Option<u64>,
    pub output_dir: String,
    pub config: serde_json::Value,
}

impl RunManifest {
    pub fn new(subcommand: &'static str, out: &Path) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            subcommand,
            inputs: Vec::new(),
            curve: String::new(),
            seed: None,
            output_dir: out.display().to_string(),
            config: serde_json::Value::Null,
        }
    }

    pub fn write(&self, out: &Path) -> Result<()> {
        write_json(&out.join("manifest.json"), self)
    }
}

fn seed_tag(seed: u64) -> u32 {
    // splitmix64 finaliser
    let mut z = seed.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    ((z ^ (z >> 31)) & 0xff_ffff) as u32
}

/// Resolves and creates the output directory. An explicit directory that
/// already holds files is refused unless `force` is set.
pub fn prepare_out(out: Option<&Path>, subcommand: &str, seed: u64, force: bool) -> Result<PathBuf> {
    let dir = match out {
        Some(p) => p.to_path_buf(),
        None => {
            let secs = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
            PathBuf::from(format!("carbcal-{subcommand}-{secs}-{:06x}", seed_tag(seed)))
        }
    };
    let occupied = std::fs::read_dir(&dir).map(|mut d| d.next().is_some()).unwrap_or(false);
    if occupied && !force {
        return Err(UsageError(format!(
            "output directory {} is not empty; pass --force to overwrite",
            dir.display()
        ))
        .into());
    }
    if dir.exists() && !dir.is_dir() {
        return Err(UsageError(format!("{} exists and is not a directory", dir.display())).into());
    }
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

/// File-name-safe form of a determination id, prefixed by its position.
pub fn file_stem(index: usize, id: &str) -> String {
    let clean: String = id
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || "._-".contains(c) { c } else { '_' })
        .collect();
    format!("{:04}_{clean}", index + 1)
}

/// Grid rows `cal_age,density`, dropping the all-zero tails.
pub fn grid_csv(grid: &DensityGrid) -> String {
    let first = grid.density.iter().position(|d| *d > 0.0).unwrap_or(0);
    let last = grid.density.iter().rposition(|d| *d > 0.0).unwrap_or(0);
    let mut s = String::from("cal_age,density\n");
    for k in first..=last.max(first) {
        let _ = writeln!(s, "{},{}", grid.theta[k], grid.density[k]);
    }
    s
}

pub struct HpdRow<'a> {
    pub id: &'a str,
    pub level: f64,
    pub interval: HpdInterval,
}

pub fn hpd_csv(rows: &[HpdRow]) -> String {
    let mut s = String::from("id,level,lo,hi,mass\n");
    for r in rows {
        let i = r.interval;
        let _ = writeln!(s, "{},{},{},{},{}", csv_field(r.id), r.level, i.lo, i.hi, i.mass);
    }
    s
}

pub fn predictive_csv(p: &PredictiveDensity) -> String {
    let mut s = String::from("cal_age,mean,lo,hi\n");
    for k in 0..p.theta.len() {
        let _ = writeln!(s, "{},{},{},{}", p.theta[k], p.mean[k], p.lower[k], p.upper[k]);
    }
    s
}

pub fn clusters_csv(post: &[(usize, f64)]) -> String {
    let mut s = String::from("k,probability\n");
    for (k, p) in post {
        let _ = writeln!(s, "{k},{p}");
    }
    s
}

pub fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_owned()
    }
}
