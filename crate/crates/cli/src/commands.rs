use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use carbcal::calibrate::{
    map_estimates, COARSE_RESOLUTION, DEFAULT_ALPHA_PROP_SD, DEFAULT_INIT_CLUSTERS, DEFAULT_SLICE_MAX_STEPS,
    MIN_SLICE_WIDTH,
};
use carbcal::dpmm::write_samples;
use carbcal::predictive::{cluster_count_posterior, default_grid, predictive_density_with, PredictiveOptions};
use carbcal::simstudy::{run_study, StudyConfig};
use carbcal::{
    calibrate_independent, default_hyperparameters, hpd_from_draws, hpd_intervals, read_determinations, run_chain,
    spd, CalibrationCurve, ChainConfig, Determination, Error, Hyperparameters, PosteriorSamples,
};
use rayon::prelude::*;
use serde_json::json;

use crate::args::{CalibrateArgs, Cli, Command, Common, DpmmArgs, Override, SimulateArgs, SpdArgs};
use crate::output::{self, HpdRow, RunManifest};
use crate::UsageError;

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Calibrate(a) => calibrate(a),
        Command::Spd(a) => spd_cmd(a),
        Command::Dpmm(a) => dpmm(a),
        Command::Simulate(a) => simulate(a),
    }
}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn load_curve(common: &Common) -> Result<(CalibrationCurve, String)> {
    let path = common
        .curve
        .clone()
        .or_else(|| std::env::var_os("CARBCAL_CURVE").map(PathBuf::from));
    match path {
        Some(p) => Ok((CalibrationCurve::load(&p)?, p.display().to_string())),
        None => Ok((CalibrationCurve::intcal20(), "bundled:intcal20".into())),
    }
}

fn check_levels(levels: &[f64]) -> Result<()> {
    if levels.is_empty() {
        return Err(usage("at least one HPD level is required"));
    }
    match levels.iter().find(|l| !(**l > 0.0 && **l < 1.0)) {
        Some(l) => Err(usage(format!("HPD levels must lie in (0, 1), got {l}"))),
        None => Ok(()),
    }
}

fn check_resolution(r: f64) -> Result<()> {
    if r > 0.0 && r.is_finite() {
        Ok(())
    } else {
        Err(usage(format!("resolution must be positive, got {r}")))
    }
}

fn pool(jobs: Option<usize>) -> Result<rayon::ThreadPool> {
    if jobs == Some(0) {
        return Err(usage("--jobs must be at least 1"));
    }
    Ok(rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.unwrap_or(0))
        .build()?)
}

fn input_name(p: &Path) -> String {
    p.display().to_string()
}

fn calibrate(a: CalibrateArgs) -> Result<()> {
    check_levels(&a.levels)?;
    check_resolution(a.resolution)?;
    let (curve, curve_name) = load_curve(&a.common)?;
    let dets = read_determinations(&a.input)?;

    let out = output::prepare_out(a.common.out.as_deref(), "calibrate", 0, a.common.force)?;
    let mut manifest = RunManifest::new("calibrate", &out);
    manifest.inputs = vec![input_name(&a.input)];
    manifest.curve = curve_name;
    manifest.config = json!({ "resolution": a.resolution, "levels": a.levels });
    manifest.write(&out)?;

    let grids: Vec<_> = dets
        .par_iter()
        .map(|d| calibrate_independent(d, &curve, a.resolution))
        .collect::<carbcal::Result<_>>()?;
    let mut rows = Vec::new();
    for (i, (det, grid)) in dets.iter().zip(&grids).enumerate() {
        let path = out.join("posterior").join(format!("{}.csv", output::file_stem(i, &det.id)));
        output::write_text(&path, &output::grid_csv(grid))?;
        for &level in &a.levels {
            for interval in hpd_intervals(grid, level)? {
                rows.push(HpdRow {
                    id: &det.id,
                    level,
                    interval,
                });
            }
        }
    }
    output::write_text(&out.join("hpd.csv"), &output::hpd_csv(&rows))?;
    eprintln!("wrote {} posteriors to {}", dets.len(), out.display());
    Ok(())
}

fn spd_cmd(a: SpdArgs) -> Result<()> {
    check_resolution(a.resolution)?;
    let (curve, curve_name) = load_curve(&a.common)?;
    let dets = read_determinations(&a.input)?;

    let out = output::prepare_out(a.common.out.as_deref(), "spd", 0, a.common.force)?;
    let mut manifest = RunManifest::new("spd", &out);
    manifest.inputs = vec![input_name(&a.input)];
    manifest.curve = curve_name;
    manifest.config = json!({ "resolution": a.resolution });
    manifest.write(&out)?;

    let grid = spd(&dets, &curve, a.resolution)?;
    output::write_text(&out.join("spd.csv"), &output::grid_csv(&grid))?;
    eprintln!("wrote SPD of {} determinations to {}", dets.len(), out.display());
    Ok(())
}

/// Hyperparameters from `--hyper` alone, used when the data cannot supply
/// defaults (fewer than two determinations or no spread).
fn explicit_hyperparameters(overrides: &[Override]) -> Option<Hyperparameters> {
    let get = |k: &str| {
        overrides
            .iter()
            .rev()
            .find(|o| o.key == k)
            .and_then(|o| o.value.parse::<f64>().ok())
    };
    Some(Hyperparameters {
        lambda: get("lambda")?,
        nu1: get("nu1")?,
        nu2: get("nu2")?,
        xi: get("xi")?,
        psi: get("psi")?,
        eta1: 1.0,
        eta2: 1.0,
        slice_width: MIN_SLICE_WIDTH,
        slice_max_steps: DEFAULT_SLICE_MAX_STEPS,
        alpha_prop_sd: DEFAULT_ALPHA_PROP_SD,
        n_init_clusters: DEFAULT_INIT_CLUSTERS,
    })
}

fn resolve_hyper(dets: &[Determination], curve: &CalibrationCurve, overrides: &[Override]) -> Result<Hyperparameters> {
    let mut hyper = match default_hyperparameters(dets, curve) {
        Ok(h) => h,
        Err(e @ Error::DegenerateSpread(_)) => match explicit_hyperparameters(overrides) {
            Some(h) => h,
            None => {
                return Err(anyhow::Error::new(e).context("pass --hyper for lambda, nu1, nu2, xi and psi"));
            }
        },
        Err(e) => return Err(e.into()),
    };
    for o in overrides {
        hyper.set(&o.key, &o.value).map_err(|e| usage(e.to_string()))?;
    }
    hyper.validate().map_err(|e| usage(e.to_string()))?;
    Ok(hyper)
}

fn chain_seeds(seed: u64, chains: usize) -> Vec<u64> {
    (0..chains as u64).map(|k| seed.wrapping_add(k)).collect()
}

fn dpmm(a: DpmmArgs) -> Result<()> {
    check_levels(&a.levels)?;
    check_resolution(a.hpd_bin)?;
    if !(a.band > 0.0 && a.band < 1.0) {
        return Err(usage(format!("--band must lie in (0, 1), got {}", a.band)));
    }
    if a.chains == 0 {
        return Err(usage("--chains must be at least 1"));
    }
    let pool = pool(a.chain.jobs)?;
    let (curve, curve_name) = load_curve(&a.common)?;
    let dets = read_determinations(&a.input)?;
    let hyper = resolve_hyper(&dets, &curve, &a.chain.hyper)?;
    let cfg = ChainConfig::new(hyper)
        .iterations(a.iters, a.burn, a.thin)
        .sampler(a.sampler)
        .seed(a.chain.seed);
    cfg.validate().map_err(|e| usage(e.to_string()))?;
    let grid = default_grid(&map_estimates(&dets, &curve, COARSE_RESOLUTION)?, &curve)?;

    let out = output::prepare_out(a.common.out.as_deref(), "dpmm", a.chain.seed, a.common.force)?;
    let seeds = chain_seeds(a.chain.seed, a.chains);
    let mut manifest = RunManifest::new("dpmm", &out);
    manifest.inputs = vec![input_name(&a.input)];
    manifest.curve = curve_name;
    manifest.seed = Some(a.chain.seed);
    manifest.config = json!({
        "chain": cfg,
        "chains": a.chains,
        "chain_seeds": seeds,
        "band": a.band,
        "levels": a.levels,
        "hpd_bin": a.hpd_bin,
        "grid": { "lo": grid[0], "hi": grid[grid.len() - 1], "points": grid.len() },
    });
    manifest.write(&out)?;

    let results: Vec<PosteriorSamples> = pool.install(|| {
        seeds
            .par_iter()
            .map(|&s| run_chain(&dets, &curve, &cfg.clone().seed(s)))
            .collect::<carbcal::Result<_>>()
    })?;

    let opts = PredictiveOptions {
        level: a.band,
        keep_realisations: false,
    };
    for (k, samples) in results.iter().enumerate() {
        let suffix = if a.chains == 1 { String::new() } else { format!("_chain{}", k + 1) };
        write_samples(out.join(format!("samples{suffix}")), samples)?;
        let pred = pool.install(|| predictive_density_with(samples, &grid, &opts))?;
        output::write_text(&out.join(format!("predictive{suffix}.csv")), &output::predictive_csv(&pred))?;
        let counts = cluster_count_posterior(samples)?;
        output::write_text(&out.join(format!("clusters{suffix}.csv")), &output::clusters_csv(&counts))?;
        write_summaries(&out, &suffix, samples, &a.levels, a.hpd_bin)?;
        eprintln!(
            "chain {}: {} stored states, alpha acceptance {:.3}",
            k + 1,
            samples.len(),
            samples.alpha_acceptance
        );
    }
    eprintln!("wrote results to {}", out.display());
    Ok(())
}

fn write_summaries(out: &Path, suffix: &str, samples: &PosteriorSamples, levels: &[f64], bin: f64) -> Result<()> {
    use std::fmt::Write as _;
    let mut summary = String::from("id,mean,sd,median\n");
    let mut rows = Vec::new();
    for (i, id) in samples.ids.iter().enumerate() {
        let mut draws = samples.theta_draws(i);
        let n = draws.len() as f64;
        let mean = draws.iter().sum::<f64>() / n;
        let sd = (draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / n).sqrt();
        draws.sort_by(f64::total_cmp);
        let median = carbcal::math::quantile_sorted(&draws, 0.5);
        let _ = writeln!(summary, "{},{mean},{sd},{median}", output::csv_field(id));
        for &level in levels {
            for interval in hpd_from_draws(&draws, level, bin)? {
                rows.push(HpdRow { id, level, interval });
            }
        }
    }
    output::write_text(&out.join(format!("summary{suffix}.csv")), &summary)?;
    output::write_text(&out.join(format!("hpd{suffix}.csv")), &output::hpd_csv(&rows))
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let pool = pool(a.chain.jobs)?;
    let (curve, curve_name) = load_curve(&a.common)?;
    if a.n.iter().any(|&n| n < 2) {
        return Err(usage("--n values must be at least 2"));
    }
    let cfg = StudyConfig {
        families: a.family.clone(),
        n_values: a.n.clone(),
        n_runs: a.runs,
        samplers: a.sampler.clone(),
        n_iter: a.iters,
        n_burn: a.burn,
        thin: a.thin,
        seed: a.chain.seed,
        resolution: 1.0,
        overrides: a.chain.hyper.iter().map(|o| (o.key.clone(), o.value.clone())).collect(),
    };
    let probe = Hyperparameters {
        lambda: 1.0,
        nu1: 1.0,
        nu2: 1.0,
        xi: 0.0,
        psi: 1.0,
        eta1: 1.0,
        eta2: 1.0,
        slice_width: 1.0,
        slice_max_steps: 1,
        alpha_prop_sd: 1.0,
        n_init_clusters: 1,
    };
    ChainConfig::new(probe)
        .iterations(a.iters, a.burn, a.thin)
        .validate()
        .map_err(|e| usage(e.to_string()))?;
    if a.runs == 0 {
        return Err(usage("--runs must be at least 1"));
    }

    let out = output::prepare_out(a.common.out.as_deref(), "simulate", a.chain.seed, a.common.force)?;
    let mut manifest = RunManifest::new("simulate", &out);
    manifest.curve = curve_name;
    manifest.seed = Some(a.chain.seed);
    manifest.config = serde_json::to_value(&cfg)?;
    manifest.write(&out)?;

    let results = pool.install(|| run_study(&cfg, &curve)).context("simulation study")?;
    output::write_text(&out.join("table.csv"), &results.to_csv())?;
    output::write_json(&out.join("runs.json"), &results)?;
    for row in &results.rows {
        eprintln!(
            "{} n={} {}: l1 improved in {:.0}% of runs, mean {:.1}%",
            row.family,
            row.n,
            row.sampler,
            100.0 * row.l1.prop_improved,
            row.l1.mean
        );
    }
    eprintln!("wrote results to {}", out.display());
    Ok(())
}
