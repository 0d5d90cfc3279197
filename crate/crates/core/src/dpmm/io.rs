//! On-disk layout of a chain: `theta.csv`, `clusters.jsonl`, `config.json`
//! and `stats.json`.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::chain::{ChainConfig, PosteriorSamples, StoredState};
use crate::error::{Error, Result};

#[derive(Serialize, Deserialize)]
struct ChainStats {
    n_stored: usize,
    alpha_acceptance: f64,
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(|e| Error::io(path, e))
}

fn json_err(path: &Path, e: serde_json::Error) -> Error {
    Error::Format(format!("{}: {e}", path.display()))
}

pub fn write_samples(dir: impl AsRef<Path>, samples: &PosteriorSamples) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let path = dir.join("config.json");
    let mut out = create(&path)?;
    serde_json::to_writer_pretty(&mut out, &samples.config).map_err(|e| json_err(&path, e))?;
    writeln!(out).and_then(|_| out.flush()).map_err(|e| Error::io(&path, e))?;

    let path = dir.join("theta.csv");
    let mut w = csv::Writer::from_writer(create(&path)?);
    let csv_err = |e: csv::Error| Error::Format(format!("{}: {e}", path.display()));
    let mut header = vec!["iteration".to_string()];
    header.extend(samples.ids.iter().cloned());
    w.write_record(&header).map_err(csv_err)?;
    for s in &samples.states {
        let mut row = vec![s.iteration.to_string()];
        row.extend(s.theta.iter().map(|t| t.to_string()));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(|e| Error::io(&path, e))?;

    let path = dir.join("clusters.jsonl");
    let mut out = create(&path)?;
    for s in &samples.states {
        serde_json::to_writer(&mut out, s).map_err(|e| json_err(&path, e))?;
        writeln!(out).map_err(|e| Error::io(&path, e))?;
    }
    out.flush().map_err(|e| Error::io(&path, e))?;

    let path = dir.join("stats.json");
    let mut out = create(&path)?;
    let stats = ChainStats {
        n_stored: samples.states.len(),
        alpha_acceptance: samples.alpha_acceptance,
    };
    serde_json::to_writer_pretty(&mut out, &stats).map_err(|e| json_err(&path, e))?;
    writeln!(out).and_then(|_| out.flush()).map_err(|e| Error::io(&path, e))
}

pub fn read_samples(dir: impl AsRef<Path>) -> Result<PosteriorSamples> {
    let dir = dir.as_ref();
    let open = |name: &str| {
        let path = dir.join(name);
        File::open(&path).map(BufReader::new).map_err(|e| Error::io(&path, e))
    };

    let config: ChainConfig =
        serde_json::from_reader(open("config.json")?).map_err(|e| json_err(&dir.join("config.json"), e))?;
    let stats: ChainStats =
        serde_json::from_reader(open("stats.json")?).map_err(|e| json_err(&dir.join("stats.json"), e))?;

    let mut states = Vec::new();
    for (k, line) in open("clusters.jsonl")?.lines().enumerate() {
        let line = line.map_err(|e| Error::io(dir.join("clusters.jsonl"), e))?;
        if line.trim().is_empty() {
            continue;
        }
        let s: StoredState = serde_json::from_str(&line)
            .map_err(|e| Error::Format(format!("clusters.jsonl line {}: {e}", k + 1)))?;
        states.push(s);
    }

    let mut reader = csv::Reader::from_reader(open("theta.csv")?);
    let header = reader
        .headers()
        .map_err(|e| Error::Format(format!("theta.csv: {e}")))?
        .clone();
    if header.get(0) != Some("iteration") {
        return Err(Error::Format("theta.csv must start with an iteration column".into()));
    }
    let ids: Vec<String> = header.iter().skip(1).map(str::to_owned).collect();
    let mut rows = 0;
    for (k, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Format(format!("theta.csv: {e}")))?;
        let bad = |what: &str| Error::Format(format!("theta.csv row {}: {what}", k + 1));
        let state = states.get_mut(k).ok_or_else(|| bad("more rows than cluster records"))?;
        let iteration: usize = record[0].parse().map_err(|_| bad("bad iteration"))?;
        if iteration != state.iteration {
            return Err(bad("iteration differs from clusters.jsonl"));
        }
        state.theta = record
            .iter()
            .skip(1)
            .map(|v| v.parse::<f64>().map_err(|_| bad("bad age")))
            .collect::<Result<_>>()?;
        if state.theta.len() != ids.len() || state.labels.len() != ids.len() {
            return Err(bad("wrong number of ages"));
        }
        rows += 1;
    }
    if rows != states.len() || stats.n_stored != states.len() {
        return Err(Error::Format(format!(
            "{rows} age rows, {} cluster records, {} recorded",
            states.len(),
            stats.n_stored
        )));
    }
    Ok(PosteriorSamples {
        config,
        ids,
        states,
        alpha_acceptance: stats.alpha_acceptance,
    })
}
