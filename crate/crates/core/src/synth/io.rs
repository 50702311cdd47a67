use super::{generate_run, AttackKind, Condition, RunRecord, Signal, SynthConfig, Terrain, Truck};
use crate::error::{Error, Result};
use crate::numerics::TimeSeries;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

/// One run file and its condition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    /// Path relative to the manifest's directory.
    pub file: String,
    pub truck: Truck,
    pub terrain: Terrain,
    pub attack: AttackKind,
    pub cargo_kg: f64,
    pub seed: u32,
    pub attack_start_s: Option<f64>,
    pub duration_s: f64,
    #[serde(default)]
    pub synthetic: bool,
}

impl ManifestEntry {
    pub fn condition(&self) -> Result<Condition> {
        Ok(Condition {
            truck: self.truck,
            terrain: self.terrain,
            attack: self.attack,
            cargo: super::Cargo::from_kg(self.cargo_kg)?,
            seed: self.seed,
        })
    }
}

/// Writes `time_s` plus one column per signal, in full precision.
pub fn write_run_csv(path: &Path, signals: &BTreeMap<Signal, TimeSeries>) -> Result<()> {
    let first = signals
        .values()
        .next()
        .ok_or_else(|| Error::InvalidArgument("run has no signals".into()))?;
    if let Some((name, _)) = signals.iter().find(|(_, s)| !s.same_grid(first)) {
        return Err(Error::Alignment(format!("signal {name} is on a different grid")));
    }
    let io_err = |e: csv::Error| match e.into_kind() {
        csv::ErrorKind::Io(e) => Error::io(path, e),
        other => Error::Format {
            path: path.to_path_buf(),
            message: format!("{other:?}"),
        },
    };
    let mut w = csv::Writer::from_path(path).map_err(io_err)?;
    let mut header = vec!["time_s".to_string()];
    header.extend(signals.keys().map(|s| s.label().to_string()));
    w.write_record(&header).map_err(io_err)?;
    let columns: Vec<&[f64]> = signals.values().map(|s| s.values()).collect();
    let mut row = Vec::with_capacity(header.len());
    for k in 0..first.len() {
        row.clear();
        row.push(first.time(k).to_string());
        row.extend(columns.iter().map(|c| c[k].to_string()));
        w.write_record(&row).map_err(io_err)?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a run file written by [`write_run_csv`]. Times must be uniform.
pub fn read_run_csv(path: &Path) -> Result<BTreeMap<Signal, TimeSeries>> {
    let bad = |message: String| Error::Format {
        path: path.to_path_buf(),
        message,
    };
    let csv_err = |e: csv::Error| match e.into_kind() {
        csv::ErrorKind::Io(e) => Error::io(path, e),
        other => bad(format!("{other:?}")),
    };
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    let header = r.headers().map_err(csv_err)?.clone();
    if header.get(0) != Some("time_s") {
        return Err(bad("first column must be time_s".into()));
    }
    let signals = header
        .iter()
        .skip(1)
        .map(|h| h.parse::<Signal>().map_err(|_| bad(format!("unknown column {h:?}"))))
        .collect::<Result<Vec<_>>>()?;
    let mut times = Vec::new();
    let mut columns = vec![Vec::new(); signals.len()];
    for (line, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let parse = |i: usize| -> Result<f64> {
            rec.get(i)
                .and_then(|v| v.parse::<f64>().ok())
                .ok_or_else(|| bad(format!("row {}: bad value in column {}", line + 2, i + 1)))
        };
        times.push(parse(0)?);
        for (j, col) in columns.iter_mut().enumerate() {
            col.push(parse(j + 1)?);
        }
    }
    if times.len() < 2 {
        return Err(bad(format!("{} rows, need at least 2", times.len())));
    }
    let t0 = times[0];
    let dt = (times[times.len() - 1] - t0) / (times.len() - 1) as f64;
    if let Some(k) = times
        .iter()
        .enumerate()
        .position(|(k, &t)| (t - (t0 + k as f64 * dt)).abs() > 1e-6 * dt.abs().max(1e-12) + 1e-9 * t.abs())
    {
        return Err(bad(format!("time column is not uniform at row {}", k + 2)));
    }
    signals
        .into_iter()
        .zip(columns)
        .map(|(s, values)| {
            TimeSeries::new(t0, dt, values)
                .map(|series| (s, series))
                .map_err(|e| bad(e.to_string()))
        })
        .collect()
}

pub fn write_manifest(path: &Path, entries: &[ManifestEntry]) -> Result<()> {
    let text = serde_json::to_string_pretty(entries).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Format {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

fn entry_for(run: &RunRecord, file: String) -> ManifestEntry {
    let c = run.condition;
    ManifestEntry {
        file,
        truck: c.truck,
        terrain: c.terrain,
        attack: c.attack,
        cargo_kg: c.cargo.kg(),
        seed: c.seed,
        attack_start_s: run.attack_start,
        duration_s: run.duration,
        synthetic: true,
    }
}

/// Generates every cell of the design into `out_dir/runs/` and writes
/// `out_dir/manifest.json`. Cells run on the current rayon pool.
pub fn generate_grid(config: &SynthConfig, out_dir: &Path) -> Result<Vec<ManifestEntry>> {
    config.validate()?;
    if config.design.is_empty() {
        return Err(Error::InvalidArgument("empty design".into()));
    }
    let runs_dir: PathBuf = out_dir.join("runs");
    fs::create_dir_all(&runs_dir).map_err(|e| Error::io(&runs_dir, e))?;
    let entries = config
        .design
        .cells()
        .par_iter()
        .map(|c| {
            let run = generate_run(c, config)?;
            let name = format!("{}.csv", c.stem());
            write_run_csv(&runs_dir.join(&name), &run.signals)?;
            Ok(entry_for(&run, format!("runs/{name}")))
        })
        .collect::<Result<Vec<_>>>()?;
    write_manifest(&out_dir.join("manifest.json"), &entries)?;
    Ok(entries)
}
