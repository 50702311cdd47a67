//! Processed dataset: per-cell averages of median-filtered runs.
//!
//! Layout under the output directory:
//! `dataset.json` indexes the cells, `cells/<stem>.csv` holds each average.
//! The index keeps the source manifest and run files so per-seed statistics
//! can be recomputed later.

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use resilquant_core::numerics::{running_median, TimeSeries};
use resilquant_core::synth::{
    read_manifest, read_run_csv, write_run_csv, AttackKind, Cargo, ManifestEntry, Signal, Terrain, Truck,
};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

pub const DATASET_FILE: &str = "dataset.json";
pub const DEFAULT_MEDIAN_WINDOW_S: f64 = 72.0;

pub type Signals = BTreeMap<Signal, TimeSeries>;

/// A design cell without its seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CellKey {
    pub truck: Truck,
    pub terrain: Terrain,
    pub attack: AttackKind,
    #[serde(rename = "cargo_kg", with = "cargo_kg")]
    pub cargo: Cargo,
}

impl CellKey {
    pub fn stem(&self) -> String {
        format!("{}_{}_{}_{}", self.truck, self.terrain, self.attack, self.cargo)
    }

    /// The baseline cell this cell is compared against.
    pub fn baseline(&self) -> CellKey {
        CellKey {
            attack: AttackKind::Baseline,
            ..*self
        }
    }

    pub fn of(entry: &ManifestEntry) -> Result<CellKey> {
        Ok(CellKey {
            truck: entry.truck,
            terrain: entry.terrain,
            attack: entry.attack,
            cargo: Cargo::from_kg(entry.cargo_kg).with_context(|| format!("manifest entry {}", entry.file))?,
        })
    }
}

mod cargo_kg {
    use resilquant_core::synth::Cargo;
    use serde::{de::Error, Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(c: &Cargo, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(c.kg())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Cargo, D::Error> {
        Cargo::from_kg(f64::deserialize(d)?).map_err(D::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SourceRun {
    pub seed: u32,
    /// Relative to the source manifest's directory.
    pub file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProcessedCell {
    pub condition: CellKey,
    /// Averaged series, relative to the dataset directory.
    pub file: String,
    pub attack_start_s: Option<f64>,
    pub duration_s: f64,
    pub runs: Vec<SourceRun>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub median_window_s: f64,
    pub source_manifest: PathBuf,
    pub cells: Vec<ProcessedCell>,
}

/// A loaded dataset and the directory its paths are relative to.
#[derive(Debug, Clone)]
pub struct LoadedDataset {
    pub dir: PathBuf,
    pub index: Dataset,
}

impl LoadedDataset {
    /// Accepts the dataset directory or its `dataset.json`.
    pub fn open(path: &Path) -> Result<Self> {
        let file = if path.is_dir() { path.join(DATASET_FILE) } else { path.to_path_buf() };
        let text = fs::read_to_string(&file).with_context(|| format!("cannot read dataset {}", file.display()))?;
        let index: Dataset =
            serde_json::from_str(&text).with_context(|| format!("malformed dataset {}", file.display()))?;
        let dir = file.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(Self { dir, index })
    }

    pub fn cell(&self, key: &CellKey) -> Option<&ProcessedCell> {
        self.index.cells.iter().find(|c| c.condition == *key)
    }

    pub fn averaged(&self, cell: &ProcessedCell) -> Result<Signals> {
        let path = self.dir.join(&cell.file);
        read_run_csv(&path).with_context(|| format!("cell {}", cell.condition.stem()))
    }

    /// Median-filtered single runs keyed by seed, or `None` when the source
    /// files are gone.
    pub fn filtered_runs(&self, cell: &ProcessedCell) -> Result<Option<BTreeMap<u32, Signals>>> {
        let base = self.index.source_manifest.parent().unwrap_or(Path::new(""));
        if cell.runs.iter().any(|r| !base.join(&r.file).is_file()) {
            return Ok(None);
        }
        cell.runs
            .iter()
            .map(|r| {
                let path = base.join(&r.file);
                let raw = read_run_csv(&path)?;
                Ok((r.seed, filter_signals(&raw, self.index.median_window_s, &path)?))
            })
            .collect::<Result<_>>()
            .map(Some)
    }
}

fn filter_signals(raw: &Signals, window: f64, path: &Path) -> Result<Signals> {
    raw.iter()
        .map(|(&s, series)| {
            let f = running_median(series, window).with_context(|| format!("filtering {s} in {}", path.display()))?;
            Ok((s, f))
        })
        .collect()
}

/// Filters every run of a cell and averages across seeds.
fn process_cell(base: &Path, key: &CellKey, entries: &[&ManifestEntry], window: f64) -> Result<Signals> {
    let mut sum: Option<(Signals, &str)> = None;
    for e in entries {
        let path = base.join(&e.file);
        let filtered = filter_signals(&read_run_csv(&path)?, window, &path)?;
        match &mut sum {
            None => sum = Some((filtered, &e.file)),
            Some((acc, first)) => {
                let same = acc.len() == filtered.len()
                    && acc.iter().all(|(s, a)| filtered.get(s).is_some_and(|b| a.same_grid(b)));
                if !same {
                    bail!(
                        "grid mismatch in cell {}: {} and {} differ in signals or sampling",
                        key.stem(),
                        first,
                        e.file
                    );
                }
                for (s, a) in acc.iter_mut() {
                    *a = a.zip_with(&filtered[s], |x, y| x + y)?;
                }
            }
        }
    }
    let (acc, _) = sum.expect("cells are never empty");
    let n = entries.len() as f64;
    acc.into_iter().map(|(s, a)| Ok((s, a.map(|v| v / n)?))).collect()
}

/// Median-filters each run of the manifest and averages runs per cell.
pub fn preprocess(manifest: &Path, out_dir: &Path, median_window_s: f64) -> Result<Dataset> {
    if !(median_window_s.is_finite() && median_window_s > 0.0) {
        bail!("median window must be positive, got {median_window_s}");
    }
    let entries = read_manifest(manifest)?;
    if entries.is_empty() {
        bail!("manifest {} lists no runs", manifest.display());
    }
    let source_manifest = manifest
        .canonicalize()
        .with_context(|| format!("cannot resolve {}", manifest.display()))?;
    let base = source_manifest.parent().unwrap_or(Path::new("")).to_path_buf();

    let mut groups: BTreeMap<CellKey, Vec<&ManifestEntry>> = BTreeMap::new();
    for e in &entries {
        groups.entry(CellKey::of(e)?).or_default().push(e);
    }
    for (key, runs) in groups.iter_mut() {
        runs.sort_by_key(|e| e.seed);
        if let Some(w) = runs.windows(2).find(|w| w[0].seed == w[1].seed) {
            bail!("cell {} has seed {} twice ({} and {})", key.stem(), w[0].seed, w[0].file, w[1].file);
        }
        if let Some(e) = runs.iter().find(|e| e.attack_start_s != runs[0].attack_start_s) {
            bail!("cell {}: {} disagrees on the attack start with {}", key.stem(), e.file, runs[0].file);
        }
    }

    let cells_dir = out_dir.join("cells");
    fs::create_dir_all(&cells_dir).with_context(|| format!("cannot create {}", cells_dir.display()))?;
    let groups: Vec<_> = groups.into_iter().collect();
    let cells = groups
        .par_iter()
        .map(|(key, runs)| {
            let avg = process_cell(&base, key, runs, median_window_s)?;
            let file = format!("cells/{}.csv", key.stem());
            write_run_csv(&out_dir.join(&file), &avg)?;
            Ok(ProcessedCell {
                condition: *key,
                file,
                attack_start_s: runs[0].attack_start_s,
                duration_s: runs[0].duration_s,
                runs: runs
                    .iter()
                    .map(|e| SourceRun {
                        seed: e.seed,
                        file: e.file.clone(),
                    })
                    .collect(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let dataset = Dataset {
        median_window_s,
        source_manifest,
        cells,
    };
    let path = out_dir.join(DATASET_FILE);
    fs::write(&path, serde_json::to_string_pretty(&dataset)? + "\n")
        .with_context(|| format!("cannot write {}", path.display()))?;
    Ok(dataset)
}
