//! The five pipeline steps. Each returns its result and writes its files;
//! the binary only parses flags and reports errors.

use crate::config::load_config;
use crate::dataset::{self, CellKey, Dataset, LoadedDataset, ProcessedCell, Signals};
use crate::report::{write_tables, Preprocessing, ReportEntry, ResilienceReport, REPORT_FILE};
use anyhow::{anyhow, bail, Context, Result};
use rayon::prelude::*;
use resilquant_core::fitting::{fit_ratio_curve, FitOptions, PiecewiseConstantFit};
use resilquant_core::metrics::{
    auc, bootstrap_statistic, ratio_curve, resilience_r, weighted_resilience, ResilienceValue, UtilityWeights, Window,
};
use resilquant_core::numerics::{neumaier_sum, TimeSeries};
use resilquant_core::synth::{generate_grid, AttackKind, ManifestEntry, Signal};
use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

/// Runs `f` on a pool of `jobs` workers; 0 picks one per core.
pub fn with_jobs<T: Send>(jobs: usize, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new().num_threads(jobs).build()?;
    pool.install(f)
}

pub fn simulate(config: &Path, out: &Path) -> Result<Vec<ManifestEntry>> {
    let config = load_config(config)?;
    Ok(generate_grid(&config, out).with_context(|| format!("generating into {}", out.display()))?)
}

pub fn preprocess(manifest: &Path, out: &Path, median_window_s: f64) -> Result<Dataset> {
    dataset::preprocess(manifest, out, median_window_s)
}

#[derive(Debug, Clone)]
pub struct AnalysisOptions {
    /// Defaults to the whole run.
    pub window: Option<(f64, f64)>,
    pub weights: Option<UtilityWeights>,
    pub confidence: f64,
    pub resamples: usize,
    pub seed: u64,
    pub refine: bool,
}

impl Default for AnalysisOptions {
    fn default() -> Self {
        Self {
            window: None,
            weights: None,
            confidence: 0.95,
            resamples: 2000,
            seed: 0,
            refine: false,
        }
    }
}

/// Parses `name=weight,name=weight`.
pub fn parse_weights(spec: &str) -> Result<UtilityWeights> {
    let entries = spec
        .split(',')
        .map(|part| {
            let (name, w) = part
                .split_once('=')
                .ok_or_else(|| anyhow!("weight {part:?} is not name=value"))?;
            let name = name.trim();
            name.parse::<Signal>()?;
            let w: f64 = w.trim().parse().with_context(|| format!("weight for {name}"))?;
            Ok((name.to_string(), w))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(UtilityWeights::new(entries)?)
}

/// What a cell contributes to the pairing stage.
struct CellStats<'a> {
    cell: &'a ProcessedCell,
    averaged: Signals,
    window: Window,
    /// Per-seed AUC of each filtered run over `window`.
    seed_auc: Option<BTreeMap<u32, BTreeMap<Signal, f64>>>,
}

fn span(signals: &Signals) -> Result<(f64, f64)> {
    let s = signals.values().next().ok_or_else(|| anyhow!("no signals"))?;
    Ok((s.t0(), s.end()))
}

fn cell_stats<'a>(ds: &LoadedDataset, cell: &'a ProcessedCell, opts: &AnalysisOptions) -> Result<CellStats<'a>> {
    let stem = cell.condition.stem();
    let averaged = ds.averaged(cell)?;
    let (t0, t_end) = match opts.window {
        Some(w) => w,
        None => span(&averaged).with_context(|| format!("cell {stem}"))?,
    };
    let window = Window::new(t0, t_end)?;
    let seed_auc = ds
        .filtered_runs(cell)
        .with_context(|| format!("cell {stem}"))?
        .map(|runs| {
            runs.into_iter()
                .map(|(seed, signals)| {
                    let aucs = signals
                        .iter()
                        .map(|(&s, series)| Ok((s, auc(series, t0, t_end)?)))
                        .collect::<Result<_>>()?;
                    Ok((seed, aucs))
                })
                .collect::<Result<BTreeMap<_, _>>>()
        })
        .transpose()
        .with_context(|| format!("cell {stem}"))?;
    Ok(CellStats {
        cell,
        averaged,
        window,
        seed_auc,
    })
}

/// Seed for the bootstrap of one condition and signal.
fn stream_seed(base: u64, key: &CellKey, signal: Signal) -> u64 {
    // FNV-1a over the labels, then mixed with the user seed
    let text = format!("{}/{}", key.stem(), signal);
    let h = text
        .bytes()
        .fold(0xcbf2_9ce4_8422_2325_u64, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3));
    h ^ base.wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

fn resilience_value(
    attack: &CellStats,
    base: &CellStats,
    signal: Signal,
    a: &TimeSeries,
    b: &TimeSeries,
    opts: &AnalysisOptions,
) -> Result<ResilienceValue> {
    let w = attack.window;
    let r = resilience_r(a, b, w.t0, w.t_end)?;
    let paired: Vec<(f64, f64)> = match (&attack.seed_auc, &base.seed_auc) {
        (Some(sa), Some(sb)) => sa
            .iter()
            .filter_map(|(seed, x)| Some((*x.get(&signal)?, *sb.get(seed)?.get(&signal)?)))
            .collect(),
        _ => Vec::new(),
    };
    if paired.len() < 2 {
        return Ok(ResilienceValue::new(r, (r, r), attack.cell.runs.len(), w)?);
    }
    let seed = stream_seed(opts.seed, &attack.cell.condition, signal);
    let ci = bootstrap_statistic(paired.len(), opts.confidence, opts.resamples, seed, |idx| {
        let num = neumaier_sum(idx.iter().map(|&i| paired[i].0));
        let den = neumaier_sum(idx.iter().map(|&i| paired[i].1));
        if den > 0.0 {
            Ok(num / den)
        } else {
            Err(resilquant_core::Error::DegenerateBaseline("resampled baseline area is zero".into()))
        }
    })?;
    Ok(ResilienceValue::new(r, ci, paired.len(), w)?)
}

/// Ratio and model curves of one condition, for plotting.
pub struct FitCurves {
    pub condition: CellKey,
    pub columns: Vec<(String, TimeSeries)>,
}

fn analyse(
    attack: &CellStats,
    base: &CellStats,
    median_window_s: f64,
    opts: &AnalysisOptions,
    fit: bool,
) -> Result<(ReportEntry, Option<FitCurves>)> {
    if attack.window != base.window {
        bail!(
            "window mismatch: {} covers [{}, {}] but its baseline covers [{}, {}]; pass --window-start/--window-end",
            attack.cell.condition.stem(),
            attack.window.t0,
            attack.window.t_end,
            base.window.t0,
            base.window.t_end
        );
    }
    let mut r = BTreeMap::new();
    let mut fits = BTreeMap::new();
    let mut columns = Vec::new();
    for (&signal, a) in &attack.averaged {
        let b = base
            .averaged
            .get(&signal)
            .ok_or_else(|| anyhow!("baseline {} lacks signal {signal}", base.cell.condition.stem()))?;
        r.insert(signal, resilience_value(attack, base, signal, a, b, opts)?);
        if fit {
            let ratio = ratio_curve(a, b)?;
            let f: PiecewiseConstantFit = fit_ratio_curve(
                &ratio,
                &FitOptions {
                    refine: opts.refine,
                    ..FitOptions::default()
                },
            )
            .with_context(|| format!("fitting {signal}"))?;
            columns.push((format!("{signal}_model"), f.model_curve(&ratio)?));
            columns.push((format!("{signal}_ratio"), ratio));
            fits.insert(signal, f);
        }
    }
    let weighted_r = opts
        .weights
        .as_ref()
        .map(|w| {
            let values: Vec<(String, f64)> = r.iter().map(|(s, v)| (s.to_string(), v.r)).collect();
            weighted_resilience(&values, w)
        })
        .transpose()?;
    let entry = ReportEntry {
        condition: attack.cell.condition,
        r,
        weighted_r,
        fit: fit.then_some(fits),
        preprocessing: Preprocessing {
            median_window_s,
            n_runs_averaged: attack.cell.runs.len(),
        },
    };
    let curves = fit.then(|| {
        columns.sort_by(|x, y| x.0.cmp(&y.0));
        FitCurves {
            condition: attack.cell.condition,
            columns,
        }
    });
    Ok((entry, curves))
}

fn build_report(dataset: &Path, opts: &AnalysisOptions, fit: bool) -> Result<(ResilienceReport, Vec<FitCurves>)> {
    let ds = LoadedDataset::open(dataset)?;
    let attack_cells: Vec<&ProcessedCell> = ds
        .index
        .cells
        .iter()
        .filter(|c| c.condition.attack != AttackKind::Baseline)
        .collect();
    for c in &attack_cells {
        if ds.cell(&c.condition.baseline()).is_none() {
            bail!(
                "unpaired cell {}: no baseline cell {} in the dataset",
                c.condition.stem(),
                c.condition.baseline().stem()
            );
        }
    }
    let stats: BTreeMap<CellKey, CellStats> = ds
        .index
        .cells
        .par_iter()
        .map(|c| Ok((c.condition, cell_stats(&ds, c, opts)?)))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .collect();
    let results = attack_cells
        .par_iter()
        .map(|c| {
            analyse(
                &stats[&c.condition],
                &stats[&c.condition.baseline()],
                ds.index.median_window_s,
                opts,
                fit,
            )
            .with_context(|| format!("condition {}", c.condition.stem()))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut entries = Vec::with_capacity(results.len());
    let mut curves = Vec::new();
    for (e, c) in results {
        entries.push(e);
        curves.extend(c);
    }
    Ok((ResilienceReport { entries }, curves))
}

/// R per attack condition and signal, written to `out/report.json`.
pub fn resilience(dataset: &Path, out: &Path, opts: &AnalysisOptions) -> Result<ResilienceReport> {
    let (report, _) = build_report(dataset, opts, false)?;
    create_dir(out)?;
    report.write_json(&out.join(REPORT_FILE))?;
    Ok(report)
}

/// As [`resilience`] plus a fit per condition and signal; model and ratio
/// curves go to `out/curves/<condition>.csv`.
pub fn fit(dataset: &Path, out: &Path, opts: &AnalysisOptions) -> Result<ResilienceReport> {
    let (report, curves) = build_report(dataset, opts, true)?;
    let dir = out.join("curves");
    create_dir(&dir)?;
    for c in &curves {
        write_curves(&dir.join(format!("{}.csv", c.condition.stem())), c)?;
    }
    report.write_json(&out.join(REPORT_FILE))?;
    Ok(report)
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))
}

fn write_curves(path: &Path, c: &FitCurves) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("cannot write {}", path.display()))?;
    let first = &c.columns.first().ok_or_else(|| anyhow!("no curves for {}", path.display()))?.1;
    w.write_record(std::iter::once("time_s").chain(c.columns.iter().map(|(n, _)| n.as_str())))?;
    for k in 0..first.len() {
        let row = std::iter::once(first.time(k).to_string()).chain(c.columns.iter().map(|(_, s)| s.values()[k].to_string()));
        w.write_record(row)?;
    }
    w.flush().with_context(|| format!("cannot write {}", path.display()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum ReportFormat {
    Json,
    Csv,
}

/// Re-emits a report (JSON or tidy CSV) as JSON or as CSV tables.
pub fn report(input: &Path, out: &Path, format: ReportFormat) -> Result<Vec<PathBuf>> {
    let report = ResilienceReport::read(input)?;
    create_dir(out)?;
    match format {
        ReportFormat::Json => {
            let path = out.join(REPORT_FILE);
            report.write_json(&path)?;
            Ok(vec![path])
        }
        ReportFormat::Csv => write_tables(&report, out),
    }
}
