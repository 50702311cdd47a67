//! Resilience reports and their plot-ready tables.
//!
//! `tidy.csv` has one row per condition × signal × statistic and carries
//! every numeric field, so a report can be rebuilt from it. `r_table.csv`
//! (one row per condition) and `fits.csv` (one row per condition × signal)
//! are wide views for plotting.

use crate::dataset::CellKey;
use anyhow::{anyhow, bail, Context, Result};
use resilquant_core::fitting::{Phase, PiecewiseConstantFit};
use resilquant_core::metrics::{ResilienceValue, Window};
use resilquant_core::synth::{AttackKind, Cargo, Signal, Terrain, Truck};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

pub const REPORT_FILE: &str = "report.json";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Preprocessing {
    pub median_window_s: f64,
    pub n_runs_averaged: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportEntry {
    pub condition: CellKey,
    #[serde(rename = "R")]
    pub r: BTreeMap<Signal, ResilienceValue>,
    #[serde(rename = "weighted_R", default, skip_serializing_if = "Option::is_none")]
    pub weighted_r: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fit: Option<BTreeMap<Signal, PiecewiseConstantFit>>,
    pub preprocessing: Preprocessing,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ResilienceReport {
    pub entries: Vec<ReportEntry>,
}

impl ResilienceReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?).with_context(|| format!("cannot write {}", path.display()))
    }

    /// Reads `report.json`, or a `tidy.csv` written by [`write_tables`].
    pub fn read(path: &Path) -> Result<Self> {
        let path = if path.is_dir() { path.join(REPORT_FILE) } else { path.to_path_buf() };
        if path.extension().is_some_and(|e| e == "csv") {
            return read_tidy(&path);
        }
        let text = fs::read_to_string(&path).with_context(|| format!("cannot read report {}", path.display()))?;
        let report: Self =
            serde_json::from_str(&text).with_context(|| format!("malformed report {}", path.display()))?;
        if let Some(e) = report.entries.iter().find(|e| e.r.values().any(|v| v.n_runs == 0)) {
            bail!("report {}: {} has an entry from zero runs", path.display(), e.condition.stem());
        }
        Ok(report)
    }
}

const CONDITION_COLUMNS: [&str; 4] = ["truck", "terrain", "attack", "cargo_kg"];

fn condition_fields(c: &CellKey) -> [String; 4] {
    [
        c.truck.to_string(),
        c.terrain.to_string(),
        c.attack.to_string(),
        c.cargo.kg().to_string(),
    ]
}

fn flag(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

/// `(signal, statistic, value)` rows of one entry; entry-level rows have an
/// empty signal.
fn tidy_rows(e: &ReportEntry) -> Vec<(String, String, f64)> {
    let mut rows = Vec::new();
    let mut push = |sig: &str, stat: &str, v: f64| rows.push((sig.to_string(), stat.to_string(), v));
    push("", "median_window_s", e.preprocessing.median_window_s);
    push("", "n_runs_averaged", e.preprocessing.n_runs_averaged as f64);
    if let Some(w) = e.weighted_r {
        push("", "weighted_R", w);
    }
    for (s, v) in &e.r {
        let s = s.label();
        push(s, "R", v.r);
        push(s, "ci_low", v.ci_low);
        push(s, "ci_high", v.ci_high);
        push(s, "n_runs", v.n_runs as f64);
        push(s, "window_t0", v.window.t0);
        push(s, "window_T", v.window.t_end);
    }
    for (s, f) in e.fit.iter().flatten() {
        let s = s.label();
        push(s, "fit_t1", f.t1);
        push(s, "fit_t_star", f.t_star);
        push(s, "fit_t2", f.t2);
        push(s, "fit_m", f.m);
        push(s, "fit_rmse", f.rmse);
        push(s, "fit_F_N", f.f_nominal);
        push(s, "fit_F0", f.f_initial);
        push(s, "fit_refined", flag(f.refined));
        push(s, "fit_degenerate", flag(f.degenerate));
        for (i, p) in f.phases.iter().enumerate() {
            let i = i + 1;
            push(s, &format!("fit_phase{i}_t_from"), p.t_from);
            push(s, &format!("fit_phase{i}_t_to"), p.t_to);
            push(s, &format!("fit_phase{i}_M"), p.malware);
            push(s, &format!("fit_phase{i}_B"), p.bonware);
        }
    }
    rows
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    csv::Writer::from_path(path).with_context(|| format!("cannot write {}", path.display()))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes `tidy.csv`, `r_table.csv` and `fits.csv` into `out_dir`.
pub fn write_tables(report: &ResilienceReport, out_dir: &Path) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(out_dir).with_context(|| format!("cannot create {}", out_dir.display()))?;

    let tidy = out_dir.join("tidy.csv");
    let mut w = csv_writer(&tidy)?;
    w.write_record(CONDITION_COLUMNS.iter().chain(&["signal", "statistic", "value"]))?;
    for e in &report.entries {
        let cond = condition_fields(&e.condition);
        for (sig, stat, v) in tidy_rows(e) {
            w.write_record(cond.iter().cloned().chain([sig, stat, v.to_string()]))?;
        }
    }
    w.flush()?;

    let r_table = out_dir.join("r_table.csv");
    let mut w = csv_writer(&r_table)?;
    let mut header: Vec<String> = CONDITION_COLUMNS.iter().map(|s| s.to_string()).collect();
    header.extend(["n_runs_averaged", "median_window_s", "weighted_R"].map(String::from));
    for s in Signal::ALL {
        header.extend(["R", "ci_low", "ci_high"].map(|stat| format!("{s}_{stat}")));
    }
    w.write_record(&header)?;
    for e in &report.entries {
        let mut row: Vec<String> = condition_fields(&e.condition).into();
        row.push(e.preprocessing.n_runs_averaged.to_string());
        row.push(e.preprocessing.median_window_s.to_string());
        row.push(opt(e.weighted_r));
        for s in Signal::ALL {
            let v = e.r.get(s);
            row.push(opt(v.map(|v| v.r)));
            row.push(opt(v.map(|v| v.ci_low)));
            row.push(opt(v.map(|v| v.ci_high)));
        }
        w.write_record(&row)?;
    }
    w.flush()?;

    let fits = out_dir.join("fits.csv");
    let mut w = csv_writer(&fits)?;
    w.write_record(CONDITION_COLUMNS.iter().chain(&[
        "signal",
        "t1",
        "t_star",
        "t2",
        "m",
        "M1",
        "B1",
        "M2",
        "B2",
        "recovery_share",
        "rmse",
        "refined",
        "degenerate",
    ]))?;
    for e in &report.entries {
        for (s, f) in e.fit.iter().flatten() {
            let p1 = f.phases.first();
            let p2 = f.phases.get(1);
            let last = f.phases.last();
            let mut row: Vec<String> = condition_fields(&e.condition).into();
            row.push(s.to_string());
            row.extend([f.t1, f.t_star, f.t2, f.m].map(|v| v.to_string()));
            row.push(opt(p1.map(|p| p.malware)));
            row.push(opt(p1.map(|p| p.bonware)));
            row.push(opt(p2.map(|p| p.malware)));
            row.push(opt(p2.map(|p| p.bonware)));
            row.push(opt(last.map(Phase::equilibrium_share)));
            row.push(f.rmse.to_string());
            row.push(f.refined.to_string());
            row.push(f.degenerate.to_string());
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(vec![tidy, r_table, fits])
}

#[derive(Default)]
struct Partial {
    stats: BTreeMap<(String, String), f64>,
}

impl Partial {
    fn take(&mut self, sig: &str, stat: &str) -> Option<f64> {
        self.stats.remove(&(sig.to_string(), stat.to_string()))
    }

    fn need(&mut self, sig: &str, stat: &str) -> Result<f64> {
        self.take(sig, stat)
            .ok_or_else(|| anyhow!("missing statistic {stat} for signal {sig:?}"))
    }

    fn count(&mut self, sig: &str, stat: &str) -> Result<usize> {
        let v = self.need(sig, stat)?;
        if v < 0.0 || v.fract() != 0.0 {
            bail!("{stat} must be a count, got {v}");
        }
        Ok(v as usize)
    }

    fn into_entry(mut self, condition: CellKey) -> Result<ReportEntry> {
        let preprocessing = Preprocessing {
            median_window_s: self.need("", "median_window_s")?,
            n_runs_averaged: self.count("", "n_runs_averaged")?,
        };
        let weighted_r = self.take("", "weighted_R");
        let mut r = BTreeMap::new();
        let mut fit = BTreeMap::new();
        for &s in Signal::ALL {
            let sig = s.label();
            if let Some(value) = self.take(sig, "R") {
                r.insert(
                    s,
                    ResilienceValue {
                        r: value,
                        ci_low: self.need(sig, "ci_low")?,
                        ci_high: self.need(sig, "ci_high")?,
                        n_runs: self.count(sig, "n_runs")?,
                        window: Window {
                            t0: self.need(sig, "window_t0")?,
                            t_end: self.need(sig, "window_T")?,
                        },
                    },
                );
            }
            if let Some(t1) = self.take(sig, "fit_t1") {
                let mut phases = Vec::new();
                for i in 1.. {
                    let Some(t_from) = self.take(sig, &format!("fit_phase{i}_t_from")) else {
                        break;
                    };
                    phases.push(Phase {
                        t_from,
                        t_to: self.need(sig, &format!("fit_phase{i}_t_to"))?,
                        malware: self.need(sig, &format!("fit_phase{i}_M"))?,
                        bonware: self.need(sig, &format!("fit_phase{i}_B"))?,
                    });
                }
                fit.insert(
                    s,
                    PiecewiseConstantFit {
                        t_star: self.need(sig, "fit_t_star")?,
                        m: self.need(sig, "fit_m")?,
                        phases,
                        t1,
                        t2: self.need(sig, "fit_t2")?,
                        rmse: self.need(sig, "fit_rmse")?,
                        f_nominal: self.need(sig, "fit_F_N")?,
                        f_initial: self.need(sig, "fit_F0")?,
                        refined: self.need(sig, "fit_refined")? != 0.0,
                        degenerate: self.need(sig, "fit_degenerate")? != 0.0,
                    },
                );
            }
        }
        if let Some(((sig, stat), _)) = self.stats.into_iter().next() {
            bail!("unknown statistic {stat} for signal {sig:?}");
        }
        Ok(ReportEntry {
            condition,
            r,
            weighted_r,
            fit: (!fit.is_empty()).then_some(fit),
            preprocessing,
        })
    }
}

fn read_tidy(path: &Path) -> Result<ResilienceReport> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("cannot read {}", path.display()))?;
    let mut order: Vec<CellKey> = Vec::new();
    let mut partial: BTreeMap<CellKey, Partial> = BTreeMap::new();
    for (i, rec) in r.records().enumerate() {
        let line = i + 2;
        let rec = rec.with_context(|| format!("{} line {line}", path.display()))?;
        let field = |k: usize| rec.get(k).ok_or_else(|| anyhow!("{} line {line}: too few columns", path.display()));
        let parse_err = |e: resilquant_core::Error| anyhow!("{} line {line}: {e}", path.display());
        let key = CellKey {
            truck: field(0)?.parse::<Truck>().map_err(parse_err)?,
            terrain: field(1)?.parse::<Terrain>().map_err(parse_err)?,
            attack: field(2)?.parse::<AttackKind>().map_err(parse_err)?,
            cargo: field(3)?
                .parse::<f64>()
                .map_err(|e| anyhow!("{} line {line}: {e}", path.display()))
                .and_then(|kg| Cargo::from_kg(kg).map_err(parse_err))?,
        };
        let value: f64 = field(6)?
            .parse()
            .with_context(|| format!("{} line {line}: bad value", path.display()))?;
        let p = partial.entry(key).or_insert_with(|| {
            order.push(key);
            Partial::default()
        });
        if p.stats.insert((field(4)?.to_string(), field(5)?.to_string()), value).is_some() {
            bail!("{} line {line}: duplicate statistic", path.display());
        }
    }
    let entries = order
        .into_iter()
        .map(|key| {
            let p = partial.remove(&key).expect("every key has rows");
            p.into_entry(key)
                .with_context(|| format!("{}: condition {}", path.display(), key.stem()))
        })
        .collect::<Result<_>>()?;
    Ok(ResilienceReport { entries })
}
