//! Acceptance suite: every criterion at its stated tolerance, one line each.
//! Exits nonzero when any criterion fails.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use resilquant::commands::{self, AnalysisOptions, ReportFormat};
use resilquant::dataset::LoadedDataset;
use resilquant_core::fitting::{fast_fit_phase1, fast_fit_phase2, fit_ratio_curve, FastFitHyperparams, FitOptions};
use resilquant_core::metrics::{ratio_curve, resilience_r};
use resilquant_core::model::{
    eval_constant, eval_linear, eval_piecewise_constant, eval_piecewise_linear, governing_derivative,
    sample_curve, steady_state, ImpactProfile, LinearImpact, ModelState,
};
use resilquant_core::numerics::{integrate_ode_rk4, running_median, TimeSeries};
use resilquant_core::synth::{
    baseline_profile, driver_drift, read_manifest, AttackKind, Cargo, Condition, Signal, Terrain, Timing, Truck,
};
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::ExitCode;
use std::time::{Duration, Instant};

type Check = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Check {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within_time(start: Instant, limit: Duration, detail: String) -> Check {
    let took = start.elapsed();
    ensure(took < limit, format!("{detail}; {:.2} s of {} s allowed", took.as_secs_f64(), limit.as_secs()))
}

// 1 --------------------------------------------------------------------------

/// RK4 at step <= 1e-3 marched through sorted probe times, restarted at every
/// knot so impact jumps do not cost accuracy.
fn rk4_at(state: &ModelState, profile: &ImpactProfile, probes: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(probes.len());
    let mut f = state.f_initial();
    let mut next = 0;
    for j in 0..profile.intervals().len() {
        let piece = profile.interval(j).unwrap();
        let rhs = |t: f64, y: f64| governing_derivative(state, &piece, t.clamp(piece.start(), piece.end()), y).unwrap();
        let mut t = piece.start();
        let last = j + 1 == profile.intervals().len();
        while next < probes.len() && (probes[next] < piece.end() || (last && probes[next] <= piece.end())) {
            if probes[next] > t {
                f = *integrate_ode_rk4(rhs, f, t, probes[next], 1e-3).unwrap().values().last().unwrap();
                t = probes[next];
            }
            out.push(f);
            next += 1;
        }
        if t < piece.end() {
            f = *integrate_ode_rk4(rhs, f, t, piece.end(), 1e-3).unwrap().values().last().unwrap();
        }
    }
    out
}

fn criterion_1() -> Check {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst = [0.0f64; 4];
    for kind in 0..4 {
        for _ in 0..100 {
            let f0 = rng.random_range(0.05..=1.0);
            let f_n = rng.random_range(0.5..2.0);
            let state = ModelState::new(f_n, f0 * f_n, 0.0).unwrap();
            let mut mb = || (rng.random_range(0.0..1.0), rng.random_range(0.0..1.0));
            let pieces = if kind % 2 == 0 { 1 } else { 3 };
            let impacts: Vec<(f64, f64)> = (0..pieces).map(|_| mb()).collect();
            let slopes: Vec<(f64, f64)> = (0..pieces)
                .map(|_| (rng.random_range(-0.3..0.3), rng.random_range(-0.3..0.3)))
                .collect();
            let mut knots = vec![0.0];
            for _ in 0..pieces {
                let last = *knots.last().unwrap();
                knots.push(last + rng.random_range(1.0..4.0));
            }
            let end = *knots.last().unwrap();
            let lin: Vec<LinearImpact> = impacts
                .iter()
                .zip(&slopes)
                .map(|(&(m, b), &(mu, beta))| LinearImpact::new(m, mu, b, beta))
                .collect();
            let profile = match kind {
                0 => ImpactProfile::constant(0.0, end, impacts[0].0, impacts[0].1),
                1 => ImpactProfile::piecewise_constant(knots.clone(), &impacts),
                2 => ImpactProfile::linear(0.0, end, lin[0]),
                _ => ImpactProfile::piecewise_linear(knots.clone(), &lin),
            }
            .unwrap();
            let mut probes: Vec<f64> = (0..50).map(|_| rng.random_range(0.0..=end)).collect();
            probes.sort_by(f64::total_cmp);
            let oracle = rk4_at(&state, &profile, &probes);
            for (&t, &want) in probes.iter().zip(&oracle) {
                let got = match kind {
                    0 => eval_constant(&state, impacts[0].0, impacts[0].1, t),
                    1 => eval_piecewise_constant(&state, &profile, t),
                    2 => eval_linear(&state, lin[0], t),
                    _ => eval_piecewise_linear(&state, &profile, t),
                }
                .unwrap();
                worst[kind] = worst[kind].max((got - want).abs());
            }
        }
    }
    let detail = format!(
        "max |closed form - RK4| constant {:.1e}, piecewise-constant {:.1e}, linear {:.1e}, piecewise-linear {:.1e}",
        worst[0], worst[1], worst[2], worst[3]
    );
    ensure(worst.iter().all(|&w| w <= 1e-5), detail.clone())?;
    within_time(start, Duration::from_secs(10), detail)
}

// 2 --------------------------------------------------------------------------

fn criterion_2() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst_limit = 0.0f64;
    for _ in 0..1000 {
        let f_n = rng.random_range(0.1..10.0);
        let f0 = f_n * rng.random_range(0.01..=1.0);
        let (m, b): (f64, f64) = (rng.random_range(0.0..2.0), rng.random_range(1e-3..2.0));
        let state = ModelState::new(f_n, f0, 0.0).unwrap();
        let ss = steady_state(&state, m, b).unwrap();
        if ss != f_n * b / (m + b) {
            return Err(format!("steady_state({m}, {b}) = {ss}, law gives {}", f_n * b / (m + b)));
        }
        let late = eval_constant(&state, m, b, 50.0 / (m + b)).unwrap();
        worst_limit = worst_limit.max((late - ss).abs());
    }
    ensure(
        worst_limit <= 1e-6,
        format!("law exact on 1000 draws; max |F(50/Q) - F_N B/(M+B)| = {worst_limit:.1e}"),
    )
}

// 3, 4 -----------------------------------------------------------------------

fn criterion_3() -> Check {
    let start = Instant::now();
    let p = fast_fit_phase1(1.0, 1.0, 0.27, 69.5, &FastFitHyperparams::default()).map_err(|e| e.to_string())?;
    let detail = format!("M1 = {:.5}, B1 = {:.5}", p.malware, p.bonware);
    ensure(
        (0.023..=0.027).contains(&p.malware) && (0.004..=0.006).contains(&p.bonware),
        detail.clone(),
    )?;
    within_time(start, Duration::from_secs(1), detail)
}

fn criterion_4() -> Check {
    let p = fast_fit_phase2(1.0, 1.0, 0.27, 69.5, 125.0, &FastFitHyperparams::default()).map_err(|e| e.to_string())?;
    let (share, q) = (p.share(), p.rate());
    ensure(
        (share - 0.95).abs() <= 0.01 && (0.05..=0.10).contains(&q),
        format!(
            "B2/(M2+B2) = {share:.4}, Q2 = {q:.5} (M2 = {:.5}, B2 = {:.5}; reference 0.005, 0.088)",
            p.malware, p.bonware
        ),
    )
}

// 5 --------------------------------------------------------------------------

const RT_DT: f64 = 0.5;
const RT_END: f64 = 300.0;

struct Draw {
    t_star: f64,
    p1: (f64, f64),
    curve: TimeSeries,
}

fn draw(rng: &mut ChaCha8Rng) -> Draw {
    let q1 = rng.random_range(0.03..0.08);
    let r1 = rng.random_range(0.1..0.4);
    let q2 = rng.random_range(0.04..0.12);
    let r2 = rng.random_range(0.75..1.0);
    let t1 = (rng.random_range(40.0..80.0) / RT_DT).round() * RT_DT;
    let t_star = t1 + (rng.random_range(40.0..70.0) / RT_DT).round() * RT_DT;
    let p1 = (q1 * (1.0 - r1), q1 * r1);
    let p2 = (q2 * (1.0 - r2), q2 * r2);
    let profile = ImpactProfile::piecewise_constant(vec![0.0, t1, t_star, RT_END], &[(0.0, 0.0), p1, p2]).unwrap();
    let curve = sample_curve(&ModelState::normalized(0.0).unwrap(), &profile, RT_DT).unwrap();
    Draw { t_star, p1, curve }
}

fn averaged_noisy_ratio(clean: &TimeSeries, trial: u64) -> TimeSeries {
    let ones = clean.map(|_| 1.0).unwrap();
    let mean_of = |base: &TimeSeries, offset: u64| {
        let mut sum = vec![0.0; base.len()];
        for seed in 0..30u64 {
            let run = driver_drift(base, trial * 1000 + offset + seed, 0.02, 30.0).unwrap();
            for (s, v) in sum.iter_mut().zip(run.values()) {
                *s += v / 30.0;
            }
        }
        base.with_values(sum).unwrap()
    };
    ratio_curve(&mean_of(clean, 0), &mean_of(&ones, 500)).unwrap()
}

fn criterion_5() -> Check {
    let start = Instant::now();
    let opts = FitOptions {
        refine: true,
        ..FitOptions::default()
    };
    let rel = |a: f64, b: f64| (a - b).abs() / b;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut clean_ok = 0;
    let mut worst_clean = 0.0f64;
    let mut noisy_ok = 0;
    for trial in 0..50 {
        let d = draw(&mut rng);
        let fit = fit_ratio_curve(&d.curve, &opts).map_err(|e| e.to_string())?;
        let ph = fit.phases[0];
        let err = rel(ph.malware, d.p1.0).max(rel(ph.bonware, d.p1.1));
        worst_clean = worst_clean.max(err);
        if err <= 0.15 && (fit.t_star - d.t_star).abs() <= RT_DT {
            clean_ok += 1;
        }
        let noisy = fit_ratio_curve(&averaged_noisy_ratio(&d.curve, trial), &opts).map_err(|e| e.to_string())?;
        let ph = noisy.phases[0];
        if rel(ph.malware, d.p1.0) <= 0.25 && rel(ph.bonware, d.p1.1) <= 0.25 {
            noisy_ok += 1;
        }
    }
    let detail = format!(
        "noiseless {clean_ok}/50 within 15% and one sample (worst {:.2}%), noisy {noisy_ok}/50 within 25%",
        100.0 * worst_clean
    );
    ensure(clean_ok == 50 && noisy_ok >= 45, detail.clone())?;
    within_time(start, Duration::from_secs(60), detail)
}

// 6 --------------------------------------------------------------------------

fn criterion_6() -> Check {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst_identity = 0.0f64;
    let mut worst_scale = 0.0f64;
    for _ in 0..1000 {
        let n = rng.random_range(2..200);
        let dt = rng.random_range(0.01..2.0);
        let b: Vec<f64> = (0..n).map(|_| rng.random_range(0.1..5.0)).collect();
        let frac: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..=1.0)).collect();
        let base = TimeSeries::new(0.0, dt, b.clone()).unwrap();
        let dominated = base.with_values(b.iter().zip(&frac).map(|(x, f)| x * f).collect()).unwrap();
        let zero = base.map(|_| 0.0).unwrap();
        let (t0, t_end) = (0.0, base.end());
        let same = resilience_r(&base, &base, t0, t_end).unwrap();
        worst_identity = worst_identity.max((same - 1.0).abs());
        if resilience_r(&zero, &base, t0, t_end).unwrap() != 0.0 {
            return Err("R(0, baseline) != 0".into());
        }
        let r = resilience_r(&dominated, &base, t0, t_end).unwrap();
        if !(0.0..=1.0).contains(&r) {
            return Err(format!("R = {r} outside [0, 1] under domination"));
        }
        let c = rng.random_range(1e-3..1e3);
        let scaled = resilience_r(&dominated.map(|v| c * v).unwrap(), &base.map(|v| c * v).unwrap(), t0, t_end).unwrap();
        worst_scale = worst_scale.max((scaled - r).abs());
    }
    ensure(
        worst_identity <= 1e-12 && worst_scale <= 1e-12,
        format!("1000 pairs: |R(b,b) - 1| <= {worst_identity:.1e}, scale drift <= {worst_scale:.1e}, R(0,b) = 0, domination in [0,1]"),
    )
}

// 7 --------------------------------------------------------------------------

fn criterion_7(scratch: &Path) -> Check {
    let dir = scratch.join("c7");
    let config = dir.join("ecu.toml");
    fs::create_dir_all(&dir).unwrap();
    fs::write(
        &config,
        "[design]\ntrucks = [\"medium\"]\nterrains = [\"flat_road\"]\nattacks = [\"baseline\", \"ecu\"]\n\
         cargos = [\"none\"]\nseeds = [1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 16, 17, 18, 19, 20, \
         21, 22, 23, 24, 25, 26, 27, 28, 29, 30]\n\n[timing]\ndt = 0.5\n",
    )
    .unwrap();
    let run = || -> anyhow::Result<(f64, f64, f64)> {
        commands::simulate(&config, &dir.join("raw"))?;
        commands::preprocess(&dir.join("raw/manifest.json"), &dir.join("processed"), 72.0)?;
        let opts = AnalysisOptions {
            refine: true,
            ..AnalysisOptions::default()
        };
        let report = commands::fit(&dir.join("processed"), &dir.join("fit"), &opts)?;
        let entry = &report.entries[0];
        let fit = &entry.fit.as_ref().unwrap()[&Signal::FuelEfficiency];
        let share = fit.phases.last().unwrap().equilibrium_share();

        // settled level of the averaged ratio curve, well after the switch
        let ds = LoadedDataset::open(&dir.join("processed"))?;
        let a = ds.averaged(&ds.index.cells[1])?;
        let b = ds.averaged(&ds.index.cells[0])?;
        let ratio = ratio_curve(&a[&Signal::FuelEfficiency], &b[&Signal::FuelEfficiency])?;
        let settled: Vec<f64> = ratio.times().zip(ratio.values()).filter(|(t, _)| *t >= 400.0).map(|(_, &v)| v).collect();
        let level = settled.iter().sum::<f64>() / settled.len() as f64;
        let spread = settled.iter().map(|v| (v - level).abs()).fold(0.0, f64::max);
        Ok((level, spread, share))
    };
    let (level, spread, share) = run().map_err(|e| format!("{e:#}"))?;
    ensure(
        (level - 0.92).abs() <= 0.01 && (share - 0.92).abs() <= 0.02,
        format!("ratio settles at {level:.4} (max excursion {spread:.4}) for t >= 400 s; fitted B/(M+B) = {share:.4}"),
    )
}

// 8 --------------------------------------------------------------------------

fn criterion_8(scratch: &Path) -> Check {
    let start = Instant::now();
    let dir = scratch.join("c8");
    fs::create_dir_all(&dir).unwrap();
    let config = dir.join("grid.toml");
    fs::write(&config, "[timing]\nduration_s = 900.0\ndt = 0.5\n").unwrap();
    let run = || -> anyhow::Result<(Vec<usize>, usize, usize, usize)> {
        commands::simulate(&config, &dir.join("raw"))?;
        let manifest = read_manifest(&dir.join("raw/manifest.json"))?;
        let per_attack = AttackKind::ALL
            .iter()
            .map(|&a| manifest.iter().filter(|e| e.attack == a).count())
            .collect();
        let ds = commands::preprocess(&dir.join("raw/manifest.json"), &dir.join("processed"), 72.0)?;
        let report = commands::fit(&dir.join("processed"), &dir.join("fit"), &AnalysisOptions::default())?;
        let tables = commands::report(&dir.join("fit/report.json"), &dir.join("tables"), ReportFormat::Csv)?;
        let rows = fs::read_to_string(&tables[1])?.lines().count() - 1;
        Ok((per_attack, ds.cells.len(), report.entries.len(), rows))
    };
    let (per_attack, cells, entries, rows) = run().map_err(|e| format!("{e:#}"))?;
    let total: usize = per_attack.iter().sum();
    let took = start.elapsed();
    let _ = fs::remove_dir_all(&dir);
    ensure(
        per_attack.iter().all(|&n| n == 3 * 5 * 4 * 30) && total == 7200 && cells == 240 && entries == 180 && rows == 180,
        format!(
            "manifest {total} runs ({per_attack:?} per attack), {cells} cells, {entries} report entries, {rows} table rows"
        ),
    )?;
    ensure(
        took < Duration::from_secs(600),
        format!("{total} runs simulated, preprocessed, fitted and tabulated in {:.1} s of 600 s allowed", took.as_secs_f64()),
    )
}

// 9 --------------------------------------------------------------------------

fn criterion_9() -> Check {
    let timing = Timing {
        duration_s: 900.0,
        dt: 0.5,
        decimate: 1,
    };
    // spikes
    let c = Condition {
        truck: Truck::Heavy,
        terrain: Terrain::Hilly,
        attack: AttackKind::Baseline,
        cargo: Cargo::Light,
        seed: 3,
    };
    let clean = driver_drift(&baseline_profile(&c, Signal::FuelEfficiency, &timing).unwrap(), c.drift_seed(), 0.02, 30.0)
        .unwrap();
    let spikes = [100usize, 400, 777, 1200, 1650];
    let mut values = clean.values().to_vec();
    for &k in &spikes {
        values[k] *= 100.0;
    }
    let spiked = clean.with_values(values).unwrap();
    let (fc, fs_) = (running_median(&clean, 72.0).unwrap(), running_median(&spiked, 72.0).unwrap());
    let reach = (36.0 / timing.dt) as usize;
    let mut outside = 0.0f64;
    for k in 0..clean.len() {
        let near = spikes.iter().any(|&s| k.abs_diff(s) <= reach);
        if !near {
            outside = outside.max((fc.values()[k] - fs_.values()[k]).abs());
        }
    }
    let peak_ratio = fs_.max() / clean.max();
    ensure(
        outside <= 1e-9 && peak_ratio <= 1.0,
        format!("deviation outside spike windows {outside:.1e}; filtered peak / clean peak = {peak_ratio:.4}"),
    )?;

    // averaging, pooled over every baseline group of the design
    let (mut single_sq, mut single_n, mut mean_sq, mut mean_n) = (0.0, 0usize, 0.0, 0usize);
    for &truck in Truck::ALL {
        for &terrain in Terrain::ALL {
            for &cargo in Cargo::ALL {
                let c = Condition {
                    truck,
                    terrain,
                    attack: AttackKind::Baseline,
                    cargo,
                    seed: 1,
                };
                let base = baseline_profile(&c, Signal::FuelEfficiency, &timing).unwrap();
                let reference = running_median(&base, 72.0).unwrap();
                let mut sum = vec![0.0; base.len()];
                for seed in 1..=30 {
                    let run = driver_drift(&base, Condition { seed, ..c }.drift_seed(), 0.02, 30.0).unwrap();
                    let f = running_median(&run, 72.0).unwrap();
                    for ((s, v), r) in sum.iter_mut().zip(f.values()).zip(reference.values()) {
                        let e = v / r - 1.0;
                        single_sq += e * e;
                        single_n += 1;
                        *s += v / 30.0;
                    }
                }
                for (s, r) in sum.iter().zip(reference.values()) {
                    let e = s / r - 1.0;
                    mean_sq += e * e;
                    mean_n += 1;
                }
            }
        }
    }
    let reduction = (single_sq / single_n as f64).sqrt() / (mean_sq / mean_n as f64).sqrt();
    ensure(
        reduction >= 4.5,
        format!(
            "spikes removed ({outside:.1e} outside windows); 30-seed averaging cuts drift std by {reduction:.2}x over 60 baseline groups"
        ),
    )
}

fn main() -> ExitCode {
    let scratch = tempfile::tempdir().expect("scratch directory");
    let criteria: Vec<(&str, Box<dyn Fn() -> Check>)> = vec![
        ("1 closed forms match RK4", Box::new(criterion_1)),
        ("2 steady-state law", Box::new(criterion_2)),
        ("3 fast fit phase 1 golden values", Box::new(criterion_3)),
        ("4 fast fit phase 2 bounds", Box::new(criterion_4)),
        ("5 round-trip fitting", Box::new(criterion_5)),
        ("6 resilience measure properties", Box::new(criterion_6)),
        ("7 ECU equilibrium reproduction", Box::new(|| criterion_7(scratch.path()))),
        ("8 full design grid at desk scale", Box::new(|| criterion_8(scratch.path()))),
        ("9 preprocessing contract", Box::new(criterion_9)),
    ];
    let mut failed = 0;
    for (name, check) in &criteria {
        let t = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            Err(format!("panicked: {msg}"))
        });
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(d) => println!("PASS  {name}: {d} [{secs:.1} s]"),
            Err(d) => {
                failed += 1;
                println!("FAIL  {name}: {d} [{secs:.1} s]");
            }
        }
    }
    println!(
        "INFO  10 testbed magnitudes of the reference resilience figures are not reproducible at desk scale; \
         criteria 6-8 stand in for them"
    );
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
