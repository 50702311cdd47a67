//! Synthetic experiment runs over a truck × terrain × attack × cargo × seed
//! design, for exercising the pipeline without a physical test bed.
//!
//! Levels and shapes are invented stand-ins; every manifest entry carries
//! `synthetic: true`.

mod io;

pub use io::{generate_grid, read_manifest, read_run_csv, write_manifest, write_run_csv, ManifestEntry};

use crate::error::{Error, Result};
use crate::model::{ImpactProfile, ModelState};
use crate::numerics::TimeSeries;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;

macro_rules! labelled_enum {
    ($(#[$m:meta])* $name:ident { $($variant:ident => $label:literal),+ $(,)? }) => {
        $(#[$m])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        pub enum $name {
            $(#[serde(rename = $label)] $variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn label(self) -> &'static str {
                match self {
                    $($name::$variant => $label),+
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.label())
            }
        }

        impl std::str::FromStr for $name {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s {
                    $($label => Ok($name::$variant),)+
                    other => Err(Error::InvalidArgument(format!(
                        "unknown {} {other:?}", stringify!($name).to_lowercase()
                    ))),
                }
            }
        }
    };
}

labelled_enum!(Truck { Light => "light", Medium => "medium", Heavy => "heavy" });
labelled_enum!(Terrain {
    SteadyDescent => "steady_descent",
    FlatRoad => "flat_road",
    FlatOffRoad => "flat_off_road",
    Hilly => "hilly",
    SteadyAscent => "steady_ascent",
});
labelled_enum!(AttackKind { Baseline => "baseline", Fan => "fan", Ecu => "ecu", Suspension => "suspension" });
labelled_enum!(Cargo { None => "none", Light => "light", Medium => "medium", Heavy => "heavy" });
labelled_enum!(Signal { FuelEfficiency => "fuel_efficiency", Speed => "speed" });

impl Cargo {
    pub fn kg(self) -> f64 {
        match self {
            Cargo::None => 0.0,
            Cargo::Light => 3000.0,
            Cargo::Medium => 6000.0,
            Cargo::Heavy => 9000.0,
        }
    }

    pub fn from_kg(kg: f64) -> Result<Self> {
        Cargo::ALL
            .iter()
            .copied()
            .find(|c| c.kg() == kg)
            .ok_or_else(|| Error::InvalidArgument(format!("no cargo class weighs {kg} kg")))
    }
}

/// One cell of the design, replicated by `seed`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Condition {
    pub truck: Truck,
    pub terrain: Terrain,
    pub attack: AttackKind,
    pub cargo: Cargo,
    pub seed: u32,
}

impl Condition {
    /// File stem, e.g. `heavy_hilly_ecu_none_s07`.
    pub fn stem(&self) -> String {
        format!(
            "{}_{}_{}_{}_s{:02}",
            self.truck, self.terrain, self.attack, self.cargo, self.seed
        )
    }

    /// Seed of the drift process, mixing every field so attack and baseline
    /// runs with the same replicate number drift independently.
    pub fn drift_seed(&self) -> u64 {
        let fields = [
            self.truck as u64,
            self.terrain as u64,
            self.attack as u64,
            self.cargo as u64,
            self.seed as u64,
        ];
        fields.iter().fold(0x5eed_u64, |h, &f| splitmix64(h ^ f.wrapping_mul(0x9e37_79b9)))
    }
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Which cells to generate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DesignGrid {
    pub trucks: Vec<Truck>,
    pub terrains: Vec<Terrain>,
    pub attacks: Vec<AttackKind>,
    pub cargos: Vec<Cargo>,
    pub seeds: Vec<u32>,
}

impl Default for DesignGrid {
    /// 3 trucks × 5 terrains × 4 attacks × 4 cargos × 30 seeds.
    fn default() -> Self {
        Self {
            trucks: Truck::ALL.to_vec(),
            terrains: Terrain::ALL.to_vec(),
            attacks: AttackKind::ALL.to_vec(),
            cargos: Cargo::ALL.to_vec(),
            seeds: (1..=30).collect(),
        }
    }
}

impl DesignGrid {
    pub fn cells(&self) -> Vec<Condition> {
        let mut out = Vec::with_capacity(self.len());
        for &truck in &self.trucks {
            for &terrain in &self.terrains {
                for &attack in &self.attacks {
                    for &cargo in &self.cargos {
                        for &seed in &self.seeds {
                            out.push(Condition {
                                truck,
                                terrain,
                                attack,
                                cargo,
                                seed,
                            });
                        }
                    }
                }
            }
        }
        out
    }

    pub fn len(&self) -> usize {
        self.trucks.len() * self.terrains.len() * self.attacks.len() * self.cargos.len() * self.seeds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Timing {
    pub duration_s: f64,
    /// Simulation sample period.
    pub dt: f64,
    /// Keep every n-th sample in the written files.
    pub decimate: usize,
}

impl Default for Timing {
    fn default() -> Self {
        Self {
            duration_s: 900.0,
            dt: 0.02,
            decimate: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DriftConfig {
    pub sigma: f64,
    pub correlation_time_s: f64,
}

impl Default for DriftConfig {
    fn default() -> Self {
        Self {
            sigma: 0.02,
            correlation_time_s: 30.0,
        }
    }
}

/// Constant impacts for `duration_s` seconds; the last phase may omit the
/// duration and lasts to the end of the run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PresetPhase {
    #[serde(default)]
    pub duration_s: Option<f64>,
    pub malware: f64,
    pub bonware: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AttackPreset {
    pub start_s: f64,
    pub phases: Vec<PresetPhase>,
    /// Per-terrain factor `s`: malware impact scales by `1 + s * kg / 9000`.
    #[serde(default)]
    pub cargo_sensitivity: BTreeMap<Terrain, f64>,
}

impl AttackPreset {
    /// Piecewise-constant profile from the attack start to `duration`.
    pub fn profile(&self, terrain: Terrain, cargo: Cargo, duration: f64) -> Result<ImpactProfile> {
        if !(self.start_s >= 0.0 && self.start_s < duration) {
            return Err(Error::InvalidProfile(format!(
                "attack start {} outside the run [0, {duration})",
                self.start_s
            )));
        }
        if self.phases.is_empty() {
            return Err(Error::InvalidProfile("attack preset has no phases".into()));
        }
        let boost = 1.0 + self.cargo_sensitivity.get(&terrain).copied().unwrap_or(0.0) * cargo.kg() / 9000.0;
        let mut knots = vec![self.start_s];
        let mut impacts = Vec::new();
        for (j, ph) in self.phases.iter().enumerate() {
            let here = *knots.last().expect("nonempty");
            let last = j + 1 == self.phases.len();
            let next = match ph.duration_s {
                Some(d) if !last => here + d,
                Some(d) => (here + d).max(duration),
                None if last => duration,
                None => {
                    return Err(Error::InvalidProfile(format!(
                        "only the last preset phase may omit its duration (phase {j})"
                    )))
                }
            };
            if next >= duration {
                knots.push(duration);
                impacts.push((ph.malware * boost, ph.bonware));
                break;
            }
            knots.push(next);
            impacts.push((ph.malware * boost, ph.bonware));
        }
        if *knots.last().expect("nonempty") < duration {
            // Finite phases end before the run does; hold the last impacts.
            *knots.last_mut().expect("nonempty") = duration;
        }
        ImpactProfile::piecewise_constant(knots, &impacts)
    }
}

/// Default presets: the fan attack is a shallow, quickly corrected dip; the
/// engine attack dips deeply and then settles at 92% while still active; the
/// suspension attack degrades steadily until it ends, more so with cargo on
/// hilly and ascending terrain.
pub fn default_presets() -> BTreeMap<AttackKind, AttackPreset> {
    let phase = |d: Option<f64>, m: f64, b: f64| PresetPhase {
        duration_s: d,
        malware: m,
        bonware: b,
    };
    BTreeMap::from([
        (
            AttackKind::Fan,
            AttackPreset {
                start_s: 300.0,
                phases: vec![phase(Some(60.0), 0.004, 0.001), phase(None, 0.0, 0.05)],
                cargo_sensitivity: BTreeMap::new(),
            },
        ),
        (
            AttackKind::Ecu,
            AttackPreset {
                start_s: 300.0,
                phases: vec![phase(Some(30.0), 0.05, 0.005), phase(None, 0.01, 0.115)],
                cargo_sensitivity: BTreeMap::new(),
            },
        ),
        (
            AttackKind::Suspension,
            AttackPreset {
                start_s: 450.0,
                phases: vec![phase(Some(240.0), 0.004, 0.002), phase(None, 0.0, 0.03)],
                cargo_sensitivity: BTreeMap::from([(Terrain::Hilly, 0.6), (Terrain::SteadyAscent, 0.4)]),
            },
        ),
    ])
}

/// Everything needed to generate a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub design: DesignGrid,
    pub timing: Timing,
    pub drift: DriftConfig,
    pub presets: BTreeMap<AttackKind, AttackPreset>,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            design: DesignGrid::default(),
            timing: Timing::default(),
            drift: DriftConfig::default(),
            presets: default_presets(),
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let t = &self.timing;
        if !(t.duration_s > 0.0 && t.dt > 0.0 && t.dt < t.duration_s && t.decimate >= 1) {
            return Err(Error::InvalidArgument(format!("invalid timing {t:?}")));
        }
        if !(self.drift.sigma >= 0.0 && self.drift.correlation_time_s > 0.0) {
            return Err(Error::InvalidArgument(format!("invalid drift {:?}", self.drift)));
        }
        for &a in &self.design.attacks {
            if a == AttackKind::Baseline {
                continue;
            }
            let p = self
                .presets
                .get(&a)
                .ok_or_else(|| Error::InvalidArgument(format!("no preset for attack {a}")))?;
            for &terrain in &self.design.terrains {
                p.profile(terrain, Cargo::Heavy, t.duration_s)?;
            }
        }
        Ok(())
    }

    /// Samples per run at the simulation period.
    pub fn samples(&self) -> usize {
        let r = self.timing.duration_s / self.timing.dt;
        (if (r - r.round()).abs() < 1e-9 * r { r.round() } else { r.floor() }) as usize + 1
    }
}

/// One generated run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub condition: Condition,
    pub signals: BTreeMap<Signal, TimeSeries>,
    pub attack_start: Option<f64>,
    pub duration: f64,
}

fn truck_efficiency(truck: Truck) -> f64 {
    match truck {
        Truck::Light => 3.2,
        Truck::Medium => 2.4,
        Truck::Heavy => 1.8,
    }
}

/// Terrain multiplier at fraction `u` of the run.
fn terrain_shape(terrain: Terrain, t: f64, u: f64) -> f64 {
    match terrain {
        Terrain::FlatRoad => 1.0,
        Terrain::FlatOffRoad => 0.85,
        Terrain::Hilly => 0.9 * (1.0 + 0.03 * (2.0 * PI * t / 360.0).sin()),
        Terrain::SteadyAscent => 0.8 - 0.1 * u,
        Terrain::SteadyDescent => 1.2 + 0.1 * u,
    }
}

/// Cooling fan draw: a 1% dip for the first 12 s of every 72 s period.
/// A short duty cycle keeps a 72 s median on the majority level, even in the
/// shrunken windows at the ends, so filtering stays well conditioned.
fn fan_cycle(t: f64) -> f64 {
    if t.rem_euclid(72.0) < 12.0 {
        0.99
    } else {
        1.0
    }
}

/// Noise-free signal for a condition; the attack field is ignored.
pub fn baseline_profile(condition: &Condition, signal: Signal, timing: &Timing) -> Result<TimeSeries> {
    let n = SynthConfig {
        timing: *timing,
        ..SynthConfig::default()
    }
    .samples();
    let kg = condition.cargo.kg();
    let duration = timing.duration_s;
    TimeSeries::from_fn(0.0, timing.dt, n, |t| {
        let u = t / duration;
        match signal {
            Signal::FuelEfficiency => {
                truck_efficiency(condition.truck) * terrain_shape(condition.terrain, t, u) / (1.0 + kg / 25_000.0)
                    * fan_cycle(t)
            }
            Signal::Speed => {
                let target = if condition.terrain == Terrain::FlatRoad { 60.0 } else { 40.0 };
                let wander = match condition.terrain {
                    Terrain::Hilly => 1.0 - 0.03 * (2.0 * PI * t / 360.0).sin(),
                    _ => 1.0,
                };
                target * wander * (1.0 - 0.02 * kg / 9000.0)
            }
        }
    })
}

/// Functionality curve of an attack on the grid of `like`: one before
/// `attack_start`, the normalized model solution afterwards.
pub fn attack_curve(like: &TimeSeries, attack_start: f64, profile: &ImpactProfile) -> Result<TimeSeries> {
    let slack = 1e-9 * like.end().max(1.0);
    if (profile.start() - attack_start).abs() > slack || profile.end() < like.end() - slack {
        return Err(Error::Range {
            from: attack_start,
            to: like.end(),
            start: profile.start(),
            end: profile.end(),
        });
    }
    let state = ModelState::normalized(profile.start())?;
    let curve = crate::model::Curve::new(&state, profile)?;
    let values = like
        .times()
        .map(|t| if t <= attack_start { Ok(1.0) } else { curve.at(t.min(profile.end())) })
        .collect::<Result<Vec<_>>>()?;
    like.with_values(values)
}

/// Baseline multiplied pointwise by the attack's functionality curve.
pub fn apply_attack(baseline: &TimeSeries, attack_start: f64, profile: &ImpactProfile) -> Result<TimeSeries> {
    let f = attack_curve(baseline, attack_start, profile)?;
    baseline.zip_with(&f, |b, r| b * r)
}

/// Log-AR(1) drift `g` with stationary standard deviation `sigma` and the
/// given correlation time, on the grid of `like`.
pub fn drift_factors(like: &TimeSeries, seed: u64, sigma: f64, correlation_time: f64) -> Result<Vec<f64>> {
    if !(sigma >= 0.0 && sigma.is_finite() && correlation_time > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "drift needs sigma >= 0 and a positive correlation time (got {sigma}, {correlation_time})"
        )));
    }
    if sigma == 0.0 {
        return Ok(vec![1.0; like.len()]);
    }
    let phi = (-like.dt() / correlation_time).exp();
    let innovation = sigma * (1.0 - phi * phi).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g: f64 = sigma * Distribution::<f64>::sample(&StandardNormal, &mut rng);
    let mut out = Vec::with_capacity(like.len());
    for _ in 0..like.len() {
        out.push(g.exp());
        let z: f64 = Distribution::<f64>::sample(&StandardNormal, &mut rng);
        g = phi * g + innovation * z;
    }
    Ok(out)
}

/// Multiplies `series` by `exp(g(t))`, see [`drift_factors`].
pub fn driver_drift(series: &TimeSeries, seed: u64, sigma: f64, correlation_time: f64) -> Result<TimeSeries> {
    let factors = drift_factors(series, seed, sigma, correlation_time)?;
    series.with_values(series.values().iter().zip(&factors).map(|(v, f)| v * f).collect())
}

/// Generates one run. Both signals share the same drift realization.
pub fn generate_run(condition: &Condition, config: &SynthConfig) -> Result<RunRecord> {
    let timing = &config.timing;
    let mut signals = BTreeMap::new();
    let mut attack_start = None;
    let template = baseline_profile(condition, Signal::FuelEfficiency, timing)?;
    let attack = if condition.attack == AttackKind::Baseline {
        None
    } else {
        let preset = config
            .presets
            .get(&condition.attack)
            .ok_or_else(|| Error::InvalidArgument(format!("no preset for attack {}", condition.attack)))?;
        let profile = preset.profile(condition.terrain, condition.cargo, timing.duration_s)?;
        attack_start = Some(preset.start_s);
        Some(attack_curve(&template, preset.start_s, &profile)?)
    };
    let drift = drift_factors(
        &template,
        condition.drift_seed(),
        config.drift.sigma,
        config.drift.correlation_time_s,
    )?;
    for &signal in Signal::ALL {
        let base = if signal == Signal::FuelEfficiency {
            template.clone()
        } else {
            baseline_profile(condition, signal, timing)?
        };
        let values: Vec<f64> = base
            .values()
            .iter()
            .enumerate()
            .map(|(k, &v)| v * attack.as_ref().map_or(1.0, |a| a.values()[k]) * drift[k])
            .collect();
        let series = base.with_values(values)?;
        let series = if timing.decimate > 1 {
            series.decimate(timing.decimate)?
        } else {
            series
        };
        signals.insert(signal, series);
    }
    Ok(RunRecord {
        condition: *condition,
        signals,
        attack_start,
        duration: timing.duration_s,
    })
}

/// Normalized functionality generated by a preset, sampled like a run.
pub fn preset_curve(condition: &Condition, config: &SynthConfig) -> Result<Option<TimeSeries>> {
    if condition.attack == AttackKind::Baseline {
        return Ok(None);
    }
    let preset = config
        .presets
        .get(&condition.attack)
        .ok_or_else(|| Error::InvalidArgument(format!("no preset for attack {}", condition.attack)))?;
    let template = baseline_profile(condition, Signal::FuelEfficiency, &config.timing)?;
    let profile = preset.profile(condition.terrain, condition.cargo, config.timing.duration_s)?;
    let curve = attack_curve(&template, preset.start_s, &profile)?;
    Ok(Some(if config.timing.decimate > 1 {
        curve.decimate(config.timing.decimate)?
    } else {
        curve
    }))
}
