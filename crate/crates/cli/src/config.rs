//! Experiment config: a TOML file with optional `[design]`, `[timing]`,
//! `[drift]` and `[presets.<attack>]` sections. Anything left out takes its
//! default; presets given in the file replace the built-in preset of the
//! same attack only.

use anyhow::{anyhow, bail, Context, Result};
use resilquant_core::synth::{default_presets, AttackKind, AttackPreset, DesignGrid, DriftConfig, SynthConfig, Timing};
use serde::Deserialize;
use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    #[serde(default)]
    design: DesignGrid,
    #[serde(default)]
    timing: Timing,
    #[serde(default)]
    drift: DriftConfig,
    #[serde(default)]
    presets: BTreeMap<AttackKind, AttackPreset>,
}

pub fn load_config(path: &Path) -> Result<SynthConfig> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
    parse_config(&text).with_context(|| format!("config {}", path.display()))
}

/// Parses and validates a config. Syntax and type errors carry the line and
/// column of the offending text.
pub fn parse_config(text: &str) -> Result<SynthConfig> {
    let file: ConfigFile = toml::from_str(text).map_err(|e| {
        let at = e
            .span()
            .map(|s| {
                let before = &text[..s.start.min(text.len())];
                let line = before.matches('\n').count() + 1;
                let column = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
                format!("line {line}, column {column}: ")
            })
            .unwrap_or_default();
        anyhow!("{at}{}", e.message())
    })?;
    let mut presets = default_presets();
    presets.extend(file.presets);
    let config = SynthConfig {
        design: file.design,
        timing: file.timing,
        drift: file.drift,
        presets,
    };
    if config.design.is_empty() {
        bail!("empty design: every design list needs at least one entry");
    }
    config.validate()?;
    Ok(config)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_the_full_design() {
        let c = parse_config("").unwrap();
        assert_eq!(c, SynthConfig::default());
        assert_eq!(c.design.len(), 7200);
    }

    #[test]
    fn sections_override_defaults() {
        let c = parse_config(
            r#"
[design]
trucks = ["heavy"]
terrains = ["hilly"]
attacks = ["baseline", "ecu"]
cargos = ["none"]
seeds = [1, 2, 3]

[timing]
dt = 0.5

[presets.ecu]
start_s = 200.0
phases = [
  { duration_s = 20.0, malware = 0.06, bonware = 0.006 },
  { malware = 0.01, bonware = 0.115 },
]
"#,
        )
        .unwrap();
        assert_eq!(c.design.len(), 6);
        assert_eq!(c.timing.dt, 0.5);
        assert_eq!(c.timing.duration_s, 900.0);
        assert_eq!(c.presets[&AttackKind::Ecu].start_s, 200.0);
        assert_eq!(c.presets[&AttackKind::Fan], default_presets()[&AttackKind::Fan]);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let err = parse_config("[timing]\ndt = 0.5\nduration_s = \"long\"\n").unwrap_err();
        assert!(format!("{err:#}").contains("line 3"), "{err:#}");
        let err = parse_config("[design]\nseeds = [1]\ntrucks = [\"huge\"]\n").unwrap_err();
        assert!(format!("{err:#}").contains("line 3"), "{err:#}");
        let err = parse_config("[desing]\n").unwrap_err();
        assert!(format!("{err:#}").contains("line 1"), "{err:#}");
    }

    #[test]
    fn empty_design_is_rejected() {
        let err = parse_config("[design]\nseeds = []\n").unwrap_err();
        assert!(err.to_string().contains("empty design"));
    }
}
