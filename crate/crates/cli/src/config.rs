//! Run configuration: a TOML file, then `--set key=value` overrides.

use std::path::PathBuf;

use ladder_qed::model::{DecayChannels, DriveAmplitude, DriveConfig, PowerCalibration, ProbeConfig, SystemParams};
use ladder_qed::sweep::{DriveAxis, DriveFrequency, Output, ProbeAxis, SweepSpec};
use ladder_qed::twolevel::{FitOptions, FitParams};
use serde::Deserialize;

#[derive(Debug, thiserror::Error)]
#[error(
    "{}{}{message}",
    .path.as_ref().map(|p| format!("{}: ", p.display())).unwrap_or_default(),
    .line.map(|l| format!("line {l}: ")).unwrap_or_default()
)]
pub struct ConfigError {
    pub path: Option<PathBuf>,
    pub line: Option<usize>,
    pub message: String,
}

impl ConfigError {
    pub fn new(line: Option<usize>, message: impl Into<String>) -> Self {
        ConfigError { path: None, line, message: message.into() }
    }
}

/// `[system]` with every key optional; missing keys take the transmon values.
#[derive(Clone, Copy, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    pub omega10: Option<f64>,
    pub omega21: Option<f64>,
    pub gamma10: Option<f64>,
    pub gamma21: Option<f64>,
    pub gamma10_nr: Option<f64>,
    pub gamma_phi: Option<f64>,
}

impl SystemSection {
    pub fn params(&self) -> SystemParams {
        let d = SystemParams::transmon();
        SystemParams {
            omega10: self.omega10.unwrap_or(d.omega10),
            omega21: self.omega21.unwrap_or(d.omega21),
            gamma10: self.gamma10.unwrap_or(d.gamma10),
            gamma21: self.gamma21.unwrap_or(d.gamma21),
            gamma10_nr: self.gamma10_nr.unwrap_or(d.gamma10_nr),
            gamma_phi: self.gamma_phi.unwrap_or(d.gamma_phi),
        }
    }
}

#[derive(Clone, Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriveSection {
    #[serde(default)]
    pub frequency: DriveFrequency,
    pub rabi10: Option<f64>,
    pub dbm: Option<f64>,
    pub field: Option<f64>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeSection {
    pub omega_p: f64,
    pub amplitude: Option<f64>,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub drive_axis: DriveAxis,
    pub probe_axis: Option<ProbeAxis>,
    /// Defaults to the `[drive]` frequency.
    pub drive_frequency: Option<DriveFrequency>,
}

#[derive(Clone, Copy, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialGuess {
    pub gamma10: f64,
    pub gamma10_nr: f64,
    pub gamma_phi: f64,
    pub omega10: f64,
    pub anchor_rabi10: f64,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSection {
    /// Drive frequency at zero detuning, GHz; defaults to ω_10.
    pub reference_ghz: Option<f64>,
    pub initial: Option<InitialGuess>,
    #[serde(default = "defaults::top_dbm")]
    pub top_dbm: f64,
    #[serde(default = "defaults::step_db")]
    pub step_db: f64,
    #[serde(default = "defaults::powers")]
    pub powers: usize,
    #[serde(default = "defaults::detuning_span")]
    pub detuning_span_ghz: f64,
    #[serde(default = "defaults::detunings")]
    pub detunings: usize,
    #[serde(default = "defaults::noise")]
    pub noise: f64,
}

mod defaults {
    pub fn top_dbm() -> f64 {
        -108.0
    }
    pub fn step_db() -> f64 {
        5.0
    }
    pub fn powers() -> usize {
        8
    }
    pub fn detuning_span() -> f64 {
        0.15
    }
    pub fn detunings() -> usize {
        61
    }
    pub fn noise() -> f64 {
        0.01
    }
}

impl Default for FitSection {
    fn default() -> Self {
        FitSection {
            reference_ghz: None,
            initial: None,
            top_dbm: defaults::top_dbm(),
            step_db: defaults::step_db(),
            powers: defaults::powers(),
            detuning_span_ghz: defaults::detuning_span(),
            detunings: defaults::detunings(),
            noise: defaults::noise(),
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, rename = "system")]
    pub system_section: SystemSection,
    #[serde(skip, default = "SystemParams::transmon")]
    pub system: SystemParams,
    #[serde(default)]
    pub drive: DriveSection,
    pub calibration: Option<PowerCalibration>,
    #[serde(default)]
    pub channels: DecayChannels,
    pub probe: Option<ProbeSection>,
    pub sweep: Option<SweepSection>,
    pub fit: Option<FitSection>,
    pub output_path: Option<PathBuf>,
    #[serde(default)]
    pub seed: u64,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

/// First line assigning `key`, for pointing validation errors at the file.
fn line_of_key(text: &str, key: &str) -> Option<usize> {
    text.lines().position(|l| {
        let l = l.trim_start();
        l.strip_prefix(key).is_some_and(|rest| rest.trim_start().starts_with('='))
    })
    .map(|i| i + 1)
}

fn apply_override(table: &mut toml::Table, spec: &str) -> Result<(), ConfigError> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| ConfigError::new(None, format!("--set `{spec}`: expected KEY=VALUE")))?;
    let key = key.trim();
    let raw = raw.trim();
    // parse the value as TOML; bare words become strings
    let value = format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()));
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(ConfigError::new(None, format!("--set `{spec}`: empty key segment")));
    }
    let mut cur = table;
    for p in &parts[..parts.len() - 1] {
        let entry = cur.entry(p.to_string()).or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| ConfigError::new(None, format!("--set `{spec}`: `{p}` is not a table")))?;
    }
    cur.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

impl RunConfig {
    /// Parses `text`, applies overrides, and validates.
    pub fn parse(text: &str, overrides: &[String]) -> Result<Self, ConfigError> {
        let from_text: RunConfig = toml::from_str(text).map_err(|e| {
            ConfigError::new(e.span().map(|s| line_of(text, s.start)), e.message().to_string())
        })?;
        let cfg = if overrides.is_empty() {
            from_text
        } else {
            let mut table: toml::Table = text.parse().expect("already parsed");
            for o in overrides {
                apply_override(&mut table, o)?;
            }
            toml::Value::Table(table)
                .try_into()
                .map_err(|e: toml::de::Error| ConfigError::new(None, format!("after --set: {}", e.message())))?
        };
        let mut cfg: RunConfig = cfg;
        cfg.system = cfg.system_section.params();
        cfg.validate(text)?;
        Ok(cfg)
    }

    fn validate(&self, text: &str) -> Result<(), ConfigError> {
        let at = |key: &str, e: ladder_qed::Error| {
            let named = match &e {
                ladder_qed::Error::InvalidParameter { name, .. } => line_of_key(text, name),
                _ => None,
            };
            ConfigError::new(named.or_else(|| line_of_key(text, key)), e.to_string())
        };
        self.system.validate().map_err(|e| at("omega10", e))?;
        if let Some(c) = &self.calibration {
            c.validate().map_err(|e| at("anchor_dbm", e))?;
        }
        let set = [self.drive.rabi10, self.drive.dbm, self.drive.field].iter().filter(|v| v.is_some()).count();
        if set > 1 {
            return Err(ConfigError::new(
                line_of_key(text, "rabi10").or(line_of_key(text, "dbm")),
                "[drive]: give only one of rabi10, dbm, field",
            ));
        }
        if self.drive.dbm.is_some() && self.calibration.is_none() {
            return Err(ConfigError::new(line_of_key(text, "dbm"), "[drive] dbm needs a [calibration] section"));
        }
        self.drive_config().validate().map_err(|e| at("frequency", e))?;
        if let Some(p) = &self.probe {
            if !(p.omega_p.is_finite() && p.omega_p > 0.0) {
                return Err(ConfigError::new(line_of_key(text, "omega_p"), "[probe] omega_p must be > 0"));
            }
        }
        if let Some(s) = &self.sweep {
            let spec = self.sweep_spec_from(s, vec![Output::DressedEnergies]);
            spec.validate().map_err(|e| at("drive_axis", e))?;
        }
        if let Some(f) = &self.fit {
            if f.powers < 2 || f.detunings < 10 || f.noise.is_nan() || f.noise < 0.0 || f.detuning_span_ghz.is_nan() || f.detuning_span_ghz <= 0.0 {
                return Err(ConfigError::new(
                    line_of_key(text, "powers"),
                    "[fit] needs powers >= 2, detunings >= 10, noise >= 0, detuning_span_ghz > 0",
                ));
            }
        }
        Ok(())
    }

    pub fn drive_config(&self) -> DriveConfig {
        let omega_d = self.drive.frequency.resolve(&self.system);
        let amplitude = match (self.drive.rabi10, self.drive.dbm, self.drive.field) {
            (_, Some(p), _) => DriveAmplitude::Dbm(p),
            (_, _, Some(e)) => DriveAmplitude::Field(e),
            (r, _, _) => DriveAmplitude::Rabi10(r.unwrap_or(0.5)),
        };
        DriveConfig { omega_d, amplitude, calibration: self.calibration }
    }

    pub fn probe_config(&self) -> Option<ProbeConfig> {
        self.probe.as_ref().map(|p| {
            let weak = ProbeConfig::weak(&self.system, p.omega_p);
            ProbeConfig { amplitude: p.amplitude.unwrap_or(weak.amplitude), ..weak }
        })
    }

    fn sweep_spec_from(&self, s: &SweepSection, outputs: Vec<Output>) -> SweepSpec {
        SweepSpec {
            drive_axis: s.drive_axis,
            probe_axis: s.probe_axis,
            drive_frequency: s.drive_frequency.unwrap_or(self.drive.frequency),
            outputs,
            calibration: self.calibration,
            channels: self.channels,
        }
    }

    /// Sweep for the given outputs; without a `[sweep]` section, Ω_R,10
    /// from 0 to 2 GHz over 201 points and probe 6.0–9.0 GHz.
    pub fn sweep_spec(&self, outputs: Vec<Output>) -> SweepSpec {
        let default = SweepSection {
            drive_axis: DriveAxis { min: 0.0, max: 2.0, n: 201, scale: Default::default() },
            probe_axis: Some(ProbeAxis { min_ghz: 6.0, max_ghz: 9.0, n: 301 }),
            drive_frequency: None,
        };
        self.sweep_spec_from(self.sweep.as_ref().unwrap_or(&default), outputs)
    }

    pub fn fit_section(&self) -> FitSection {
        self.fit.clone().unwrap_or_default()
    }

    pub fn fit_options(&self) -> FitOptions {
        FitOptions { reference: self.fit_section().reference_ghz.unwrap_or(self.system.omega10), ..FitOptions::default() }
    }

    pub fn calibration_or_default(&self) -> PowerCalibration {
        self.calibration.unwrap_or(PowerCalibration::transmon())
    }

    /// Initial fit guess as (params, calibration).
    pub fn fit_start(&self) -> (SystemParams, PowerCalibration) {
        let cal = self.calibration_or_default();
        match self.fit_section().initial {
            Some(g) => (
                SystemParams {
                    gamma10: g.gamma10,
                    gamma10_nr: g.gamma10_nr,
                    gamma_phi: g.gamma_phi,
                    omega10: g.omega10,
                    ..self.system
                },
                PowerCalibration { anchor_rabi10: g.anchor_rabi10, ..cal },
            ),
            None => (self.system, cal),
        }
    }

    pub fn fit_truth(&self) -> FitParams {
        FitParams::new(&self.system, &self.calibration_or_default())
    }
}
