//! Parallel grids over drive strength and probe frequency, and their text
//! exports.
//!
//! Every cell is a pure function of its coordinates, so results do not
//! depend on the worker count or the order rows finish in.

use std::fmt::Write as _;
use std::str::FromStr;

use nalgebra::Matrix3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dressed::{sideband_frequencies, DressedBasis, SidebandTable};
use crate::error::{Error, Result};
use crate::model::{CMat3, DecayChannels, DriveConfig, PowerCalibration, SystemParams, C64};
use crate::response::{drive_self_transmission, LinearResponse};
use crate::steady::solve_stationary_with;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriveScale {
    /// Ω_R,10/2π in GHz.
    #[default]
    Rabi10,
    /// Power in dBm, mapped through a calibration.
    Dbm,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriveAxis {
    pub min: f64,
    pub max: f64,
    pub n: usize,
    #[serde(default)]
    pub scale: DriveScale,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeAxis {
    pub min_ghz: f64,
    pub max_ghz: f64,
    pub n: usize,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriveFrequency {
    /// Two-photon resonance ω_d = ω_20/2.
    #[default]
    HalfOmega20,
    Omega10,
    /// ω_d/2π in GHz.
    Explicit(f64),
}

impl DriveFrequency {
    pub fn resolve(&self, params: &SystemParams) -> f64 {
        match *self {
            DriveFrequency::HalfOmega20 => params.omega20() / 2.0,
            DriveFrequency::Omega10 => params.omega10,
            DriveFrequency::Explicit(w) => w,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Output {
    TransmissionMap,
    DressedEnergies,
    Overlaps,
    Populations,
    Sidebands,
    SelfTransmission,
}

impl Output {
    pub const ALL: [Output; 6] = [
        Output::TransmissionMap,
        Output::DressedEnergies,
        Output::Overlaps,
        Output::Populations,
        Output::Sidebands,
        Output::SelfTransmission,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Output::TransmissionMap => "transmission_map",
            Output::DressedEnergies => "dressed_energies",
            Output::Overlaps => "overlaps",
            Output::Populations => "populations",
            Output::Sidebands => "sidebands",
            Output::SelfTransmission => "self_transmission",
        }
    }
}

impl FromStr for Output {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Output::ALL
            .into_iter()
            .find(|o| o.name() == s)
            .ok_or_else(|| Error::UnsupportedFormat(format!("unknown output `{s}`")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    pub drive_axis: DriveAxis,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probe_axis: Option<ProbeAxis>,
    #[serde(default)]
    pub drive_frequency: DriveFrequency,
    pub outputs: Vec<Output>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibration: Option<PowerCalibration>,
    #[serde(default)]
    pub channels: DecayChannels,
}

fn axis_values(min: f64, max: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![min];
    }
    let last = (n - 1) as f64;
    (0..n).map(|k| min + (max - min) * (k as f64 / last)).collect()
}

fn check_axis(name: &str, min: f64, max: f64, n: usize) -> Result<()> {
    if !(min.is_finite() && max.is_finite()) {
        return Err(Error::InvalidSweep(format!("{name}: bounds must be finite")));
    }
    match n {
        0 => Err(Error::InvalidSweep(format!("{name}: n must be at least 1"))),
        1 if min != max => Err(Error::InvalidSweep(format!("{name}: a single point needs min == max"))),
        1 => Ok(()),
        _ if max <= min => Err(Error::InvalidSweep(format!("{name}: axis must be strictly increasing"))),
        _ => Ok(()),
    }
}

impl SweepSpec {
    pub fn validate(&self) -> Result<()> {
        let a = &self.drive_axis;
        check_axis("drive_axis", a.min, a.max, a.n)?;
        match a.scale {
            DriveScale::Rabi10 if a.min < 0.0 => {
                return Err(Error::InvalidSweep("drive_axis: Rabi frequencies must be >= 0".into()));
            }
            DriveScale::Dbm if self.calibration.is_none() => return Err(Error::MissingCalibration),
            _ => {}
        }
        if let Some(c) = &self.calibration {
            c.validate()?;
        }
        if let Some(p) = &self.probe_axis {
            check_axis("probe_axis", p.min_ghz, p.max_ghz, p.n)?;
            if p.min_ghz <= 0.0 {
                return Err(Error::InvalidSweep("probe_axis: frequencies must be > 0".into()));
            }
        }
        if self.outputs.is_empty() {
            return Err(Error::InvalidSweep("no outputs requested".into()));
        }
        if self.wants(Output::TransmissionMap) && self.probe_axis.is_none() {
            return Err(Error::InvalidSweep("transmission_map needs a probe_axis".into()));
        }
        if let DriveFrequency::Explicit(w) = self.drive_frequency {
            if !(w.is_finite() && w > 0.0) {
                return Err(Error::InvalidSweep("explicit drive frequency must be > 0".into()));
            }
        }
        Ok(())
    }

    pub fn wants(&self, o: Output) -> bool {
        self.outputs.contains(&o)
    }

    pub fn drive_values(&self) -> Vec<f64> {
        axis_values(self.drive_axis.min, self.drive_axis.max, self.drive_axis.n)
    }

    pub fn probe_values(&self) -> Vec<f64> {
        self.probe_axis.map_or_else(Vec::new, |p| axis_values(p.min_ghz, p.max_ghz, p.n))
    }

    pub fn drive_at(&self, params: &SystemParams, value: f64) -> DriveConfig {
        let omega_d = self.drive_frequency.resolve(params);
        match self.drive_axis.scale {
            DriveScale::Rabi10 => DriveConfig { calibration: self.calibration, ..DriveConfig::rabi10(omega_d, value) },
            DriveScale::Dbm => DriveConfig::dbm(omega_d, value, self.calibration.unwrap_or(PowerCalibration::transmon())),
        }
    }
}

/// Everything needed to regenerate a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepMetadata {
    pub version: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<String>,
    pub params: SystemParams,
    pub spec: SweepSpec,
}

/// Per-drive-point results. `error` is set when the dressed or stationary
/// solve failed; the row's cells are then flagged.
#[derive(Clone, Debug, PartialEq)]
pub struct DriveRow {
    pub drive_value: f64,
    pub rabi10: f64,
    pub error: Option<Error>,
    /// Quasi-energies, GHz.
    pub energies: Option<[f64; 3]>,
    pub overlaps: Option<Matrix3<f64>>,
    /// Stationary ρ, dressed basis.
    pub rho: Option<CMat3>,
    /// Bare-state populations of the stationary state.
    pub bare_populations: Option<[f64; 3]>,
    pub sidebands: Option<SidebandTable>,
    pub self_transmission: Option<std::result::Result<C64, Error>>,
}

/// One probe cell. Failed cells carry NaN and `ok == false`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Cell {
    pub t: C64,
    pub ok: bool,
}

impl Cell {
    const FAILED: Cell = Cell { t: C64::new(f64::NAN, f64::NAN), ok: false };
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepResult {
    pub metadata: SweepMetadata,
    pub drive_values: Vec<f64>,
    pub probe_values: Vec<f64>,
    pub rows: Vec<DriveRow>,
    /// Row-major over (drive, probe); empty unless the map was requested.
    pub transmission: Vec<Cell>,
}

impl SweepResult {
    pub fn shape(&self) -> (usize, usize) {
        (self.drive_values.len(), self.probe_values.len())
    }

    pub fn cell(&self, drive: usize, probe: usize) -> Option<&Cell> {
        self.transmission.get(drive * self.probe_values.len() + probe)
    }

    pub fn failed_cells(&self) -> usize {
        self.transmission.iter().filter(|c| !c.ok).count()
    }
}

fn run_row(params: &SystemParams, spec: &SweepSpec, value: f64, probes: &[f64]) -> (DriveRow, Vec<Cell>) {
    let drive = spec.drive_at(params, value);
    let mut row = DriveRow {
        drive_value: value,
        rabi10: drive.rabi10_ghz(params).unwrap_or(f64::NAN),
        error: None,
        energies: None,
        overlaps: None,
        rho: None,
        bare_populations: None,
        sidebands: None,
        self_transmission: None,
    };
    let n_cells = if spec.wants(Output::TransmissionMap) { probes.len() } else { 0 };
    let fail = |mut row: DriveRow, e: Error| {
        row.error = Some(e);
        (row, vec![Cell::FAILED; n_cells])
    };

    let basis = match DressedBasis::new(params, &drive) {
        Ok(b) => b,
        Err(e) => return fail(row, e),
    };
    row.energies = Some(basis.energies.map(crate::model::to_cycles));
    row.overlaps = Some(basis.overlaps());
    let mut table = match sideband_frequencies(&basis) {
        Ok(t) => t,
        Err(e) => return fail(row, e),
    };

    let needs_state = spec.wants(Output::Populations) || spec.wants(Output::Sidebands) || n_cells > 0;
    let mut cells = Vec::new();
    if needs_state {
        let stationary = match solve_stationary_with(params, &drive, &spec.channels) {
            Ok(s) => s,
            Err(e) => return fail(row, e),
        };
        table.classify(stationary.populations());
        row.rho = Some(stationary.rho.matrix);
        let bare = stationary.rho_bare().matrix;
        row.bare_populations = Some([0, 1, 2].map(|k| bare[(k, k)].re));
        if n_cells > 0 {
            match LinearResponse::from_stationary(params, &drive, stationary) {
                Ok(lr) => {
                    cells = probes
                        .iter()
                        .map(|&wp| match lr.transmission(wp) {
                            Ok(p) if p.t.re.is_finite() && p.t.im.is_finite() => Cell { t: p.t, ok: true },
                            _ => Cell::FAILED,
                        })
                        .collect();
                }
                Err(e) => return fail(row, e),
            }
        }
    }
    row.sidebands = Some(table);
    if spec.wants(Output::SelfTransmission) {
        row.self_transmission = Some(drive_self_transmission(params, &drive, &spec.channels));
    }
    (row, cells)
}

/// Runs the sweep on the current rayon pool.
pub fn run_sweep(params: &SystemParams, spec: &SweepSpec) -> Result<SweepResult> {
    params.validate()?;
    spec.validate()?;
    let drive_values = spec.drive_values();
    let probe_values = spec.probe_values();
    let out: Vec<(DriveRow, Vec<Cell>)> =
        drive_values.par_iter().map(|&v| run_row(params, spec, v, &probe_values)).collect();
    let mut rows = Vec::with_capacity(out.len());
    let mut transmission = Vec::new();
    for (row, cells) in out {
        rows.push(row);
        transmission.extend(cells);
    }
    Ok(SweepResult {
        metadata: SweepMetadata {
            version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp: None,
            params: *params,
            spec: spec.clone(),
        },
        drive_values,
        probe_values,
        rows,
        transmission,
    })
}

/// Runs the sweep on a dedicated pool of `threads` workers.
pub fn run_sweep_threads(params: &SystemParams, spec: &SweepSpec, threads: usize) -> Result<SweepResult> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| Error::InvalidSweep(format!("thread pool: {e}")))?;
    pool.install(|| run_sweep(params, spec))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExportFormat {
    /// One row per cell: drive_value, probe_ghz, re_t, im_t, abs_t, flag.
    Long,
    /// |t| as a matrix, drive down, probe across.
    Matrix,
}

impl FromStr for ExportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "long" | "csv" => Ok(ExportFormat::Long),
            "matrix" => Ok(ExportFormat::Matrix),
            other => Err(Error::UnsupportedFormat(other.to_string())),
        }
    }
}

pub const LONG_HEADER: &str = "drive_value,probe_ghz,re_t,im_t,abs_t,flag";

fn metadata_block(out: &mut String, meta: &SweepMetadata, kind: &str) {
    let _ = writeln!(out, "# ladder-qed {kind}");
    let body = toml::to_string(meta).expect("metadata serializes");
    for line in body.lines() {
        if line.is_empty() {
            out.push_str("#\n");
        } else {
            let _ = writeln!(out, "# {line}");
        }
    }
}

fn flag(ok: bool) -> u8 {
    u8::from(!ok)
}

pub fn export(result: &SweepResult, format: ExportFormat) -> Result<String> {
    if !result.metadata.spec.wants(Output::TransmissionMap) {
        return Err(Error::UnsupportedFormat("sweep has no transmission map".into()));
    }
    let mut s = String::new();
    let (nd, np) = result.shape();
    match format {
        ExportFormat::Long => {
            metadata_block(&mut s, &result.metadata, "transmission long");
            s.push_str(LONG_HEADER);
            s.push('\n');
            for (i, d) in result.drive_values.iter().enumerate() {
                for (j, p) in result.probe_values.iter().enumerate() {
                    let c = &result.transmission[i * np + j];
                    let _ = writeln!(s, "{d},{p},{},{},{},{}", c.t.re, c.t.im, c.t.re.hypot(c.t.im), flag(c.ok));
                }
            }
        }
        ExportFormat::Matrix => {
            metadata_block(&mut s, &result.metadata, "transmission matrix abs_t");
            let _ = writeln!(s, "# rows = {nd} (drive_value), cols = {np} (probe_ghz), failed cells = NaN");
            s.push_str("drive\\probe");
            for p in &result.probe_values {
                let _ = write!(s, ",{p}");
            }
            s.push('\n');
            for (i, d) in result.drive_values.iter().enumerate() {
                let _ = write!(s, "{d}");
                for j in 0..np {
                    let c = &result.transmission[i * np + j];
                    let _ = write!(s, ",{}", if c.ok { c.t.norm() } else { f64::NAN });
                }
                s.push('\n');
            }
        }
    }
    Ok(s)
}

/// Reads a long-form export back. Only the transmission map and metadata
/// are recovered.
pub fn parse_long(text: &str) -> Result<SweepResult> {
    let mut meta = String::new();
    let mut lines = text.lines().enumerate().peekable();
    match lines.next() {
        Some((_, l)) if l.starts_with("# ladder-qed transmission long") => {}
        _ => return Err(Error::Parse { line: 1, reason: "not a long-form transmission export".into() }),
    }
    while let Some((_, l)) = lines.peek() {
        let Some(rest) = l.strip_prefix('#') else { break };
        meta.push_str(rest.strip_prefix(' ').unwrap_or(rest));
        meta.push('\n');
        lines.next();
    }
    let metadata: SweepMetadata = toml::from_str(&meta).map_err(|e| Error::Parse { line: 2, reason: e.to_string() })?;
    metadata.spec.validate()?;
    match lines.next() {
        Some((_, l)) if l == LONG_HEADER => {}
        Some((n, _)) => return Err(Error::Parse { line: n + 1, reason: format!("expected header `{LONG_HEADER}`") }),
        None => return Err(Error::Parse { line: 0, reason: "missing header".into() }),
    }
    let drive_values = metadata.spec.drive_values();
    let probe_values = metadata.spec.probe_values();
    let np = probe_values.len();
    let mut transmission = Vec::with_capacity(drive_values.len() * np);
    for (n, l) in lines {
        let line = n + 1;
        let f: Vec<&str> = l.split(',').collect();
        if f.len() != 6 {
            return Err(Error::Parse { line, reason: format!("expected 6 columns, got {}", f.len()) });
        }
        let num = |k: usize| -> Result<f64> {
            f[k].parse().map_err(|_| Error::Parse { line, reason: format!("bad number `{}`", f[k]) })
        };
        let k = transmission.len();
        if k >= drive_values.len() * np {
            return Err(Error::Parse { line, reason: "more rows than the grid holds".into() });
        }
        let (d, p) = (num(0)?, num(1)?);
        if d.to_bits() != drive_values[k / np].to_bits() || p.to_bits() != probe_values[k % np].to_bits() {
            return Err(Error::Parse { line, reason: "coordinates do not match the grid".into() });
        }
        let ok = match f[5] {
            "0" => true,
            "1" => false,
            other => return Err(Error::Parse { line, reason: format!("bad flag `{other}`") }),
        };
        transmission.push(Cell { t: C64::new(num(2)?, num(3)?), ok });
    }
    if transmission.len() != drive_values.len() * np {
        return Err(Error::Parse { line: 0, reason: format!("expected {} rows, got {}", drive_values.len() * np, transmission.len()) });
    }
    let rows = drive_values
        .iter()
        .map(|&v| DriveRow {
            drive_value: v,
            rabi10: metadata.spec.drive_at(&metadata.params, v).rabi10_ghz(&metadata.params).unwrap_or(f64::NAN),
            error: None,
            energies: None,
            overlaps: None,
            rho: None,
            bare_populations: None,
            sidebands: None,
            self_transmission: None,
        })
        .collect();
    Ok(SweepResult { metadata, drive_values, probe_values, rows, transmission })
}

/// Per-drive-point table for one of the non-map outputs.
pub fn export_table(result: &SweepResult, output: Output) -> Result<String> {
    if output == Output::TransmissionMap {
        return export(result, ExportFormat::Long);
    }
    if !result.metadata.spec.wants(output) {
        return Err(Error::UnsupportedFormat(format!("{} was not requested", output.name())));
    }
    let mut s = String::new();
    metadata_block(&mut s, &result.metadata, output.name());
    let header = match output {
        Output::DressedEnergies => "drive_value,rabi10_ghz,omega_g,omega_m,omega_e,flag",
        Output::Overlaps => "drive_value,rabi10_ghz,state,bare0,bare1,bare2,flag",
        Output::Populations => {
            "drive_value,rabi10_ghz,rho_gg,rho_mm,rho_ee,abs_rho_gm,abs_rho_me,abs_rho_ge,p0,p1,p2,flag"
        }
        Output::Sidebands => "drive_value,rabi10_ghz,lower,upper,frequency_ghz,kind,flag",
        Output::SelfTransmission => "drive_value,rabi10_ghz,re_t,im_t,abs_t,flag",
        Output::TransmissionMap => unreachable!(),
    };
    s.push_str(header);
    s.push('\n');
    let nan = f64::NAN;
    for r in &result.rows {
        let (d, w) = (r.drive_value, r.rabi10);
        let ok = r.error.is_none();
        match output {
            Output::DressedEnergies => {
                let e = r.energies.unwrap_or([nan; 3]);
                let _ = writeln!(s, "{d},{w},{},{},{},{}", e[0], e[1], e[2], flag(ok));
            }
            Output::Overlaps => {
                let o = r.overlaps.unwrap_or(Matrix3::repeat(nan));
                for (mu, name) in ["g", "m", "e"].iter().enumerate() {
                    let _ = writeln!(s, "{d},{w},{name},{},{},{},{}", o[(0, mu)], o[(1, mu)], o[(2, mu)], flag(ok));
                }
            }
            Output::Populations => {
                let rho = r.rho.unwrap_or(CMat3::repeat(C64::new(nan, nan)));
                let p = r.bare_populations.unwrap_or([nan; 3]);
                let _ = writeln!(
                    s,
                    "{d},{w},{},{},{},{},{},{},{},{},{},{}",
                    rho[(0, 0)].re,
                    rho[(1, 1)].re,
                    rho[(2, 2)].re,
                    rho[(0, 1)].norm(),
                    rho[(1, 2)].norm(),
                    rho[(0, 2)].norm(),
                    p[0],
                    p[1],
                    p[2],
                    flag(ok && r.rho.is_some())
                );
            }
            Output::Sidebands => match &r.sidebands {
                Some(t) => {
                    for sb in &t.entries {
                        let _ = writeln!(s, "{d},{w},{},{},{},{},{}", sb.lower, sb.upper, sb.frequency, sb.kind, flag(ok));
                    }
                }
                None => {
                    let _ = writeln!(s, "{d},{w},,,NaN,unknown,1");
                }
            },
            Output::SelfTransmission => match r.self_transmission {
                Some(Ok(t)) => {
                    let _ = writeln!(s, "{d},{w},{},{},{},0", t.re, t.im, t.re.hypot(t.im));
                }
                _ => {
                    let _ = writeln!(s, "{d},{w},NaN,NaN,NaN,1");
                }
            },
            Output::TransmissionMap => unreachable!(),
        }
    }
    Ok(s)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(nd: usize, np: usize) -> SweepSpec {
        SweepSpec {
            drive_axis: DriveAxis { min: 0.05, max: 1.0, n: nd, scale: DriveScale::Rabi10 },
            probe_axis: Some(ProbeAxis { min_ghz: 6.6, max_ghz: 8.1, n: np }),
            drive_frequency: DriveFrequency::HalfOmega20,
            outputs: vec![Output::TransmissionMap],
            calibration: None,
            channels: DecayChannels::default(),
        }
    }

    #[test]
    fn axis_rules() {
        let mut s = spec(3, 3);
        s.drive_axis.max = 0.05;
        assert!(matches!(s.validate(), Err(Error::InvalidSweep(_))));
        let mut s = spec(3, 3);
        s.drive_axis.scale = DriveScale::Dbm;
        assert_eq!(s.validate(), Err(Error::MissingCalibration));
        let mut s = spec(3, 3);
        s.probe_axis = None;
        assert!(s.validate().is_err());
        assert_eq!(axis_values(1.0, 2.0, 5), vec![1.0, 1.25, 1.5, 1.75, 2.0]);
    }

    #[test]
    fn metadata_round_trips_through_toml() {
        let mut s = spec(4, 5);
        s.drive_frequency = DriveFrequency::Explicit(7.3);
        s.calibration = Some(PowerCalibration::transmon());
        let meta = SweepMetadata { version: "x".into(), timestamp: None, params: SystemParams::transmon(), spec: s };
        let text = toml::to_string(&meta).unwrap();
        assert_eq!(toml::from_str::<SweepMetadata>(&text).unwrap(), meta);
    }

    #[test]
    fn zero_drive_self_transmission_is_flagged() {
        let mut s = spec(2, 2);
        s.drive_axis.min = 0.0;
        s.outputs = vec![Output::SelfTransmission];
        s.probe_axis = None;
        let r = run_sweep(&SystemParams::transmon(), &s).unwrap();
        assert!(matches!(r.rows[0].self_transmission, Some(Err(_))));
        assert!(matches!(r.rows[1].self_transmission, Some(Ok(_))));
        let text = export_table(&r, Output::SelfTransmission).unwrap();
        assert!(text.lines().any(|l| l.ends_with(",1")));
    }
}
