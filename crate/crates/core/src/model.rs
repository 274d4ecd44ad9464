//! Physical parameter records, unit conventions and the rotating-frame
//! operators of the three-level ladder emitter.
//!
//! Public values are quoted in cycles units (GHz, i.e. ω/2π). Everything
//! that enters a matrix is in angular units (rad/ns). Conversions go through
//! [`to_angular`] and [`to_cycles`] only.

use std::f64::consts::{PI, SQRT_2};

use nalgebra::Matrix3;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMat3 = Matrix3<C64>;

const TWO_PI: f64 = 2.0 * PI;

#[inline]
pub fn to_angular(cycles: f64) -> f64 {
    cycles * TWO_PI
}

#[inline]
pub fn to_cycles(angular: f64) -> f64 {
    angular / TWO_PI
}

/// Rates and transition frequencies of the emitter, all in GHz (cycles).
///
/// The 0↔2 rate is identically zero (parity selection rule) and has no field.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemParams {
    pub omega10: f64,
    pub omega21: f64,
    pub gamma10: f64,
    pub gamma21: f64,
    #[serde(default)]
    pub gamma10_nr: f64,
    #[serde(default)]
    pub gamma_phi: f64,
}

impl SystemParams {
    /// Transmon values used throughout: ω_10/2π = 7.558 GHz,
    /// ω_21/2π = 7.070 GHz, γ_10/2π = 40 MHz, γ_21 = 2γ_10, and the
    /// nonradiative / dephasing rates from the two-level fit.
    pub fn transmon() -> Self {
        SystemParams {
            omega10: 7.558,
            omega21: 7.070,
            gamma10: 0.040,
            gamma21: 0.080,
            gamma10_nr: 0.0005,
            gamma_phi: 0.001,
        }
    }

    pub fn omega20(&self) -> f64 {
        self.omega10 + self.omega21
    }

    /// Copy with γ'_10 and γ_p set to zero.
    pub fn ideal(mut self) -> Self {
        self.gamma10_nr = 0.0;
        self.gamma_phi = 0.0;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let freqs = [("omega10", self.omega10), ("omega21", self.omega21)];
        for (name, v) in freqs {
            if !v.is_finite() {
                return Err(Error::param(name, "must be finite"));
            }
            if v <= 0.0 {
                return Err(Error::param(name, format!("must be > 0, got {v}")));
            }
        }
        let rates = [
            ("gamma10", self.gamma10),
            ("gamma21", self.gamma21),
            ("gamma10_nr", self.gamma10_nr),
            ("gamma_phi", self.gamma_phi),
        ];
        for (name, v) in rates {
            if !v.is_finite() {
                return Err(Error::param(name, "must be finite"));
            }
            if v < 0.0 {
                return Err(Error::param(name, format!("must be >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// Maps drive power in dBm to Ω_R,10 through one anchor point:
/// Ω(P) = anchor_rabi10 · 10^((P − anchor_dbm)/20).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerCalibration {
    pub anchor_dbm: f64,
    /// Ω_R,10/2π at the anchor power, GHz.
    pub anchor_rabi10: f64,
}

impl PowerCalibration {
    /// −110 dBm ↔ Ω_R,10/2π = 0.113 GHz.
    pub fn transmon() -> Self {
        PowerCalibration {
            anchor_dbm: -110.0,
            anchor_rabi10: 0.113,
        }
    }

    pub fn rabi10(&self, dbm: f64) -> f64 {
        self.anchor_rabi10 * 10f64.powf((dbm - self.anchor_dbm) / 20.0)
    }

    pub fn dbm(&self, rabi10: f64) -> f64 {
        self.anchor_dbm + 20.0 * (rabi10 / self.anchor_rabi10).log10()
    }

    pub fn validate(&self) -> Result<()> {
        if !self.anchor_dbm.is_finite() {
            return Err(Error::param("anchor_dbm", "must be finite"));
        }
        if !(self.anchor_rabi10.is_finite() && self.anchor_rabi10 > 0.0) {
            return Err(Error::param("anchor_rabi10", "must be finite and > 0"));
        }
        Ok(())
    }
}

/// How the drive strength is expressed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", tag = "mode", content = "value")]
pub enum DriveAmplitude {
    /// Ω_R,10/2π in GHz.
    Rabi10(f64),
    /// Field amplitude E in √(rad/ns).
    Field(f64),
    /// Power at the emitter, dBm. Needs a [`PowerCalibration`].
    Dbm(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AmplitudeMode {
    Rabi10,
    Field,
    Dbm,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DriveConfig {
    /// ω_d/2π, GHz.
    pub omega_d: f64,
    pub amplitude: DriveAmplitude,
    pub calibration: Option<PowerCalibration>,
}

impl DriveConfig {
    pub fn rabi10(omega_d: f64, rabi10: f64) -> Self {
        DriveConfig {
            omega_d,
            amplitude: DriveAmplitude::Rabi10(rabi10),
            calibration: None,
        }
    }

    pub fn dbm(omega_d: f64, dbm: f64, calibration: PowerCalibration) -> Self {
        DriveConfig {
            omega_d,
            amplitude: DriveAmplitude::Dbm(dbm),
            calibration: Some(calibration),
        }
    }

    /// Ω_R,10/2π in GHz.
    pub fn rabi10_ghz(&self, params: &SystemParams) -> Result<f64> {
        let v = match self.amplitude {
            DriveAmplitude::Rabi10(r) => r,
            DriveAmplitude::Field(e) => to_cycles(params_gamma10_sqrt(params)? * e),
            DriveAmplitude::Dbm(p) => self.calibration.ok_or(Error::MissingCalibration)?.rabi10(p),
        };
        if !v.is_finite() || v < 0.0 {
            return Err(Error::param("drive", format!("Rabi frequency must be finite and >= 0, got {v}")));
        }
        Ok(v)
    }

    /// Field amplitude E in √(rad/ns), from Ω_R,10 = √γ_10 · E.
    pub fn field(&self, params: &SystemParams) -> Result<f64> {
        match self.amplitude {
            DriveAmplitude::Field(e) => {
                if !e.is_finite() || e < 0.0 {
                    return Err(Error::param("drive", format!("field must be finite and >= 0, got {e}")));
                }
                Ok(e)
            }
            _ => {
                let rabi = to_angular(self.rabi10_ghz(params)?);
                if rabi == 0.0 {
                    return Ok(0.0);
                }
                Ok(rabi / params_gamma10_sqrt(params)?)
            }
        }
    }

    /// Ω_R,21/2π = √(γ_21/γ_10) · Ω_R,10/2π.
    pub fn rabi21_ghz(&self, params: &SystemParams) -> Result<f64> {
        Ok(to_cycles(self.field(params)? * to_angular(params.gamma21).sqrt()))
    }

    /// The same drive expressed in another amplitude mode.
    pub fn convert(&self, mode: AmplitudeMode, params: &SystemParams) -> Result<DriveConfig> {
        let amplitude = match mode {
            AmplitudeMode::Rabi10 => DriveAmplitude::Rabi10(self.rabi10_ghz(params)?),
            AmplitudeMode::Field => DriveAmplitude::Field(self.field(params)?),
            AmplitudeMode::Dbm => {
                let cal = self.calibration.ok_or(Error::MissingCalibration)?;
                DriveAmplitude::Dbm(cal.dbm(self.rabi10_ghz(params)?))
            }
        };
        Ok(DriveConfig { amplitude, ..*self })
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.omega_d.is_finite() && self.omega_d > 0.0) {
            return Err(Error::param("omega_d", "must be finite and > 0"));
        }
        if let Some(c) = &self.calibration {
            c.validate()?;
        }
        Ok(())
    }
}

fn params_gamma10_sqrt(params: &SystemParams) -> Result<f64> {
    if params.gamma10 <= 0.0 {
        return Err(Error::param("gamma10", "field amplitude needs gamma10 > 0"));
    }
    Ok(to_angular(params.gamma10).sqrt())
}

/// Weak probe tone entering from one side of the line.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeConfig {
    /// ω_p/2π, GHz.
    pub omega_p: f64,
    /// F in √(rad/ns).
    pub amplitude: f64,
}

impl ProbeConfig {
    /// F = 1e−3·√γ_10, deep in the linear regime.
    pub fn weak(params: &SystemParams, omega_p: f64) -> Self {
        ProbeConfig {
            omega_p,
            amplitude: 1e-3 * to_angular(params.gamma10.max(1e-6)).sqrt(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Basis {
    Bare,
    Dressed,
}

/// A 3×3 complex matrix tagged with the basis it is written in.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Op3 {
    pub matrix: CMat3,
    pub basis: Basis,
}

impl Op3 {
    pub fn bare(matrix: CMat3) -> Self {
        Op3 { matrix, basis: Basis::Bare }
    }

    pub fn dressed(matrix: CMat3) -> Self {
        Op3 { matrix, basis: Basis::Dressed }
    }

    pub fn adjoint(&self) -> Op3 {
        Op3 { matrix: self.matrix.adjoint(), basis: self.basis }
    }

    pub fn hermiticity_defect(&self) -> f64 {
        (self.matrix - self.matrix.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn trace(&self) -> C64 {
        self.matrix.trace()
    }

    pub fn expect_basis(&self, basis: Basis) -> Result<()> {
        if self.basis != basis {
            return Err(Error::BasisMismatch { expected: basis, found: self.basis });
        }
        Ok(())
    }
}

/// |i⟩⟨j|.
pub fn ket_bra(i: usize, j: usize) -> CMat3 {
    let mut m = CMat3::zeros();
    m[(i, j)] = C64::new(1.0, 0.0);
    m
}

fn check_finite(params: &SystemParams, drive: &DriveConfig) -> Result<()> {
    params.validate()?;
    drive.validate()
}

/// H_q in the frame rotating at ω_d, bare basis, rad/ns:
/// diag(0, ω_10−ω_d, ω_20−2ω_d) + E(σ_t + σ_t†).
pub fn rotating_hamiltonian(params: &SystemParams, drive: &DriveConfig) -> Result<Op3> {
    check_finite(params, drive)?;
    let e = drive.field(params)?;
    let mut h = CMat3::zeros();
    h[(1, 1)] = C64::from(to_angular(params.omega10 - drive.omega_d));
    h[(2, 2)] = C64::from(to_angular(params.omega20() - 2.0 * drive.omega_d));
    let c01 = C64::from(e * (to_angular(params.gamma10) / 2.0).sqrt());
    let c12 = C64::from(e * (to_angular(params.gamma21) / 2.0).sqrt());
    h[(0, 1)] = c01;
    h[(1, 0)] = c01;
    h[(1, 2)] = c12;
    h[(2, 1)] = c12;
    Ok(Op3::bare(h))
}

/// σ_t = √(γ_10/2) σ_01 + √(γ_21/2) σ_12 in the bare basis, √(rad/ns).
pub fn transition_dipole(params: &SystemParams) -> Result<Op3> {
    params.validate()?;
    let mut s = CMat3::zeros();
    s[(0, 1)] = C64::from((to_angular(params.gamma10) / 2.0).sqrt());
    s[(1, 2)] = C64::from((to_angular(params.gamma21) / 2.0).sqrt());
    Ok(Op3::bare(s))
}

/// Which decay processes enter the master equation besides radiative decay
/// into the line. Radiative decay is always present.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecayChannels {
    /// Nonradiative 1→0 decay at γ'_10.
    #[serde(default)]
    pub nonradiative: bool,
    /// Pure dephasing at γ_p with dephasing operator σ_11 + 2σ_22.
    #[serde(default)]
    pub dephasing: bool,
    /// Negative control: flips the sign of the relaxation tensor in the
    /// Heisenberg-picture solvers only.
    #[doc(hidden)]
    #[serde(skip)]
    pub corrupt_relaxation: bool,
}

impl DecayChannels {
    pub fn radiative_only() -> Self {
        Self::default()
    }

    pub fn all() -> Self {
        DecayChannels { nonradiative: true, dephasing: true, corrupt_relaxation: false }
    }
}

/// Collapse operators C_k of the master equation
/// dρ/dt = −i[H,ρ] + Σ_k (C_k ρ C_k† − ½{C_k†C_k, ρ}), bare basis.
///
/// Radiative decay is C = √2 σ_t.
pub fn collapse_operators(params: &SystemParams, channels: &DecayChannels) -> Result<Vec<Op3>> {
    let st = transition_dipole(params)?;
    let mut ops = vec![Op3::bare(st.matrix * C64::from(SQRT_2))];
    if channels.nonradiative && params.gamma10_nr > 0.0 {
        ops.push(Op3::bare(ket_bra(0, 1) * C64::from(to_angular(params.gamma10_nr).sqrt())));
    }
    if channels.dephasing && params.gamma_phi > 0.0 {
        let n = ket_bra(1, 1) + ket_bra(2, 2) * C64::from(2.0);
        ops.push(Op3::bare(n * C64::from((2.0 * to_angular(params.gamma_phi)).sqrt())));
    }
    Ok(ops)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn transmon_params() -> SystemParams {
        SystemParams::transmon()
    }

    #[test]
    fn undriven_hamiltonian_at_half_omega20() {
        let h = rotating_hamiltonian(&transmon_params(), &DriveConfig::rabi10(7.314, 0.0)).unwrap();
        let m = h.matrix;
        assert_eq!(m[(0, 0)], C64::from(0.0));
        assert!((m[(1, 1)].re - to_angular(0.244)).abs() < 1e-12);
        assert!(m[(2, 2)].re.abs() < 1e-12);
        for (i, j) in [(0, 1), (1, 0), (1, 2), (2, 1), (0, 2), (2, 0)] {
            assert_eq!(m[(i, j)], C64::from(0.0));
        }
    }

    #[test]
    fn drive_matrix_elements() {
        let p = transmon_params();
        let h = rotating_hamiltonian(&p, &DriveConfig::rabi10(7.314, 0.1)).unwrap().matrix;
        let expected = to_angular(0.1) / SQRT_2;
        assert!((h[(0, 1)].norm() - expected).abs() < 1e-12);
        assert!((h[(1, 2)].norm() / h[(0, 1)].norm() - SQRT_2).abs() < 1e-12);
        assert_eq!(h, h.adjoint());
        assert_eq!(h[(0, 2)], C64::from(0.0));
        assert_eq!(h[(2, 0)], C64::from(0.0));
    }

    #[test]
    fn dipole_entries() {
        let s = transition_dipole(&transmon_params()).unwrap().matrix;
        assert!((s[(0, 1)].re - to_angular(0.020).sqrt()).abs() < 1e-14);
        assert!((s[(1, 2)].re - to_angular(0.040).sqrt()).abs() < 1e-14);
        let nonzero = s.iter().filter(|z| z.norm() > 0.0).count();
        assert_eq!(nonzero, 2);

        let sts = s.adjoint() * s;
        assert!(sts[(0, 0)].norm() < 1e-15);
        assert!((sts[(1, 1)].re - to_angular(0.040) / 2.0).abs() < 1e-14);
        assert!((sts[(2, 2)].re - to_angular(0.080) / 2.0).abs() < 1e-14);
        assert!((sts - CMat3::from_diagonal(&sts.diagonal())).norm() < 1e-15);
    }

    #[test]
    fn two_level_truncation() {
        let p = SystemParams { gamma21: 0.0, ..transmon_params() };
        let s = transition_dipole(&p).unwrap().matrix;
        assert_eq!(s.iter().filter(|z| z.norm() > 0.0).count(), 1);
    }

    #[test]
    fn rejects_bad_params() {
        let bad = SystemParams { gamma10: -1.0, ..transmon_params() };
        assert!(rotating_hamiltonian(&bad, &DriveConfig::rabi10(7.0, 0.1)).is_err());
        let nan = SystemParams { omega21: f64::NAN, ..transmon_params() };
        assert!(transition_dipole(&nan).is_err());
        let d = DriveConfig::rabi10(f64::NAN, 0.1);
        assert!(rotating_hamiltonian(&transmon_params(), &d).is_err());
    }

    #[test]
    fn dbm_needs_calibration() {
        let d = DriveConfig { omega_d: 7.3, amplitude: DriveAmplitude::Dbm(-110.0), calibration: None };
        assert_eq!(d.rabi10_ghz(&transmon_params()), Err(Error::MissingCalibration));
    }

    #[test]
    fn calibration_anchor() {
        let c = PowerCalibration::transmon();
        assert!((c.rabi10(-110.0) - 0.113).abs() < 1e-15);
        // +20 dB is ×10 in amplitude
        assert!((c.rabi10(-90.0) - 1.13).abs() < 1e-12);
    }

    #[test]
    fn unit_round_trip() {
        for x in [1e-6, 0.04, 7.314, 1234.5] {
            assert!((to_cycles(to_angular(x)) - x).abs() <= 1e-14 * x);
        }
    }

    #[test]
    fn collapse_ops_respect_switches() {
        let p = transmon_params();
        assert_eq!(collapse_operators(&p, &DecayChannels::radiative_only()).unwrap().len(), 1);
        assert_eq!(collapse_operators(&p, &DecayChannels::all()).unwrap().len(), 3);
    }
}
