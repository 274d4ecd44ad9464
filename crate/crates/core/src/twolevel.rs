//! Two-level resonance fluorescence: Bloch equations with nonradiative
//! decay and pure dephasing, closed-form drive transmission, and a damped
//! least-squares fit of rates and power calibration to transmission traces.
//!
//! Rabi frequencies here are Bloch Rabi frequencies Ω (drive term
//! −i(Ω/2)(1 − 2⟨σ_11⟩)), i.e. twice the 0↔1 element of H_q. With
//! H_01 = Ω_R,10/√2 that is Ω = √2·Ω_R,10; see [`bloch_rabi`].

use std::f64::consts::SQRT_2;
use std::io::Read;

use nalgebra::{DMatrix, DVector, Matrix3, SMatrix, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::model::{to_angular, PowerCalibration, SystemParams, C64};

/// Γ_1 = γ_10, Γ_1^tot = γ_10 + γ'_10, Γ_2 = Γ_1^tot/2 + γ_p, rad/ns.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlochRates {
    pub gamma1: f64,
    pub gamma1_tot: f64,
    pub gamma2: f64,
}

impl BlochRates {
    pub fn from_params(p: &SystemParams) -> Result<Self> {
        p.validate()?;
        let gamma1 = to_angular(p.gamma10);
        let gamma1_tot = gamma1 + to_angular(p.gamma10_nr);
        let rates = BlochRates { gamma1, gamma1_tot, gamma2: gamma1_tot / 2.0 + to_angular(p.gamma_phi) };
        rates.validate()?;
        Ok(rates)
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.gamma1 > 0.0
            && self.gamma1_tot >= self.gamma1
            && self.gamma2 >= self.gamma1_tot / 2.0
            && [self.gamma1, self.gamma1_tot, self.gamma2].iter().all(|v| v.is_finite());
        if !ok {
            return Err(Error::param("bloch rates", format!("need Γ2 ≥ Γ1tot/2 ≥ Γ1/2 > 0, got {self:?}")));
        }
        Ok(())
    }

    pub fn scaled(&self, k: f64) -> Self {
        BlochRates { gamma1: self.gamma1 * k, gamma1_tot: self.gamma1_tot * k, gamma2: self.gamma2 * k }
    }
}

/// Bloch Rabi frequency for a given Ω_R,10 (both in the same units).
pub fn bloch_rabi(rabi10: f64) -> f64 {
    SQRT_2 * rabi10
}

/// t = 1 − (Γ1/2Γ2)(1 + iδω/Γ2) / (1 + (δω/Γ2)² + Ω²/(Γ1tot Γ2)),
/// δω = ω_d − ω_10.
pub fn t_closed_form(rates: &BlochRates, delta_omega: f64, omega_r: f64) -> C64 {
    let y = delta_omega / rates.gamma2;
    let denom = 1.0 + y * y + omega_r * omega_r / (rates.gamma1_tot * rates.gamma2);
    C64::from(1.0) - C64::new(1.0, y) * (rates.gamma1 / (2.0 * rates.gamma2) / denom)
}

/// Stationary (⟨σ_01⟩, ⟨σ_11⟩) from the two Bloch equations, solved as a
/// real 3×3 system in (Re σ_01, Im σ_01, σ_11).
pub fn bloch_steady(rates: &BlochRates, delta_omega: f64, omega_r: f64) -> (C64, f64) {
    let (g2, g1t, d, om) = (rates.gamma2, rates.gamma1_tot, delta_omega, omega_r);
    let a = Matrix3::new(
        -g2, -d, 0.0, //
        d, -g2, om, //
        0.0, -om, -g1t,
    );
    let b = Vector3::new(0.0, om / 2.0, 0.0);
    let x = a.lu().solve(&b).expect("Bloch system is nonsingular for Γ2 > 0");
    (C64::new(x[0], x[1]), x[2])
}

/// t = 1 − i√γ_10 ⟨σ_01⟩_s / E with Ω = √γ_10·E, i.e. 1 − iΓ1⟨σ_01⟩_s/Ω.
pub fn t_from_bloch(rates: &BlochRates, delta_omega: f64, omega_r: f64) -> Result<C64> {
    if omega_r <= 0.0 {
        return Err(Error::param("omega_r", "transmission from the coherence needs Ω > 0"));
    }
    let (s01, _) = bloch_steady(rates, delta_omega, omega_r);
    Ok(C64::from(1.0) - C64::new(0.0, rates.gamma1 / omega_r) * s01)
}

/// One measured (or synthesized) transmission sample.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TracePoint {
    pub power_dbm: f64,
    /// Drive frequency minus the trace reference frequency, GHz.
    pub detuning: f64,
    pub t: C64,
}

/// Parameters the fit adjusts, all in GHz.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FitParams {
    pub gamma10: f64,
    pub gamma10_nr: f64,
    pub gamma_phi: f64,
    pub omega10: f64,
    pub anchor_rabi10: f64,
}

const NPAR: usize = 5;

impl FitParams {
    pub fn new(params: &SystemParams, calibration: &PowerCalibration) -> Self {
        FitParams {
            gamma10: params.gamma10,
            gamma10_nr: params.gamma10_nr,
            gamma_phi: params.gamma_phi,
            omega10: params.omega10,
            anchor_rabi10: calibration.anchor_rabi10,
        }
    }

    fn to_array(self) -> [f64; NPAR] {
        [self.gamma10, self.gamma10_nr, self.gamma_phi, self.omega10, self.anchor_rabi10]
    }

    fn from_array(a: [f64; NPAR]) -> Self {
        FitParams { gamma10: a[0], gamma10_nr: a[1], gamma_phi: a[2], omega10: a[3], anchor_rabi10: a[4] }
    }

    fn clamp(mut a: [f64; NPAR]) -> [f64; NPAR] {
        a[0] = a[0].max(1e-9);
        a[1] = a[1].max(0.0);
        a[2] = a[2].max(0.0);
        a[4] = a[4].max(1e-12);
        a
    }

    fn rates(&self) -> BlochRates {
        let gamma1 = to_angular(self.gamma10);
        let gamma1_tot = gamma1 + to_angular(self.gamma10_nr);
        BlochRates { gamma1, gamma1_tot, gamma2: gamma1_tot / 2.0 + to_angular(self.gamma_phi) }
    }

    /// Model transmission at a drive power and frequency offset.
    pub fn model(&self, anchor_dbm: f64, reference: f64, power_dbm: f64, detuning: f64) -> C64 {
        let cal = PowerCalibration { anchor_dbm, anchor_rabi10: self.anchor_rabi10 };
        let delta = to_angular(reference + detuning - self.omega10);
        let omega = bloch_rabi(to_angular(cal.rabi10(power_dbm)));
        t_closed_form(&self.rates(), delta, omega)
    }

    /// Weak-power, on-resonance |t| = 1 − Γ1/(2Γ2).
    pub fn extinction(&self) -> f64 {
        let r = self.rates();
        1.0 - r.gamma1 / (2.0 * r.gamma2)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FitOptions {
    /// Drive frequency at zero detuning, GHz.
    pub reference: f64,
    pub max_iterations: usize,
    /// Stop when the relative parameter step falls below this.
    pub step_tolerance: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { reference: 7.558, max_iterations: 200, step_tolerance: 1e-10 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitResult {
    pub params: SystemParams,
    pub calibration: PowerCalibration,
    /// Order: γ_10, γ'_10, γ_p, ω_10, anchor Ω_R,10 (GHz²).
    pub covariance: SMatrix<f64, 5, 5>,
    pub chi2: f64,
    pub n_points: usize,
    pub iterations: usize,
    pub converged: bool,
    /// Rank of JᵀJ; below 5 means some combination is unidentifiable.
    pub rank: usize,
}

impl FitResult {
    pub fn fit_params(&self) -> FitParams {
        FitParams::new(&self.params, &self.calibration)
    }

    pub fn std_errors(&self) -> [f64; 5] {
        std::array::from_fn(|k| self.covariance[(k, k)].max(0.0).sqrt())
    }
}

fn residuals(p: &FitParams, data: &[TracePoint], anchor_dbm: f64, reference: f64) -> DVector<f64> {
    let mut r = DVector::zeros(2 * data.len());
    for (k, d) in data.iter().enumerate() {
        let diff = p.model(anchor_dbm, reference, d.power_dbm, d.detuning) - d.t;
        r[2 * k] = diff.re;
        r[2 * k + 1] = diff.im;
    }
    r
}

fn jacobian(a: &[f64; NPAR], data: &[TracePoint], anchor_dbm: f64, reference: f64) -> DMatrix<f64> {
    let mut j = DMatrix::zeros(2 * data.len(), NPAR);
    let scale = [1e-3, 1e-3, 1e-3, 1e-3, 1e-3];
    for k in 0..NPAR {
        let h = 1e-6 * a[k].abs().max(scale[k]);
        let mut up = *a;
        let mut dn = *a;
        up[k] += h;
        dn[k] -= h;
        let ru = residuals(&FitParams::from_array(up), data, anchor_dbm, reference);
        let rd = residuals(&FitParams::from_array(dn), data, anchor_dbm, reference);
        j.set_column(k, &((ru - rd) / (2.0 * h)));
    }
    j
}

fn check_data(data: &[TracePoint]) -> Result<()> {
    let mut powers: Vec<f64> = data.iter().map(|d| d.power_dbm).collect();
    powers.sort_by(f64::total_cmp);
    powers.dedup();
    if powers.len() < 2 {
        return Err(Error::FitData(format!(
            "need at least 2 distinct powers to separate rates from calibration, got {}",
            powers.len()
        )));
    }
    for p in &powers {
        let n = data.iter().filter(|d| d.power_dbm == *p).count();
        if n < 10 {
            return Err(Error::FitData(format!("power {p} dBm has {n} detunings, need at least 10")));
        }
    }
    if data.iter().any(|d| !(d.power_dbm.is_finite() && d.detuning.is_finite() && d.t.re.is_finite() && d.t.im.is_finite())) {
        return Err(Error::FitData("non-finite sample".into()));
    }
    Ok(())
}

/// Levenberg–Marquardt fit of the closed-form transmission to complex
/// traces, unweighted. The calibration anchor power is held at the initial
/// guess's `anchor_dbm`; its Rabi frequency is fitted.
pub fn fit_traces(
    data: &[TracePoint],
    initial: &SystemParams,
    calibration: &PowerCalibration,
    options: &FitOptions,
) -> Result<FitResult> {
    check_data(data)?;
    initial.validate()?;
    calibration.validate()?;
    let anchor_dbm = calibration.anchor_dbm;
    let reference = options.reference;

    let mut a = FitParams::clamp(FitParams::new(initial, calibration).to_array());
    let mut r = residuals(&FitParams::from_array(a), data, anchor_dbm, reference);
    let mut chi2 = r.norm_squared();
    let mut lambda = 1e-3;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < options.max_iterations {
        iterations += 1;
        let j = jacobian(&a, data, anchor_dbm, reference);
        let jtj = j.transpose() * &j;
        let g = j.transpose() * &r;
        let mut accepted = false;
        for _ in 0..30 {
            let mut lhs = jtj.clone();
            for k in 0..NPAR {
                lhs[(k, k)] += lambda * jtj[(k, k)].max(1e-12);
            }
            let Some(step) = lhs.lu().solve(&(-&g)) else {
                lambda *= 10.0;
                continue;
            };
            let trial = FitParams::clamp(std::array::from_fn(|k| a[k] + step[k]));
            let rt = residuals(&FitParams::from_array(trial), data, anchor_dbm, reference);
            let chi2_t = rt.norm_squared();
            if chi2_t <= chi2 {
                let rel = (0..NPAR)
                    .map(|k| (trial[k] - a[k]).abs() / a[k].abs().max(1e-6))
                    .fold(0.0, f64::max);
                a = trial;
                r = rt;
                chi2 = chi2_t;
                lambda = (lambda / 10.0).max(1e-12);
                accepted = true;
                if rel < options.step_tolerance {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        if converged {
            break;
        }
        if !accepted {
            // no downhill step at any damping: at a minimum to machine precision
            converged = true;
            break;
        }
    }

    let j = jacobian(&a, data, anchor_dbm, reference);
    let jtj = j.transpose() * &j;
    let dof = (2 * data.len()).saturating_sub(NPAR).max(1) as f64;
    let svd = jtj.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let rank = svd.singular_values.iter().filter(|s| **s > smax * 1e-12).count();
    let pinv = svd.pseudo_inverse(smax * 1e-12).unwrap_or_else(|_| DMatrix::zeros(NPAR, NPAR));
    let cov_d = pinv * (chi2 / dof);
    let mut covariance = SMatrix::<f64, 5, 5>::zeros();
    for i in 0..NPAR {
        for k in 0..NPAR {
            covariance[(i, k)] = 0.5 * (cov_d[(i, k)] + cov_d[(k, i)]);
        }
    }

    let fp = FitParams::from_array(a);
    let params = SystemParams {
        gamma10: fp.gamma10,
        gamma10_nr: fp.gamma10_nr,
        gamma_phi: fp.gamma_phi,
        omega10: fp.omega10,
        ..*initial
    };
    Ok(FitResult {
        params,
        calibration: PowerCalibration { anchor_dbm, anchor_rabi10: fp.anchor_rabi10 },
        covariance,
        chi2,
        n_points: data.len(),
        iterations,
        converged,
        rank,
    })
}

/// Powers from `top_dbm` downward in `step_db` steps.
pub fn power_ladder(top_dbm: f64, step_db: f64, count: usize) -> Vec<f64> {
    (0..count).map(|k| top_dbm - step_db * k as f64).collect()
}

/// Noisy samples of the closed-form model. `noise` is the standard deviation
/// of each of Re t and Im t.
pub fn synthesize_traces(
    truth: &FitParams,
    anchor_dbm: f64,
    reference: f64,
    powers: &[f64],
    detunings: &[f64],
    noise: f64,
    seed: u64,
) -> Vec<TracePoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, noise.max(0.0)).expect("finite noise");
    let mut out = Vec::with_capacity(powers.len() * detunings.len());
    for &p in powers {
        for &d in detunings {
            let t = truth.model(anchor_dbm, reference, p, d);
            let n = if noise > 0.0 { C64::new(normal.sample(&mut rng), normal.sample(&mut rng)) } else { C64::from(0.0) };
            out.push(TracePoint { power_dbm: p, detuning: d, t: t + n });
        }
    }
    out
}

pub const TRACE_HEADER: [&str; 4] = ["power_dbm", "detuning_ghz", "re_t", "im_t"];

/// Reads `power_dbm, detuning_ghz, re_t, im_t` rows. A header row is
/// required; lines starting with `#` are skipped.
pub fn read_traces<R: Read>(reader: R) -> Result<Vec<TracePoint>> {
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .has_headers(true)
        .from_reader(reader);
    let header = rdr
        .headers()
        .map_err(|e| Error::Parse { line: 1, reason: e.to_string() })?
        .clone();
    let names: Vec<&str> = header.iter().collect();
    if names != TRACE_HEADER {
        return Err(Error::Parse {
            line: header.position().map_or(1, |p| p.line() as usize),
            reason: format!("expected header {}, got {}", TRACE_HEADER.join(","), names.join(",")),
        });
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            reason: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() != 4 {
            return Err(Error::Parse { line, reason: format!("expected 4 columns, got {}", rec.len()) });
        }
        let mut v = [0.0; 4];
        for (k, field) in rec.iter().enumerate() {
            v[k] = field
                .parse()
                .map_err(|_| Error::Parse { line, reason: format!("column {} is not a number: `{field}`", TRACE_HEADER[k]) })?;
        }
        out.push(TracePoint { power_dbm: v[0], detuning: v[1], t: C64::new(v[2], v[3]) });
    }
    Ok(out)
}

pub fn write_traces(data: &[TracePoint]) -> String {
    let mut s = TRACE_HEADER.join(",");
    s.push('\n');
    for d in data {
        s.push_str(&format!("{},{},{},{}\n", d.power_dbm, d.detuning, d.t.re, d.t.im));
    }
    s
}
