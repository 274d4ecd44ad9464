//! Weak-probe linear response, transmission coefficients, and the
//! time-domain two-tone oracle they are checked against.

use crate::dressed::Label;
use crate::error::{Error, Result};
use crate::lindblad::MasterEquation;
use crate::model::{
    collapse_operators, ket_bra, rotating_hamiltonian, to_angular, transition_dipole, Basis, CMat3, DecayChannels,
    DriveConfig, ProbeConfig, SystemParams, C64,
};
use crate::steady::{decoupled_level_constraint, default_t_final, solve_pair_system, solve_stationary_with, StationaryState};
use crate::tensor::{pair, zeta_tensor, PairTensor, Vec9};

/// Complex transmission of the probe at one (drive, probe) point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TransmissionPoint {
    /// ω_p/2π, GHz.
    pub omega_p: f64,
    pub t: C64,
    /// Ω_R,10/2π, GHz.
    pub drive_rabi10: f64,
}

/// First-order response ⟨σ_{μν}⟩_L to the probe, dressed basis.
#[derive(Clone, Debug)]
pub struct ProbeResponse {
    pub expectations: Vec9,
    pub condition: f64,
}

/// Linear-response solver around a fixed stationary state. Building it is
/// the per-drive cost; each probe frequency is one 9×9 solve.
#[derive(Clone, Debug)]
pub struct LinearResponse {
    pub stationary: StationaryState,
    zeta: PairTensor,
    decoupled: Option<Vec9>,
    omega_d: f64,
    rabi10: f64,
}

impl LinearResponse {
    pub fn new(params: &SystemParams, drive: &DriveConfig, channels: &DecayChannels) -> Result<Self> {
        let stationary = solve_stationary_with(params, drive, channels)?;
        Self::from_stationary(params, drive, stationary)
    }

    pub fn from_stationary(params: &SystemParams, drive: &DriveConfig, stationary: StationaryState) -> Result<Self> {
        let zeta = zeta_tensor(&stationary.model.sigma_t, Basis::Dressed)?;
        let decoupled = decoupled_level_constraint(params, &stationary.model.basis);
        Ok(LinearResponse {
            zeta,
            decoupled,
            omega_d: drive.omega_d,
            rabi10: drive.rabi10_ghz(params)?,
            stationary,
        })
    }

    /// Solves i(ω_{μν} + ω_p − ω_d)x − ξx = iF·ζ⟨σ⟩_s.
    pub fn response(&self, omega_p: f64, amplitude: f64) -> Result<ProbeResponse> {
        if !(amplitude.is_finite() && amplitude > 0.0) {
            return Err(Error::param("probe amplitude", "must be finite and > 0"));
        }
        if !omega_p.is_finite() {
            return Err(Error::param("omega_p", "must be finite"));
        }
        let m = self.stationary.model.generator(to_angular(omega_p - self.omega_d));
        let rhs = self.zeta.contract(&self.stationary.expectations) * C64::new(0.0, amplitude);
        let extra: Vec<(Vec9, C64)> = self.decoupled.iter().map(|c| (*c, C64::from(0.0))).collect();
        let (x, condition) = solve_pair_system(&m, &rhs, C64::from(0.0), &extra)?;
        Ok(ProbeResponse { expectations: x, condition })
    }

    /// t = 1 − (i/F) Σ ⟨μ|σ_t|ν⟩⟨σ_{μν}⟩_L. Independent of F; evaluated at F = 1.
    pub fn transmission(&self, omega_p: f64) -> Result<TransmissionPoint> {
        let t = self.transmission_with_amplitude(omega_p, 1.0)?;
        Ok(TransmissionPoint { omega_p, t, drive_rabi10: self.rabi10 })
    }

    pub fn transmission_with_amplitude(&self, omega_p: f64, amplitude: f64) -> Result<C64> {
        let r = self.response(omega_p, amplitude)?;
        let st = &self.stationary.model.sigma_t.matrix;
        let mut emitted = C64::from(0.0);
        for mu in 0..3 {
            for nu in 0..3 {
                emitted += st[(mu, nu)] * r.expectations[pair(mu, nu)];
            }
        }
        Ok(C64::from(1.0) - C64::new(0.0, 1.0 / amplitude) * emitted)
    }

    /// Closed-form transmission on the |lower,N⟩ ↔ |upper,N+1⟩ sideband:
    /// t = 1 + |⟨μ|σ_t|ν⟩|² (⟨σ_νν⟩_s − ⟨σ_μμ⟩_s) / ξ_{μν,μν}.
    pub fn sideband_transmission(&self, lower: Label, upper: Label) -> Result<C64> {
        if lower == upper {
            return Err(Error::SameState(lower));
        }
        let (mu, nu) = (lower.index(), upper.index());
        let model = &self.stationary.model;
        let dipole = model.sigma_t.matrix[(mu, nu)].norm_sqr();
        let pops = self.stationary.populations();
        let xi = model.xi.entry(mu, nu, mu, nu);
        if xi.re <= 0.0 {
            return Err(Error::param("xi", format!("ξ_({lower}{upper},{lower}{upper}) must be positive, got {xi}")));
        }
        Ok(C64::from(1.0) + C64::from(dipole * (pops[nu] - pops[mu])) / xi)
    }

    /// (ω_d + ω_upper − ω_lower)/2π, GHz.
    pub fn sideband_frequency(&self, lower: Label, upper: Label) -> f64 {
        let b = &self.stationary.model.basis;
        self.omega_d + crate::model::to_cycles(b.splitting(upper.index(), lower.index()))
    }
}

/// ⟨σ_{μν}⟩_L for the given probe, radiative decay only.
pub fn probe_response(params: &SystemParams, drive: &DriveConfig, probe: &ProbeConfig) -> Result<ProbeResponse> {
    LinearResponse::new(params, drive, &DecayChannels::radiative_only())?.response(probe.omega_p, probe.amplitude)
}

pub fn transmission(params: &SystemParams, drive: &DriveConfig, omega_p: f64) -> Result<TransmissionPoint> {
    LinearResponse::new(params, drive, &DecayChannels::radiative_only())?.transmission(omega_p)
}

pub fn sideband_transmission(params: &SystemParams, drive: &DriveConfig, lower: Label, upper: Label) -> Result<C64> {
    LinearResponse::new(params, drive, &DecayChannels::radiative_only())?.sideband_transmission(lower, upper)
}

/// Transmission of the drive tone itself, t = 1 − i⟨σ_t⟩_s / E.
pub fn drive_self_transmission(params: &SystemParams, drive: &DriveConfig, channels: &DecayChannels) -> Result<C64> {
    let e = drive.field(params)?;
    if e == 0.0 {
        return Err(Error::param("drive", "self-transmission is undefined at zero drive"));
    }
    let s = solve_stationary_with(params, drive, channels)?;
    Ok(C64::from(1.0) - C64::new(0.0, 1.0 / e) * s.dipole_expectation())
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TwoToneOptions {
    /// Settling time before the demodulation window, ns.
    pub warmup: f64,
    /// Minimum number of beat periods in the window.
    pub beat_periods: usize,
    /// Minimum window length in units of 1/γ_10.
    pub min_window_decay_times: f64,
    /// Longest window accepted, ns.
    pub max_window: f64,
    /// Step size as a fraction of the inverse fastest frequency.
    pub step_fraction: f64,
    pub channels: DecayChannels,
}

impl TwoToneOptions {
    pub fn for_params(params: &SystemParams) -> Self {
        TwoToneOptions {
            warmup: default_t_final(params),
            beat_periods: 20,
            min_window_decay_times: 10.0,
            max_window: 2e5,
            step_fraction: 0.05,
            channels: DecayChannels::radiative_only(),
        }
    }
}

/// Integrates the master equation with the probe term
/// F e^{i(ω_d−ω_p)t} σ_t† + h.c. added to H, then demodulates ⟨σ_t⟩(t)
/// by least squares on {1, e^{±i(ω_d−ω_p)t}} over the final window.
pub fn two_tone_oracle(
    params: &SystemParams,
    drive: &DriveConfig,
    probe: &ProbeConfig,
    options: &TwoToneOptions,
) -> Result<C64> {
    let f = probe.amplitude;
    let g10 = to_angular(params.gamma10);
    if !(f > 0.0 && f * f <= 1e-4 * g10) {
        return Err(Error::param("probe amplitude", format!("need 0 < F² ≤ 1e-4·γ_10, got F = {f}")));
    }
    let h0 = rotating_hamiltonian(params, drive)?.matrix;
    let st = transition_dipole(params)?.matrix;
    let sd = st.adjoint();
    let ops: Vec<CMat3> = collapse_operators(params, &options.channels)?.into_iter().map(|c| c.matrix).collect();
    let delta = to_angular(drive.omega_d - probe.omega_p);

    let window = if delta == 0.0 {
        options.min_window_decay_times / g10
    } else {
        let beats = options.beat_periods as f64 * std::f64::consts::TAU / delta.abs();
        beats.max(options.min_window_decay_times / g10)
    };
    if window > options.max_window {
        return Err(Error::DemodulationWindow {
            reason: format!("{window:.3e} ns needed for {} beat periods, limit {:.3e} ns", options.beat_periods, options.max_window),
        });
    }

    let fastest = h0.iter().map(|z| z.norm()).fold(delta.abs().max(g10), f64::max);
    let dt0 = options.step_fraction / fastest;
    let warm_steps = (options.warmup / dt0).ceil() as usize;
    let dt = options.warmup / warm_steps as f64;
    let win_steps = (window / dt).ceil() as usize;

    let rho0 = ket_bra(0, 0);
    let run = |phase0: f64| {
        let probe_h = |t: f64| {
            let phase = C64::from_polar(f, delta * t + phase0);
            h0 + sd * phase + st * phase.conj()
        };
        let me = MasterEquation::new(probe_h, &ops);
        let rho_w = me.run(&rho0, 0.0, dt, warm_steps, |_, _| {});
        // normal equations for y(t) ≈ c0 + c+ e^{iΔt} + c− e^{−iΔt}
        let nb = if delta == 0.0 { 1 } else { 3 };
        let mut gram = nalgebra::DMatrix::<C64>::zeros(nb, nb);
        let mut proj = nalgebra::DVector::<C64>::zeros(nb);
        let t0 = warm_steps as f64 * dt;
        me.run(&rho_w, t0, dt, win_steps, |t, rho| {
            let y = (rho * st).trace();
            let phi = [C64::from(1.0), C64::from_polar(1.0, delta * t), C64::from_polar(1.0, -delta * t)];
            for j in 0..nb {
                proj[j] += phi[j].conj() * y;
                for k in 0..nb {
                    gram[(j, k)] += phi[j].conj() * phi[k];
                }
            }
        });
        gram.lu()
            .solve(&proj)
            .ok_or_else(|| Error::DemodulationWindow { reason: "singular demodulation basis".into() })
    };

    let response = if delta == 0.0 {
        // The probe and its conjugate share the drive frequency here. The
        // response to F e^{iφ} alone is A in δy(φ) = A F e^{iφ} + B F e^{−iφ},
        // separated with two probe phases and a probe-free reference run.
        let me0 = MasterEquation::new(|_| h0, &ops);
        let r = me0.run(&rho0, 0.0, dt, warm_steps + win_steps, |_, _| {});
        let reference = (r * st).trace();
        let in_phase = run(0.0)?[0] - reference;
        let quadrature = run(std::f64::consts::FRAC_PI_2)?[0] - reference;
        (in_phase - C64::new(0.0, 1.0) * quadrature) * C64::from(0.5)
    } else {
        run(0.0)?[1]
    };
    Ok(C64::from(1.0) - C64::new(0.0, 1.0 / f) * response)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dressed::SIDEBAND_PAIRS;

    fn transmon_params() -> SystemParams {
        SystemParams::transmon()
    }

    #[test]
    fn response_is_linear_in_amplitude() {
        let p = transmon_params();
        let lr = LinearResponse::new(&p, &DriveConfig::rabi10(7.314, 0.3), &DecayChannels::default()).unwrap();
        let a = lr.response(7.6, 1e-3).unwrap().expectations;
        let b = lr.response(7.6, 2e-3).unwrap().expectations;
        assert!((b - a * C64::from(2.0)).norm() <= 1e-12 * b.norm());
        let t1 = lr.transmission_with_amplitude(7.6, 1e-3).unwrap();
        let t2 = lr.transmission_with_amplitude(7.6, 1e-6).unwrap();
        assert!((t1 - t2).norm() <= 1e-12 * t1.norm());
    }

    #[test]
    fn undriven_response_is_two_level_lorentzian() {
        // t = 1 − (γ/2)/(γ/2 − i(ω_p − ω_10)) for an undriven ideal emitter
        let p = transmon_params();
        let lr = LinearResponse::new(&p, &DriveConfig::rabi10(7.314, 0.0), &DecayChannels::default()).unwrap();
        let g = to_angular(p.gamma10);
        for wp in [7.45, 7.54, 7.558, 7.57, 7.7] {
            let t = lr.transmission(wp).unwrap().t;
            let d = to_angular(wp - p.omega10);
            let expect = C64::from(1.0) - C64::from(g / 2.0) / C64::new(g / 2.0, -d);
            assert!((t - expect).norm() < 1e-12, "{wp}: {t} vs {expect}");
        }
    }

    #[test]
    fn weak_drive_extinction() {
        let p = transmon_params();
        let t = transmission(&p, &DriveConfig::rabi10(7.314, 1e-4), p.omega10).unwrap();
        assert!(t.t.norm() < 1e-3);
    }

    #[test]
    fn off_resonant_response_is_small() {
        let p = transmon_params();
        let d = DriveConfig::rabi10(7.314, 0.5);
        let lr = LinearResponse::new(&p, &d, &DecayChannels::default()).unwrap();
        let g = to_angular(p.gamma10);
        let f = 1e-3 * g.sqrt();
        // 20 linewidths away from every sideband and from ω_d
        let mut candidates: Vec<f64> = SIDEBAND_PAIRS.iter().map(|&(a, b)| lr.sideband_frequency(a, b)).collect();
        candidates.push(7.314);
        let far = 7.314 + 3.0;
        assert!(candidates.iter().all(|c| (far - c).abs() > 20.0 * p.gamma10));
        let r = lr.response(far, f).unwrap();
        assert!(r.expectations.iter().all(|z| z.norm() < 1e-2 * f / g.sqrt()));
    }

    #[test]
    fn sideband_gain_and_loss_at_half_omega20() {
        let p = transmon_params();
        let d = DriveConfig::rabi10(7.314, 1.0);
        let up = sideband_transmission(&p, &d, Label::M, Label::E).unwrap();
        let down = sideband_transmission(&p, &d, Label::E, Label::M).unwrap();
        assert!(up.norm() > 1.0);
        assert!(down.norm() < 1.0);
        assert!(matches!(sideband_transmission(&p, &d, Label::M, Label::M), Err(Error::SameState(Label::M))));
    }

    #[test]
    fn self_transmission_limits() {
        let p = SystemParams { gamma21: 0.0, ..transmon_params() }.ideal();
        let weak = drive_self_transmission(&p, &DriveConfig::rabi10(p.omega10, 1e-5), &DecayChannels::default()).unwrap();
        assert!(weak.norm() < 1e-6);
        let strong = drive_self_transmission(&p, &DriveConfig::rabi10(p.omega10, 5.0), &DecayChannels::default()).unwrap();
        assert!((strong - C64::from(1.0)).norm() < 1e-3);
        assert!(drive_self_transmission(&p, &DriveConfig::rabi10(p.omega10, 0.0), &DecayChannels::default()).is_err());
    }

    #[test]
    fn two_tone_matches_linear_response_on_a_sideband() {
        let p = transmon_params();
        let d = DriveConfig::rabi10(7.314, 0.5);
        let lr = LinearResponse::new(&p, &d, &DecayChannels::default()).unwrap();
        let wp = lr.sideband_frequency(Label::M, Label::E);
        let t_lr = lr.transmission(wp).unwrap().t;
        let probe = ProbeConfig::weak(&p, wp);
        let t_oracle = two_tone_oracle(&p, &d, &probe, &TwoToneOptions::for_params(&p)).unwrap();
        assert!((t_lr - t_oracle).norm() < 1e-3, "{t_lr} vs {t_oracle}");
    }
}
