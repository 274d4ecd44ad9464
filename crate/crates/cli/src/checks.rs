//! Self-check suites run by `selfcheck`.

use ladder_qed::dressed::SIDEBAND_PAIRS;
use ladder_qed::model::{to_angular, DecayChannels, DriveConfig, SystemParams};
use ladder_qed::registry::{stationary_solvers, transmission_methods};
use ladder_qed::response::{drive_self_transmission, LinearResponse};
use ladder_qed::twolevel::{bloch_rabi, t_closed_form, BlochRates};

pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn line(&self) -> String {
        format!("{} {}: {}", if self.passed { "PASS" } else { "FAIL" }, self.name, self.detail)
    }
}

fn guard(name: &'static str, f: impl FnOnce() -> ladder_qed::Result<(bool, String)>) -> Check {
    match f() {
        Ok((passed, detail)) => Check { name, passed, detail },
        Err(e) => Check { name, passed: false, detail: format!("solver error: {e}") },
    }
}

fn drives(p: &SystemParams) -> Vec<DriveConfig> {
    let mut out = Vec::new();
    for omega_d in [p.omega20() / 2.0, p.omega10] {
        for r in [0.05, 0.3, 1.0] {
            out.push(DriveConfig::rabi10(omega_d, r));
        }
    }
    out
}

/// Dressed-basis stationary solve against master-equation evolution.
pub fn oracle_equivalence(p: &SystemParams, channels: &DecayChannels) -> Check {
    guard("stationary-vs-evolution", || {
        let reg = stationary_solvers();
        let (lin, evo) = (reg.get("linear")?, reg.get("evolve")?);
        let oracle_channels = DecayChannels { corrupt_relaxation: false, ..*channels };
        let mut worst: f64 = 0.0;
        for d in drives(p) {
            let a = lin.solve(p, &d, channels)?;
            let b = evo.solve(p, &d, &oracle_channels)?;
            worst = worst.max((a.matrix - b.matrix).iter().map(|z| z.norm()).fold(0.0, f64::max));
        }
        Ok((worst < 1e-6, format!("6 drive points, max |Δρ| = {worst:.2e} (tol 1e-6)")))
    })
}

fn closed_form_error(p: &SystemParams, rabi10: f64) -> ladder_qed::Result<f64> {
    let d = DriveConfig::rabi10(p.omega20() / 2.0, rabi10);
    let lr = LinearResponse::new(p, &d, &DecayChannels::radiative_only())?;
    let mut worst: f64 = 0.0;
    for (a, b) in SIDEBAND_PAIRS {
        // no line at all when the dipole vanishes (decoupled level)
        if lr.stationary.model.sigma_t.matrix[(a.index(), b.index())].norm_sqr() < 1e-12 {
            continue;
        }
        let full = lr.transmission(lr.sideband_frequency(a, b))?.t.norm() - 1.0;
        let closed = lr.sideband_transmission(a, b)?.norm() - 1.0;
        worst = worst.max(((closed - full) / full).abs());
    }
    Ok(worst)
}

/// Closed-form sideband transmission against the full response where the
/// sidebands are resolved (rates scaled down tenfold), plus the deviation
/// at the configured rates for information.
pub fn closed_form_reduction(p: &SystemParams) -> Check {
    guard("closed-form-sidebands", || {
        let resolved = SystemParams { gamma10: p.gamma10 * 0.1, gamma21: p.gamma21 * 0.1, ..p.ideal() };
        let r = closed_form_error(&resolved, 0.5)?;
        let at_config = closed_form_error(p, 0.5)?;
        Ok((
            r < 0.01,
            format!(
                "resolved regime max rel. error {r:.2e} (tol 1e-2); configured rates {at_config:.3} (not gated: neighbouring sidebands overlap)"
            ),
        ))
    })
}

/// Three-level self-transmission with a decoupled upper level against the
/// two-level closed form.
pub fn two_level_equivalence(p: &SystemParams) -> Check {
    guard("two-level-equivalence", || {
        let q = SystemParams { gamma21: 0.0, ..*p };
        let rates = BlochRates::from_params(&q)?;
        let mut worst: f64 = 0.0;
        for det in [-0.05, 0.0, 0.02] {
            for r in [0.01, 0.113, 0.4] {
                let d = DriveConfig::rabi10(q.omega10 + det, r);
                let full = drive_self_transmission(&q, &d, &DecayChannels::all())?;
                let two = t_closed_form(&rates, to_angular(det), bloch_rabi(to_angular(r)));
                worst = worst.max((full - two).norm());
            }
        }
        Ok((worst < 1e-10, format!("9 points with γ21 = 0, max |Δt| = {worst:.2e} (tol 1e-10)")))
    })
}

/// Linear response against the time-domain two-tone integration.
pub fn two_tone_equivalence(p: &SystemParams, channels: &DecayChannels) -> Check {
    guard("linear-response-vs-two-tone", || {
        let reg = transmission_methods();
        let (lin, tt) = (reg.get("linear-response")?, reg.get("two-tone")?);
        let d = DriveConfig::rabi10(p.omega20() / 2.0, 0.5);
        let lr = LinearResponse::new(p, &d, channels)?;
        let probes = [
            lr.sideband_frequency(ladder_qed::dressed::Label::M, ladder_qed::dressed::Label::E),
            p.omega10 + 0.7,
        ];
        let oracle_channels = DecayChannels { corrupt_relaxation: false, ..*channels };
        let mut worst: f64 = 0.0;
        for wp in probes {
            let a = lin.transmission(p, &d, wp, channels)?;
            let b = tt.transmission(p, &d, wp, &oracle_channels)?;
            worst = worst.max((a.norm() - b.norm()).abs());
        }
        Ok((worst < 1e-3, format!("2 probe points, max ||t| difference| = {worst:.2e} (tol 1e-3)")))
    })
}

pub fn run_all(p: &SystemParams, channels: &DecayChannels) -> Vec<Check> {
    vec![
        oracle_equivalence(p, channels),
        closed_form_reduction(p),
        two_level_equivalence(p),
        two_tone_equivalence(p, channels),
    ]
}
