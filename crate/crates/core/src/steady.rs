//! Stationary state of the driven emitter from the Heisenberg-picture
//! equations, and an independent time-evolution oracle.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::dressed::DressedBasis;
use crate::error::{Error, Result};
use crate::lindblad::MasterEquation;
use crate::model::{
    collapse_operators, rotating_hamiltonian, to_angular, transition_dipole, Basis, CMat3, DecayChannels,
    DriveConfig, Op3, SystemParams, C64,
};
use crate::tensor::{density_from_expectations, expectations, pair, relaxation_tensor, xi_tensor, Mat9, PairTensor, Vec9};

/// Solver-ready pieces shared by the stationary and linear-response solves.
#[derive(Clone, Debug)]
pub struct DressedModel {
    pub basis: DressedBasis,
    /// σ_t in the dressed basis.
    pub sigma_t: Op3,
    /// Total relaxation tensor ξ (radiative plus any enabled extra channels).
    pub xi: PairTensor,
}

impl DressedModel {
    pub fn new(params: &SystemParams, drive: &DriveConfig, channels: &DecayChannels) -> Result<Self> {
        let basis = DressedBasis::new(params, drive)?;
        let sigma_t = basis.to_dressed(&transition_dipole(params)?)?;
        let mut xi = xi_tensor(&sigma_t, Basis::Dressed)?;
        let extras: Vec<Op3> = collapse_operators(params, channels)?
            .into_iter()
            .skip(1)
            .map(|c| basis.to_dressed(&c))
            .collect::<Result<_>>()?;
        if !extras.is_empty() {
            xi.data += relaxation_tensor(&extras, Basis::Dressed)?.data;
        }
        if channels.corrupt_relaxation {
            xi.data = -xi.data;
        }
        Ok(DressedModel { basis, sigma_t, xi })
    }

    /// i(ω_{μν} + shift)δ − ξ, the left-hand operator of the Heisenberg
    /// equations for a component oscillating as e^{−i·shift·t}.
    pub fn generator(&self, shift: f64) -> Mat9 {
        let mut m = -self.xi.data;
        for mu in 0..3 {
            for nu in 0..3 {
                let k = pair(mu, nu);
                m[(k, k)] += C64::new(0.0, self.basis.splitting(mu, nu) + shift);
            }
        }
        m
    }
}

#[derive(Clone, Debug)]
pub struct StationaryState {
    pub model: DressedModel,
    /// ρ in the dressed basis.
    pub rho: Op3,
    /// ⟨σ_{μν}⟩_s, flattened as 3μ+ν.
    pub expectations: Vec9,
    /// max |stationarity defect| of the unmodified equations.
    pub residual: f64,
    /// Condition number of the trace-augmented system.
    pub condition: f64,
}

impl StationaryState {
    pub fn populations(&self) -> [f64; 3] {
        [0, 1, 2].map(|k| self.rho.matrix[(k, k)].re)
    }

    pub fn rho_bare(&self) -> Op3 {
        self.model.basis.to_bare(&self.rho).expect("rho is dressed")
    }

    pub fn purity(&self) -> f64 {
        (self.rho.matrix * self.rho.matrix).trace().re
    }

    pub fn min_eigenvalue(&self) -> f64 {
        min_eigenvalue(&self.rho.matrix)
    }

    /// ⟨σ_t⟩_s.
    pub fn dipole_expectation(&self) -> C64 {
        (self.rho.matrix * self.model.sigma_t.matrix).trace()
    }
}

pub fn min_eigenvalue(rho: &CMat3) -> f64 {
    let herm = (rho + rho.adjoint()) * C64::from(0.5);
    SymmetricEigen::new(herm).eigenvalues.min()
}

/// Solves the Heisenberg-picture system `m x = rhs` with Σ_μ x_μμ = `trace`.
///
/// The ⟨σ_00⟩ row of `m` is replaced by the trace condition and the square
/// system is LU-solved. When `extra` rows are given (each `(c, v)` meaning
/// c·x = v) the kernel of `m` is more than one-dimensional; the system is then
/// augmented with them and solved in the least-squares sense. An SVD solve is
/// also the fallback if LU fails or leaves a residual.
pub(crate) fn solve_pair_system(
    m: &Mat9,
    rhs: &Vec9,
    trace: C64,
    extra: &[(Vec9, C64)],
) -> Result<(Vec9, f64)> {
    let r0 = pair(0, 0);
    let mut a = *m;
    let mut b = *rhs;
    for c in 0..9 {
        a[(r0, c)] = C64::from(0.0);
    }
    for mu in 0..3 {
        a[(r0, pair(mu, mu))] = C64::from(1.0);
    }
    b[r0] = trace;
    let scale = a.iter().map(|z| z.norm()).fold(1.0, f64::max);

    if extra.is_empty() {
        let residual_of = |x: &Vec9| (a * x - b).iter().map(|z| z.norm()).fold(0.0, f64::max);
        let sv = a.singular_values();
        let (smax, smin) = (sv.max(), sv.min());
        let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
        if condition < 1e13 {
            if let Some(x) = a.lu().solve(&b) {
                let r = residual_of(&x);
                if r.is_finite() && r <= 1e-12 * scale * (1.0 + x.norm()) {
                    return Ok((x, condition));
                }
            }
        }
        let x = a
            .svd(true, true)
            .solve(&b, smax * 1e-13)
            .map_err(|_| Error::Singular { condition, residual: f64::INFINITY })?;
        let r = residual_of(&x);
        if !(r.is_finite() && r <= 1e-9 * scale * (1.0 + x.norm())) {
            return Err(Error::Singular { condition, residual: r });
        }
        return Ok((x, condition));
    }

    let rows = 10 + extra.len();
    let mut big = DMatrix::<C64>::zeros(rows, 9);
    let mut rb = DVector::<C64>::zeros(rows);
    for r in 0..9 {
        for c in 0..9 {
            big[(r, c)] = m[(r, c)];
        }
        rb[r] = rhs[r];
    }
    for mu in 0..3 {
        big[(9, pair(mu, mu))] = C64::from(1.0);
    }
    rb[9] = trace;
    for (k, (coeffs, value)) in extra.iter().enumerate() {
        for c in 0..9 {
            big[(10 + k, c)] = coeffs[c] * C64::from(scale);
        }
        rb[10 + k] = *value * C64::from(scale);
    }
    let svd = big.clone().svd(true, true);
    let (smax, smin) = (svd.singular_values.max(), svd.singular_values.min());
    let condition = if smin > 0.0 { smax / smin } else { f64::INFINITY };
    let x = svd
        .solve(&rb, smax * 1e-13)
        .map_err(|_| Error::Singular { condition, residual: f64::INFINITY })?;
    let r = (&big * &x - &rb).iter().map(|z| z.norm()).fold(0.0, f64::max);
    if !(r.is_finite() && r <= 1e-9 * scale * (1.0 + x.norm())) {
        return Err(Error::Singular { condition, residual: r });
    }
    Ok((Vec9::from_iterator(x.iter().copied()), condition))
}

/// With γ_21 = 0 the bare level |2⟩ is neither driven nor damped and the
/// stationary manifold is two-dimensional; the physical branch (reached
/// from the ground state) has no |2⟩ population. Returns the row
/// c with c·x = ⟨2|ρ|2⟩ in that case.
pub(crate) fn decoupled_level_constraint(params: &SystemParams, basis: &DressedBasis) -> Option<Vec9> {
    if params.gamma21 != 0.0 {
        return None;
    }
    let u = &basis.unitary;
    let mut c = Vec9::zeros();
    for a in 0..3 {
        for b in 0..3 {
            // ρ_d[a,b] = x[pair(b,a)]
            c[pair(b, a)] = u[(2, a)] * u[(2, b)].conj();
        }
    }
    Some(c)
}

/// Stationary state with radiative decay only.
pub fn solve_stationary(params: &SystemParams, drive: &DriveConfig) -> Result<StationaryState> {
    solve_stationary_with(params, drive, &DecayChannels::radiative_only())
}

pub fn solve_stationary_with(
    params: &SystemParams,
    drive: &DriveConfig,
    channels: &DecayChannels,
) -> Result<StationaryState> {
    let model = DressedModel::new(params, drive, channels)?;
    let m = model.generator(0.0);
    let extra: Vec<(Vec9, C64)> = decoupled_level_constraint(params, &model.basis)
        .map(|c| (c, C64::from(0.0)))
        .into_iter()
        .collect();
    let (x, condition) = solve_pair_system(&m, &Vec9::zeros(), C64::from(1.0), &extra)?;
    let residual = (m * x).iter().map(|z| z.norm()).fold(0.0, f64::max);
    let rho = Op3::dressed(density_from_expectations(&x));
    Ok(StationaryState { model, rho, expectations: x, residual, condition })
}

/// Stationarity defect of an arbitrary dressed-basis density matrix.
pub fn stationarity_defect(model: &DressedModel, rho: &Op3) -> Result<f64> {
    rho.expect_basis(Basis::Dressed)?;
    let x = expectations(&rho.matrix);
    Ok((model.generator(0.0) * x).iter().map(|z| z.norm()).fold(0.0, f64::max))
}

/// Relaxation time scale used for default integration lengths: 50/γ_10.
pub fn default_t_final(params: &SystemParams) -> f64 {
    50.0 / to_angular(params.gamma10)
}

pub const MAX_HALVINGS: u32 = 10;

/// Integrates the master equation from `rho0` (bare basis) to `t_final`.
///
/// The step is halved until halving changes the result by less than 1e−8.
pub fn evolve_oracle(
    params: &SystemParams,
    drive: &DriveConfig,
    rho0: &Op3,
    t_final: f64,
    dt: f64,
) -> Result<Op3> {
    evolve_oracle_with(params, drive, &DecayChannels::radiative_only(), rho0, t_final, dt)
}

pub fn evolve_oracle_with(
    params: &SystemParams,
    drive: &DriveConfig,
    channels: &DecayChannels,
    rho0: &Op3,
    t_final: f64,
    dt: f64,
) -> Result<Op3> {
    rho0.expect_basis(Basis::Bare)?;
    if !(t_final.is_finite() && t_final >= 0.0) {
        return Err(Error::param("t_final", "must be finite and >= 0"));
    }
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::param("dt", "must be finite and > 0"));
    }
    let h = rotating_hamiltonian(params, drive)?.matrix;
    let ops: Vec<CMat3> = collapse_operators(params, channels)?.into_iter().map(|c| c.matrix).collect();
    let me = MasterEquation::new(|_| h, &ops);
    let integrate = |dt: f64| {
        let steps = (t_final / dt).ceil().max(1.0) as usize;
        me.run(&rho0.matrix, 0.0, t_final / steps as f64, steps, |_, _| {})
    };

    let mut dt = dt;
    let mut coarse = integrate(dt);
    let mut change = f64::INFINITY;
    for _ in 0..=MAX_HALVINGS {
        dt /= 2.0;
        let fine = integrate(dt);
        change = (fine - coarse).iter().map(|z| z.norm()).fold(0.0, f64::max);
        if change < 1e-8 {
            return Ok(Op3::bare(fine));
        }
        coarse = fine;
    }
    Err(Error::StepSize { halvings: MAX_HALVINGS, change })
}

/// A step size that resolves the fastest coherent frequency in H.
pub fn suggested_dt(params: &SystemParams, drive: &DriveConfig) -> Result<f64> {
    let h = rotating_hamiltonian(params, drive)?.matrix;
    let scale = h.iter().map(|z| z.norm()).fold(to_angular(params.gamma10 + params.gamma21), f64::max);
    Ok(0.05 / scale)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ket_bra;

    fn transmon_params() -> SystemParams {
        SystemParams::transmon()
    }

    fn max_abs(m: &CMat3) -> f64 {
        m.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    #[test]
    fn undriven_is_ground_state() {
        for wd in [7.0, 7.314, 7.558] {
            let s = solve_stationary(&transmon_params(), &DriveConfig::rabi10(wd, 0.0)).unwrap();
            let rho = s.rho_bare().matrix;
            assert!(max_abs(&(rho - ket_bra(0, 0))) < 1e-12, "{wd}");
        }
    }

    #[test]
    fn solution_is_physical() {
        for rabi in [1e-4, 0.05, 0.3, 1.0, 2.0] {
            let s = solve_stationary(&transmon_params(), &DriveConfig::rabi10(7.314, rabi)).unwrap();
            assert!((s.rho.trace() - C64::from(1.0)).norm() < 1e-12);
            assert!(s.rho.hermiticity_defect() < 1e-12);
            assert!(s.min_eigenvalue() > -1e-10);
            assert!(s.residual < 1e-10, "{rabi}: {}", s.residual);
        }
    }

    #[test]
    fn ideal_two_level_population() {
        // γ21 = 0, resonant: n = s/(2(1+s)), s = Ω_B²/(Γ1Γ2), Γ2 = Γ1/2,
        // with the Bloch Rabi frequency Ω_B = 2|H01| = √2 Ω_R,10.
        let p = SystemParams { gamma21: 0.0, ..transmon_params() };
        let g1 = to_angular(p.gamma10);
        for rabi in [0.005, 0.02, 0.1] {
            let s = solve_stationary(&p, &DriveConfig::rabi10(p.omega10, rabi)).unwrap();
            let ob = std::f64::consts::SQRT_2 * to_angular(rabi);
            let sat = ob * ob / (g1 * g1 / 2.0);
            let n = sat / (2.0 * (1.0 + sat));
            let excited = s.rho_bare().matrix[(1, 1)].re;
            assert!((excited - n).abs() < 1e-12, "{rabi}: {excited} vs {n}");
        }
    }

    #[test]
    fn oracle_pure_decay() {
        let p = transmon_params();
        let d = DriveConfig::rabi10(7.314, 0.0);
        let t = 10.0;
        let r2 = evolve_oracle(&p, &d, &Op3::bare(ket_bra(2, 2)), t, 0.05).unwrap();
        assert!((r2.matrix[(2, 2)].re - (-to_angular(p.gamma21) * t).exp()).abs() < 1e-8);
        let r1 = evolve_oracle(&p, &d, &Op3::bare(ket_bra(1, 1)), t, 0.05).unwrap();
        assert!((r1.matrix[(1, 1)].re - (-to_angular(p.gamma10) * t).exp()).abs() < 1e-8);
    }

    #[test]
    fn population_equations_decouple_when_undriven() {
        // d<σ22>/dt = −γ21<σ22>, d<σ11>/dt = γ21<σ22> − γ10<σ11>
        let p = transmon_params();
        let m = DressedModel::new(&p, &DriveConfig::rabi10(7.558, 0.0), &DecayChannels::default()).unwrap();
        // non-degenerate at ω_d = ω_10: g=|1>? ordering by energy: |0>:0, |1>:0, |2>: ω20−2ω10 < 0
        let ov = m.basis.overlaps();
        let idx = |bare: usize| (0..3).find(|&k| ov[(bare, k)] > 0.5).unwrap();
        let (i1, i2) = (idx(1), idx(2));
        let g10 = to_angular(p.gamma10);
        let g21 = to_angular(p.gamma21);
        let xi = &m.xi;
        assert!((xi.entry(i2, i2, i2, i2).re - g21).abs() < 1e-12);
        assert!((xi.entry(i1, i1, i2, i2).re + g21).abs() < 1e-12);
        assert!((xi.entry(i1, i1, i1, i1).re - g10).abs() < 1e-12);
    }

    #[test]
    fn oracle_agrees_with_stationary_solver() {
        let p = transmon_params();
        for (wd, rabi) in [(7.314, 0.3), (7.558, 0.113), (7.4, 1.0)] {
            let d = DriveConfig::rabi10(wd, rabi);
            let s = solve_stationary(&p, &d).unwrap();
            let dt = suggested_dt(&p, &d).unwrap();
            let rho = evolve_oracle(&p, &d, &Op3::bare(ket_bra(0, 0)), default_t_final(&p), dt).unwrap();
            let diff = max_abs(&(rho.matrix - s.rho_bare().matrix));
            assert!(diff < 1e-6, "{wd} {rabi}: {diff}");
        }
    }

    #[test]
    fn corrupted_relaxation_breaks_agreement() {
        let p = transmon_params();
        let d = DriveConfig::rabi10(7.314, 0.3);
        let ch = DecayChannels { corrupt_relaxation: true, ..Default::default() };
        let bad = solve_stationary_with(&p, &d, &ch);
        let good = solve_stationary(&p, &d).unwrap();
        if let Ok(bad) = bad {
            assert!(max_abs(&(bad.rho_bare().matrix - good.rho_bare().matrix)) > 1e-3);
        }
    }
}
