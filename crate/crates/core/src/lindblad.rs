//! Fixed-step RK4 integration of the master equation in the bare basis.
//!
//! dρ/dt = −i[H(t), ρ] + Σ_k (C_k ρ C_k† − ½{C_k†C_k, ρ})

use crate::model::{CMat3, C64};

pub struct MasterEquation<H> {
    hamiltonian: H,
    collapse: Vec<(CMat3, CMat3, CMat3)>,
}

impl<H: Fn(f64) -> CMat3> MasterEquation<H> {
    pub fn new(hamiltonian: H, collapse: &[CMat3]) -> Self {
        let collapse = collapse
            .iter()
            .map(|c| (*c, c.adjoint(), c.adjoint() * c * C64::from(0.5)))
            .collect();
        MasterEquation { hamiltonian, collapse }
    }

    pub fn rhs(&self, t: f64, rho: &CMat3) -> CMat3 {
        let h = (self.hamiltonian)(t);
        let mut out = (h * rho - rho * h) * C64::new(0.0, -1.0);
        for (c, cd, half) in &self.collapse {
            out += c * rho * cd - half * rho - rho * half;
        }
        out
    }

    pub fn step(&self, t: f64, dt: f64, rho: &CMat3) -> CMat3 {
        let half = C64::from(dt / 2.0);
        let k1 = self.rhs(t, rho);
        let k2 = self.rhs(t + dt / 2.0, &(rho + k1 * half));
        let k3 = self.rhs(t + dt / 2.0, &(rho + k2 * half));
        let k4 = self.rhs(t + dt, &(rho + k3 * C64::from(dt)));
        rho + (k1 + (k2 + k3) * C64::from(2.0) + k4) * C64::from(dt / 6.0)
    }

    /// Integrates from `t0` over `steps` steps of size `dt`, calling
    /// `observe(t, ρ)` after every step.
    pub fn run(&self, rho0: &CMat3, t0: f64, dt: f64, steps: usize, mut observe: impl FnMut(f64, &CMat3)) -> CMat3 {
        let mut rho = *rho0;
        for k in 0..steps {
            let t = t0 + k as f64 * dt;
            rho = self.step(t, dt, &rho);
            observe(t + dt, &rho);
        }
        rho
    }
}
