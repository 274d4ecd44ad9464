//! Operator-pair tensors over the nine σ_{μν} = |μ⟩⟨ν| operators.
//!
//! Index pairs are flattened as `3μ + ν`. Expectations follow
//! ⟨σ_{μν}⟩ = Tr(ρ σ_{μν}) = ρ_{νμ}; every solver in the crate goes through
//! [`expectations`] and [`density_from_expectations`] so the transposition
//! lives in one place.
//!
//! A tensor `T` with entries `T_{μν,μ'ν'} = ⟨μ'|T_{μν}|ν'⟩` expands the
//! operator `T_{μν} = Σ T_{μν,μ'ν'} σ_{μ'ν'}`, hence
//! ⟨T_{μν}⟩ = Σ T_{μν,μ'ν'} ⟨σ_{μ'ν'}⟩, which is `data * x`.

use nalgebra::{SMatrix, SVector};

use crate::error::Result;
use crate::model::{ket_bra, Basis, CMat3, Op3, C64};

pub type Mat9 = SMatrix<C64, 9, 9>;
pub type Vec9 = SVector<C64, 9>;

#[inline]
pub const fn pair(mu: usize, nu: usize) -> usize {
    3 * mu + nu
}

pub const POPULATIONS: [usize; 3] = [pair(0, 0), pair(1, 1), pair(2, 2)];

/// x_{μν} = ⟨σ_{μν}⟩ = ρ_{νμ}.
pub fn expectations(rho: &CMat3) -> Vec9 {
    let mut x = Vec9::zeros();
    for mu in 0..3 {
        for nu in 0..3 {
            x[pair(mu, nu)] = rho[(nu, mu)];
        }
    }
    x
}

/// Inverse of [`expectations`].
pub fn density_from_expectations(x: &Vec9) -> CMat3 {
    let mut rho = CMat3::zeros();
    for mu in 0..3 {
        for nu in 0..3 {
            rho[(nu, mu)] = x[pair(mu, nu)];
        }
    }
    rho
}

/// Coefficients of `op` in the σ_{μν} expansion, op = Σ c_{μν} σ_{μν}.
pub fn operator_coefficients(op: &CMat3) -> Vec9 {
    let mut c = Vec9::zeros();
    for mu in 0..3 {
        for nu in 0..3 {
            c[pair(mu, nu)] = op[(mu, nu)];
        }
    }
    c
}

#[derive(Clone, Debug, PartialEq)]
pub struct PairTensor {
    pub basis: Basis,
    pub data: Mat9,
}

impl PairTensor {
    fn from_fn(basis: Basis, mut f: impl FnMut(usize, usize) -> CMat3) -> Self {
        let mut data = Mat9::zeros();
        for mu in 0..3 {
            for nu in 0..3 {
                let t = f(mu, nu);
                for mp in 0..3 {
                    for np in 0..3 {
                        data[(pair(mu, nu), pair(mp, np))] = t[(mp, np)];
                    }
                }
            }
        }
        PairTensor { basis, data }
    }

    pub fn entry(&self, mu: usize, nu: usize, mp: usize, np: usize) -> C64 {
        self.data[(pair(mu, nu), pair(mp, np))]
    }

    /// ⟨T_{μν}⟩ for all pairs, given x = ⟨σ⟩.
    pub fn contract(&self, x: &Vec9) -> Vec9 {
        self.data * x
    }
}

/// Relaxation tensor for an arbitrary set of collapse operators:
/// ξ_{μν} = Σ_k ½(σ_{μν}C_k†C_k + C_k†C_k σ_{μν}) − C_k† σ_{μν} C_k.
///
/// With the single radiative channel C = √2 σ_t this is
/// σ_{μν}σ_t†σ_t + σ_t†σ_tσ_{μν} − 2σ_t†σ_{μν}σ_t.
pub fn relaxation_tensor(collapse: &[Op3], basis: Basis) -> Result<PairTensor> {
    for c in collapse {
        c.expect_basis(basis)?;
    }
    let pieces: Vec<(CMat3, CMat3)> = collapse
        .iter()
        .map(|c| (c.matrix.adjoint(), c.matrix.adjoint() * c.matrix))
        .collect();
    Ok(PairTensor::from_fn(basis, |mu, nu| {
        let s = ket_bra(mu, nu);
        let mut out = CMat3::zeros();
        for ((cd, cdc), c) in pieces.iter().zip(collapse) {
            out += (s * cdc + cdc * s) * C64::from(0.5) - cd * s * c.matrix;
        }
        out
    }))
}

/// ξ for radiative decay alone, built from σ_t in `basis`.
pub fn xi_tensor(sigma_t: &Op3, basis: Basis) -> Result<PairTensor> {
    sigma_t.expect_basis(basis)?;
    let st = sigma_t.matrix;
    let sd = st.adjoint();
    let sts = sd * st;
    Ok(PairTensor::from_fn(basis, |mu, nu| {
        let s = ket_bra(mu, nu);
        s * sts + sts * s - (sd * s * st) * C64::from(2.0)
    }))
}

/// ζ_{μν} = [σ_{μν}, σ_t†].
pub fn zeta_tensor(sigma_t: &Op3, basis: Basis) -> Result<PairTensor> {
    sigma_t.expect_basis(basis)?;
    let sd = sigma_t.matrix.adjoint();
    Ok(PairTensor::from_fn(basis, |mu, nu| {
        let s = ket_bra(mu, nu);
        s * sd - sd * s
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{collapse_operators, to_angular, transition_dipole, DecayChannels, SystemParams};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn two_level() -> SystemParams {
        SystemParams { gamma21: 0.0, ..SystemParams::transmon() }
    }

    pub(crate) fn random_density(rng: &mut impl Rng) -> CMat3 {
        let mut a = CMat3::zeros();
        for v in a.iter_mut() {
            *v = C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        }
        let rho = a * a.adjoint();
        rho / rho.trace()
    }

    #[test]
    fn expectation_convention() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let rho = random_density(&mut rng);
        let x = expectations(&rho);
        for mu in 0..3 {
            for nu in 0..3 {
                let direct = (rho * ket_bra(mu, nu)).trace();
                assert!((x[pair(mu, nu)] - direct).norm() < 1e-15);
            }
        }
        assert_eq!(density_from_expectations(&x), rho);
    }

    #[test]
    fn two_level_xi_entries() {
        let p = two_level();
        let g = to_angular(p.gamma10);
        let xi = xi_tensor(&transition_dipole(&p).unwrap(), Basis::Bare).unwrap();
        assert!((xi.entry(0, 1, 0, 1) - C64::from(g / 2.0)).norm() < 1e-14);
        assert!((xi.entry(0, 0, 1, 1) - C64::from(-g)).norm() < 1e-14);
        assert!((xi.entry(1, 1, 1, 1) - C64::from(g)).norm() < 1e-14);
    }

    #[test]
    fn xi_matches_generic_relaxation() {
        let p = SystemParams::transmon();
        let xi = xi_tensor(&transition_dipole(&p).unwrap(), Basis::Bare).unwrap();
        let ops = collapse_operators(&p, &DecayChannels::radiative_only()).unwrap();
        let gen = relaxation_tensor(&ops, Basis::Bare).unwrap();
        assert!((xi.data - gen.data).norm() < 1e-13);
    }

    #[test]
    fn xi_contraction_matches_triple_products() {
        let p = SystemParams::transmon();
        let st = transition_dipole(&p).unwrap();
        let xi = xi_tensor(&st, Basis::Bare).unwrap();
        let s = st.matrix;
        let sd = s.adjoint();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..1000 {
            let rho = random_density(&mut rng);
            let via_tensor = xi.contract(&expectations(&rho));
            for mu in 0..3 {
                for nu in 0..3 {
                    let sig = ket_bra(mu, nu);
                    let op = sig * sd * s + sd * s * sig - sd * sig * s * C64::from(2.0);
                    let direct = (rho * op).trace();
                    assert!((via_tensor[pair(mu, nu)] - direct).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn zeta_two_level_commutator() {
        let p = two_level();
        let z = zeta_tensor(&transition_dipole(&p).unwrap(), Basis::Bare).unwrap();
        let c = (to_angular(p.gamma10) / 2.0).sqrt();
        assert!((z.entry(0, 1, 0, 0) - C64::from(c)).norm() < 1e-14);
        assert!((z.entry(0, 1, 1, 1) - C64::from(-c)).norm() < 1e-14);
        let others = (0..9)
            .filter(|&k| k != pair(0, 0) && k != pair(1, 1))
            .map(|k| z.data[(pair(0, 1), k)].norm())
            .fold(0.0, f64::max);
        assert_eq!(others, 0.0);
    }

    #[test]
    fn zeta_homogeneous_in_sqrt_gamma() {
        let p = SystemParams::transmon();
        let q = SystemParams { gamma10: 4.0 * p.gamma10, gamma21: 4.0 * p.gamma21, ..p };
        let z1 = zeta_tensor(&transition_dipole(&p).unwrap(), Basis::Bare).unwrap();
        let z4 = zeta_tensor(&transition_dipole(&q).unwrap(), Basis::Bare).unwrap();
        assert!((z4.data - z1.data * C64::from(2.0)).norm() < 1e-12);
    }

    #[test]
    fn zeta_contraction_matches_direct_commutator() {
        let p = SystemParams::transmon();
        let st = transition_dipole(&p).unwrap();
        let z = zeta_tensor(&st, Basis::Bare).unwrap();
        let sd = st.matrix.adjoint();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            // any Hermitian matrix works, not only densities
            let mut m = CMat3::zeros();
            for v in m.iter_mut() {
                *v = C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            }
            let m = m + m.adjoint();
            let via = z.contract(&expectations(&m));
            for mu in 0..3 {
                for nu in 0..3 {
                    let s = ket_bra(mu, nu);
                    let direct = (m * (s * sd - sd * s)).trace();
                    assert!((via[pair(mu, nu)] - direct).norm() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn basis_mismatch_rejected() {
        let st = transition_dipole(&SystemParams::transmon()).unwrap();
        assert!(xi_tensor(&st, Basis::Dressed).is_err());
        assert!(zeta_tensor(&st, Basis::Dressed).is_err());
    }

    #[test]
    fn relaxation_preserves_trace() {
        let p = SystemParams::transmon();
        let ops = collapse_operators(&p, &DecayChannels::all()).unwrap();
        let t = relaxation_tensor(&ops, Basis::Bare).unwrap();
        for col in 0..9 {
            let s: C64 = POPULATIONS.iter().map(|&r| t.data[(r, col)]).sum();
            assert!(s.norm() < 1e-13);
        }
    }
}
