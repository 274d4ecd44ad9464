//! Dressed states of the rotating-frame Hamiltonian and the Rabi sidebands
//! between them.

use std::fmt;

use nalgebra::{Matrix3, SymmetricEigen, Vector3};

use crate::error::{Error, Result};
use crate::model::{rotating_hamiltonian, to_cycles, Basis, CMat3, DriveConfig, Op3, SystemParams, C64};

/// Eigenvalues closer than this (rad/ns) are treated as one degenerate level.
pub const DEGENERACY_GAP: f64 = 1e-9;

/// Dressed-state labels in order of increasing quasi-energy.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    G,
    M,
    E,
}

impl Label {
    pub const ALL: [Label; 3] = [Label::G, Label::M, Label::E];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Label {
        Self::ALL[i]
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::G => "g",
            Label::M => "m",
            Label::E => "e",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DressedBasis {
    /// Quasi-energies ω_g ≤ ω_m ≤ ω_e, rad/ns.
    pub energies: [f64; 3],
    /// Columns are |g⟩, |m⟩, |e⟩ written in the bare basis.
    pub unitary: CMat3,
    pub drive: Option<DriveConfig>,
}

impl DressedBasis {
    /// Builds and diagonalizes H_q for a given drive.
    pub fn new(params: &SystemParams, drive: &DriveConfig) -> Result<Self> {
        let h = rotating_hamiltonian(params, drive)?;
        let mut basis = diagonalize(&h)?;
        basis.drive = Some(*drive);
        Ok(basis)
    }

    pub fn to_dressed(&self, op: &Op3) -> Result<Op3> {
        op.expect_basis(Basis::Bare)?;
        Ok(Op3::dressed(self.unitary.adjoint() * op.matrix * self.unitary))
    }

    pub fn to_bare(&self, op: &Op3) -> Result<Op3> {
        op.expect_basis(Basis::Dressed)?;
        Ok(Op3::bare(self.unitary * op.matrix * self.unitary.adjoint()))
    }

    /// ω_μ − ω_ν, rad/ns.
    pub fn splitting(&self, mu: usize, nu: usize) -> f64 {
        self.energies[mu] - self.energies[nu]
    }

    /// |⟨j|μ⟩|², rows bare j, columns dressed μ.
    pub fn overlaps(&self) -> Matrix3<f64> {
        self.unitary.map(|z| z.norm_sqr())
    }

    pub fn omega_d(&self) -> Result<f64> {
        self.drive
            .map(|d| d.omega_d)
            .ok_or_else(|| Error::param("drive", "dressed basis has no drive attached"))
    }
}

/// Sorted eigen-decomposition of a Hermitian 3×3 matrix.
///
/// Inside a degenerate cluster the eigenvectors are rotated onto the bare
/// states with the largest weight in the cluster projector, and ordered by
/// bare index. Each column's largest component is made real positive.
pub fn diagonalize(h: &Op3) -> Result<DressedBasis> {
    let scale = h.matrix.iter().map(|z| z.norm()).fold(1.0, f64::max);
    let defect = h.hermiticity_defect();
    if !defect.is_finite() || defect > 1e-13 * scale {
        return Err(Error::NotHermitian { deviation: defect });
    }
    let sym = (h.matrix + h.matrix.adjoint()) * C64::from(0.5);
    let eig = SymmetricEigen::new(sym);

    let mut order = [0usize, 1, 2];
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let energies = order.map(|i| eig.eigenvalues[i]);
    let mut cols: Vec<Vector3<C64>> = order.iter().map(|&i| eig.eigenvectors.column(i).into_owned()).collect();

    let mut start = 0;
    while start < 3 {
        let mut end = start + 1;
        while end < 3 && energies[end] - energies[end - 1] < DEGENERACY_GAP {
            end += 1;
        }
        if end - start > 1 {
            align_cluster(&mut cols[start..end]);
        }
        start = end;
    }

    let mut unitary = CMat3::zeros();
    for (k, c) in cols.iter().enumerate() {
        unitary.set_column(k, &fix_phase(c));
    }
    Ok(DressedBasis { energies, unitary, drive: None })
}

fn align_cluster(cols: &mut [Vector3<C64>]) {
    let mut proj = CMat3::zeros();
    for c in cols.iter() {
        proj += c * c.adjoint();
    }
    let mut picked: Vec<(usize, Vector3<C64>)> = Vec::with_capacity(cols.len());
    for _ in 0..cols.len() {
        let j = (0..3)
            .filter(|j| picked.iter().all(|(p, _)| p != j))
            .max_by(|&a, &b| proj[(a, a)].re.total_cmp(&proj[(b, b)].re))
            .expect("cluster larger than space");
        let v = proj.column(j).into_owned();
        let v = v / C64::from(v.norm());
        proj -= v * v.adjoint();
        picked.push((j, v));
    }
    picked.sort_by_key(|(j, _)| *j);
    for (slot, (_, v)) in cols.iter_mut().zip(picked) {
        *slot = v;
    }
}

fn fix_phase(v: &Vector3<C64>) -> Vector3<C64> {
    let mut k = 0;
    for i in 1..3 {
        if v[i].norm() > v[k].norm() + 1e-14 {
            k = i;
        }
    }
    let phase = v[k].conj() / v[k].norm();
    v * phase
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SidebandKind {
    Gain,
    Loss,
    Unknown,
}

impl fmt::Display for SidebandKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SidebandKind::Gain => "gain",
            SidebandKind::Loss => "loss",
            SidebandKind::Unknown => "unknown",
        })
    }
}

/// Probe resonance for the |lower,N⟩ ↔ |upper,N+1⟩ transition.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Sideband {
    pub lower: Label,
    pub upper: Label,
    /// (ω_d + ω_upper − ω_lower)/2π, GHz.
    pub frequency: f64,
    pub kind: SidebandKind,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SidebandTable {
    pub omega_d: f64,
    pub entries: [Sideband; 6],
}

/// Ordered pairs (μ, ν), μ ≠ ν, mirror partners adjacent.
pub const SIDEBAND_PAIRS: [(Label, Label); 6] = [
    (Label::G, Label::M),
    (Label::M, Label::G),
    (Label::M, Label::E),
    (Label::E, Label::M),
    (Label::G, Label::E),
    (Label::E, Label::G),
];

pub fn sideband_frequencies(basis: &DressedBasis) -> Result<SidebandTable> {
    let omega_d = basis.omega_d()?;
    let entries = SIDEBAND_PAIRS.map(|(lower, upper)| {
        // computed once per unordered pair so mirror partners are exact negatives
        let (a, b) = if lower < upper { (lower, upper) } else { (upper, lower) };
        let offset = to_cycles(basis.splitting(b.index(), a.index()));
        let signed = if lower < upper { offset } else { -offset };
        Sideband { lower, upper, frequency: omega_d + signed, kind: SidebandKind::Unknown }
    });
    Ok(SidebandTable { omega_d, entries })
}

impl SidebandTable {
    /// Gain where the upper dressed state is more populated than the lower.
    pub fn classify(&mut self, populations: [f64; 3]) {
        for s in &mut self.entries {
            let diff = populations[s.upper.index()] - populations[s.lower.index()];
            s.kind = if diff > 0.0 {
                SidebandKind::Gain
            } else if diff < 0.0 {
                SidebandKind::Loss
            } else {
                SidebandKind::Unknown
            };
        }
    }

    pub fn get(&self, lower: Label, upper: Label) -> Option<&Sideband> {
        self.entries.iter().find(|s| s.lower == lower && s.upper == upper)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::to_angular;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn transmon_params() -> SystemParams {
        SystemParams::transmon()
    }

    #[test]
    fn undriven_degenerate_point_is_bare_aligned() {
        let b = DressedBasis::new(&transmon_params(), &DriveConfig::rabi10(7.314, 0.0)).unwrap();
        assert!(b.energies[0].abs() < 1e-12 && b.energies[1].abs() < 1e-12);
        assert!((b.energies[2] - to_angular(0.244)).abs() < 1e-12);
        let ov = b.overlaps();
        // g = |0>, m = |2>, e = |1>
        let expected = Matrix3::new(1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 1.0, 0.0);
        assert!((ov - expected).abs().max() < 1e-12);
    }

    #[test]
    fn middle_state_is_drive_independent() {
        for rabi in [0.01, 0.1, 0.5, 1.0, 3.0] {
            let b = DressedBasis::new(&transmon_params(), &DriveConfig::rabi10(7.314, rabi)).unwrap();
            let ov = b.overlaps();
            assert!((ov[(0, 1)] - 2.0 / 3.0).abs() < 1e-9, "{rabi}");
            assert!(ov[(1, 1)].abs() < 1e-9);
            assert!((ov[(2, 1)] - 1.0 / 3.0).abs() < 1e-9);
            assert!(b.energies[1].abs() < 1e-9);
        }
    }

    #[test]
    fn non_degenerate_undriven_is_permutation() {
        let b = DressedBasis::new(&transmon_params(), &DriveConfig::rabi10(7.558, 0.0)).unwrap();
        let ov = b.overlaps();
        for v in ov.iter() {
            assert!(v.abs() < 1e-12 || (v - 1.0).abs() < 1e-12);
        }
    }

    fn random_hermitian(rng: &mut impl Rng, scale: f64) -> CMat3 {
        let mut a = CMat3::zeros();
        for v in a.iter_mut() {
            *v = C64::new(rng.random_range(-scale..scale), rng.random_range(-scale..scale));
        }
        (a + a.adjoint()) * C64::from(0.5)
    }

    #[test]
    fn random_hermitian_eigen_residual() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..10_000 {
            let h = random_hermitian(&mut rng, 10.0);
            let b = diagonalize(&Op3::bare(h)).unwrap();
            let u = b.unitary;
            let d = CMat3::from_diagonal(&Vector3::from(b.energies.map(C64::from)));
            let resid = (h * u - u * d).iter().map(|z| z.norm()).fold(0.0, f64::max);
            assert!(resid < 1e-10);
            let unit = (u.adjoint() * u - CMat3::identity()).iter().map(|z| z.norm()).fold(0.0, f64::max);
            assert!(unit < 1e-12);
            assert!(b.energies[0] <= b.energies[1] && b.energies[1] <= b.energies[2]);
            let ov = b.overlaps();
            for k in 0..3 {
                assert!((ov.row(k).sum() - 1.0).abs() < 1e-12);
                assert!((ov.column(k).sum() - 1.0).abs() < 1e-12);
            }
            for k in 0..3 {
                let col = u.column(k);
                let big = col.iter().map(|z| z.norm()).fold(0.0, f64::max);
                let lead = col.iter().find(|z| (z.norm() - big).abs() < 1e-14).unwrap();
                assert!(lead.im.abs() < 1e-14 && lead.re > 0.0);
            }
        }
    }

    #[test]
    fn rejects_non_hermitian() {
        let mut h = CMat3::identity();
        h[(0, 1)] = C64::new(1.0, 0.0);
        assert!(matches!(diagonalize(&Op3::bare(h)), Err(Error::NotHermitian { .. })));
    }

    #[test]
    fn sidebands_mirror_and_sum_to_zero() {
        let b = DressedBasis::new(&transmon_params(), &DriveConfig::rabi10(7.314, 0.5)).unwrap();
        let t = sideband_frequencies(&b).unwrap();
        let total: f64 = t.entries.iter().map(|s| s.frequency - t.omega_d).sum();
        assert!(total.abs() < 1e-12);
        for pair in t.entries.chunks(2) {
            assert!((pair[0].frequency + pair[1].frequency - 2.0 * t.omega_d).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_drive_sidebands_collapse() {
        let b = DressedBasis::new(&transmon_params(), &DriveConfig::rabi10(7.314, 0.0)).unwrap();
        let t = sideband_frequencies(&b).unwrap();
        assert_eq!(t.entries.len(), 6);
        // |0>(g) -> |1>(e) is the bare line at ω_10
        let ge = t.get(Label::G, Label::E).unwrap();
        assert!((ge.frequency - 7.558).abs() < 1e-12);
        let gm = t.get(Label::G, Label::M).unwrap();
        assert!((gm.frequency - 7.314).abs() < 1e-12);
    }

    #[test]
    fn round_trip_basis_change() {
        let b = DressedBasis::new(&transmon_params(), &DriveConfig::rabi10(7.4, 0.3)).unwrap();
        let h = rotating_hamiltonian(&transmon_params(), &DriveConfig::rabi10(7.4, 0.3)).unwrap();
        let hd = b.to_dressed(&h).unwrap();
        for i in 0..3 {
            assert!((hd.matrix[(i, i)].re - b.energies[i]).abs() < 1e-11);
            for j in 0..3 {
                if i != j {
                    assert!(hd.matrix[(i, j)].norm() < 1e-11);
                }
            }
        }
        let back = b.to_bare(&hd).unwrap();
        assert!((back.matrix - h.matrix).norm() < 1e-12);
        assert!(b.to_dressed(&hd).is_err());
    }
}
