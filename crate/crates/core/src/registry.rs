//! Interchangeable solver strategies, registered by name and picked at run
//! time.

use crate::error::{Error, Result};
use crate::model::{ket_bra, DecayChannels, DriveConfig, Op3, ProbeConfig, SystemParams, C64};
use crate::response::{two_tone_oracle, LinearResponse, TwoToneOptions};
use crate::steady::{default_t_final, evolve_oracle_with, solve_stationary_with, suggested_dt};

/// Computes the stationary density matrix, bare basis.
pub trait StationarySolver: Send + Sync {
    fn name(&self) -> &'static str;
    fn solve(&self, params: &SystemParams, drive: &DriveConfig, channels: &DecayChannels) -> Result<Op3>;
}

/// Computes the probe transmission coefficient at one probe frequency.
pub trait TransmissionMethod: Send + Sync {
    fn name(&self) -> &'static str;
    fn transmission(
        &self,
        params: &SystemParams,
        drive: &DriveConfig,
        omega_p: f64,
        channels: &DecayChannels,
    ) -> Result<C64>;
}

/// Null-space solve of the dressed-basis pair equations.
pub struct LinearStationary;

impl StationarySolver for LinearStationary {
    fn name(&self) -> &'static str {
        "linear"
    }

    fn solve(&self, params: &SystemParams, drive: &DriveConfig, channels: &DecayChannels) -> Result<Op3> {
        Ok(solve_stationary_with(params, drive, channels)?.rho_bare())
    }
}

/// Master-equation integration from the ground state.
pub struct EvolveStationary {
    /// Integration time, ns; defaults to 50/γ_10.
    pub t_final: Option<f64>,
}

impl StationarySolver for EvolveStationary {
    fn name(&self) -> &'static str {
        "evolve"
    }

    fn solve(&self, params: &SystemParams, drive: &DriveConfig, channels: &DecayChannels) -> Result<Op3> {
        let t = self.t_final.unwrap_or_else(|| default_t_final(params));
        let dt = suggested_dt(params, drive)?;
        evolve_oracle_with(params, drive, channels, &Op3::bare(ket_bra(0, 0)), t, dt)
    }
}

pub struct LinearResponseMethod;

impl TransmissionMethod for LinearResponseMethod {
    fn name(&self) -> &'static str {
        "linear-response"
    }

    fn transmission(
        &self,
        params: &SystemParams,
        drive: &DriveConfig,
        omega_p: f64,
        channels: &DecayChannels,
    ) -> Result<C64> {
        Ok(LinearResponse::new(params, drive, channels)?.transmission(omega_p)?.t)
    }
}

pub struct TwoToneMethod;

impl TransmissionMethod for TwoToneMethod {
    fn name(&self) -> &'static str {
        "two-tone"
    }

    fn transmission(
        &self,
        params: &SystemParams,
        drive: &DriveConfig,
        omega_p: f64,
        channels: &DecayChannels,
    ) -> Result<C64> {
        let opts = TwoToneOptions { channels: *channels, ..TwoToneOptions::for_params(params) };
        two_tone_oracle(params, drive, &ProbeConfig::weak(params, omega_p), &opts)
    }
}

/// Name-keyed table of strategies sharing one trait.
pub struct Registry<T: ?Sized> {
    entries: Vec<Box<T>>,
    name_of: fn(&T) -> &'static str,
}

impl<T: ?Sized> Registry<T> {
    pub fn new(name_of: fn(&T) -> &'static str) -> Self {
        Registry { entries: Vec::new(), name_of }
    }

    /// Adds a strategy, replacing any with the same name.
    pub fn register(&mut self, item: Box<T>) {
        let name = (self.name_of)(&item);
        self.entries.retain(|e| (self.name_of)(e) != name);
        self.entries.push(item);
    }

    pub fn get(&self, name: &str) -> Result<&T> {
        self.entries
            .iter()
            .find(|e| (self.name_of)(e) == name)
            .map(|b| &**b)
            .ok_or_else(|| Error::UnknownStrategy { name: name.to_string(), available: self.names().join(", ") })
    }

    pub fn names(&self) -> Vec<&'static str> {
        self.entries.iter().map(|e| (self.name_of)(e)).collect()
    }
}

pub fn stationary_solvers() -> Registry<dyn StationarySolver> {
    let mut r: Registry<dyn StationarySolver> = Registry::new(|s| s.name());
    r.register(Box::new(LinearStationary));
    r.register(Box::new(EvolveStationary { t_final: None }));
    r
}

pub fn transmission_methods() -> Registry<dyn TransmissionMethod> {
    let mut r: Registry<dyn TransmissionMethod> = Registry::new(|s| s.name());
    r.register(Box::new(LinearResponseMethod));
    r.register(Box::new(TwoToneMethod));
    r
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lookup_by_name() {
        let s = stationary_solvers();
        assert_eq!(s.names(), vec!["linear", "evolve"]);
        assert_eq!(s.get("evolve").unwrap().name(), "evolve");
        match s.get("magic") {
            Err(Error::UnknownStrategy { name, available }) => {
                assert_eq!(name, "magic");
                assert_eq!(available, "linear, evolve");
            }
            other => panic!("{:?}", other.map(|x| x.name())),
        }
        assert_eq!(transmission_methods().names(), vec!["linear-response", "two-tone"]);
    }

    #[test]
    fn re_registering_replaces() {
        let mut s = stationary_solvers();
        s.register(Box::new(EvolveStationary { t_final: Some(1.0) }));
        assert_eq!(s.names(), vec!["linear", "evolve"]);
    }

    #[test]
    fn stationary_strategies_agree() {
        let p = SystemParams::transmon();
        let d = DriveConfig::rabi10(p.omega20() / 2.0, 0.3);
        let ch = DecayChannels::all();
        let s = stationary_solvers();
        let a = s.get("linear").unwrap().solve(&p, &d, &ch).unwrap();
        let b = s.get("evolve").unwrap().solve(&p, &d, &ch).unwrap();
        assert!((a.matrix - b.matrix).iter().all(|z| z.norm() < 1e-6));
    }
}
