//! Driven three-level ladder emitter coupled to a one-dimensional
//! transmission line.
//!
//! The crate computes dressed states of the rotating-frame Hamiltonian,
//! stationary density matrices, probe transmission through linear response,
//! closed-form sideband transmission, and the two-level resonance
//! fluorescence model used to calibrate rates and drive power.

pub mod dressed;
pub mod error;
pub mod lindblad;
pub mod model;
pub mod registry;
pub mod response;
pub mod steady;
pub mod sweep;
pub mod tensor;
pub mod twolevel;

pub use error::{Error, Result};
