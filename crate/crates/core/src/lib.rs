//! Structure-preserving power-system dynamics with storage-emulated virtual
//! inertia, and optimal time-variant inertia schedules computed by grid
//! dynamic programming or by a shooting trajectory optimiser.
//!
//! Units are per unit for power, seconds for time and inertia, radians for
//! angles. Frequency is the deviation `omega = d(delta)/dt`.

pub mod dp;
pub mod dynamics;
pub mod equilibrium;
pub mod error;
pub mod limits;
pub mod metrics;
pub mod network;
pub mod problem;
pub mod scenario;
pub mod trajectory;
pub mod trajopt;

pub use error::{Error, Result};
