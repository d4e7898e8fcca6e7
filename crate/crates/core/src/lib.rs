//! Joint sensing-data caching and request allocation for vehicular edge networks.
//!
//! The [`model`] module evaluates value, energy and delay for one slot,
//! [`lyapunov`] turns the long-term energy budget into per-slot problems, and
//! [`solver`] holds the exact, BQPSO and baseline per-slot solvers.

pub mod environment;
pub mod error;
pub mod instance;
pub mod lyapunov;
pub mod model;
pub mod real;
pub mod scenario;
pub mod solver;
pub mod synth;
pub mod trace;

pub use error::{Error, Result};
pub use instance::{Assessment, InstanceParts, LoadProfile, ObservationInputs, PenaltyConfig, PenaltyScale, SlotInstance};
pub use real::Real;

/// Double-precision aliases used by the harness.
pub type Instance = SlotInstance<f64>;
pub type Scenario = scenario::Scenario<f64>;
pub type Snapshot = scenario::Snapshot<f64>;

/// Single-precision aliases.
pub type Instance32 = SlotInstance<f32>;
pub type Scenario32 = scenario::Scenario<f32>;
