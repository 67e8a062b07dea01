//! Simulation side of the adyn toolkit: an exact event-driven simulator of the
//! individual-based process and Monte Carlo checks of the limit laws computed
//! by `adyn_core`.

pub mod error;
pub mod simulator;
pub mod stats;
pub mod validation;

pub use error::SimError;
pub use simulator::{simulate, simulate_replicate, SimConfig, SimulationRecord, StopCondition};
