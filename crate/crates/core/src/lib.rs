//! Clamped Euler–Bernoulli beam with tempered fractional damping, delayed
//! velocity feedback and a power-type source.
//!
//! Space is discretized with Hermite cubic elements, time with the Newmark
//! scheme; the fractional memory is carried by a family of diffusive modes.

pub mod banded;
pub mod config;
pub mod delay;
pub mod fem;
pub mod fractional;
pub mod observables;
pub mod quadrature;
pub mod stability;
pub mod stepper;

pub use config::{parse_config_text, validate_config, SimulationConfig};
pub use observables::{EnergyRecord, EnergyTrace, Verdict};
pub use stepper::{run, RunOutput, Simulation};
