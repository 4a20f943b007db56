//! Reflected-wave overvoltage at the terminals of a cable-fed motor, and an
//! adaptive RC branch across the first coil that suppresses it.
//!
//! The cable is a traveling-wave (Bergeron) line, cross-checked against a
//! lumped LC ladder. The branch duty is adapted online by a model-reference
//! controller.

pub mod analysis;
pub mod cli;
pub mod config;
pub mod error;
pub mod line;
pub mod motor;
pub mod mrac;
pub mod params;
pub mod sim;
pub mod source;
pub mod trace;

pub use error::{Error, Result};
pub use params::{Config, Validated};
pub use sim::{run_to_end, Mode, SimRun};
pub use trace::Trace;
