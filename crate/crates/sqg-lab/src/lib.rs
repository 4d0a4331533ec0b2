pub mod diagnostics;
pub mod error;
pub mod fft;
pub mod field;
pub mod fit;
pub mod grid;
pub mod harness;
pub mod inequality;
pub mod kernel;
pub mod ops;
pub mod solver;

pub use error::{Error, Result};
pub use field::Field;
pub use grid::GridSpec;
pub use kernel::{KernelRoute, KernelSpec};
pub use diagnostics::{decay_report, weighted_norm, DecayReport};
pub use solver::{InitialData, SimConfig, SimState};
