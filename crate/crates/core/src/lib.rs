pub mod arrival_stats;
pub mod asymptotics;
pub mod cli;
pub mod dispersion;
pub mod error;
pub mod kernels;
pub mod mode_fields;
pub mod numerics;
pub mod propagation;

pub use error::{Error, Result};
