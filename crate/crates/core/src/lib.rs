pub mod cli;
pub mod diffcore;
pub mod error;
pub mod extgnan;
pub mod interpret;
pub mod signal_graphs;
pub mod superman;
pub mod synth;
pub mod training;
pub mod treemetric;

pub use error::{Error, Result};
