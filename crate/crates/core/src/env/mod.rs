//! Benchmark environments.

pub mod synth;
pub mod tmaze;

pub use synth::{InitialDistribution, SynthConfig, SynthHdp};
pub use tmaze::{TMaze, TMazeConfig};
