//! Multiscale switching state-space models: simulation, particle filtering
//! and evaluation.

pub mod config;
pub mod dynamics;
pub mod error;
pub mod eval;
pub mod filter;
pub mod io;
pub mod math;
pub mod par;
pub mod presets;
pub mod schedule;
pub mod simulate;
pub mod types;

pub use config::{ConfigFile, Matrix, ResolvedConfig, ScaleSystemConfig, Violation};
pub use error::{Error, Result};
pub use filter::{run_filter, DegeneratePolicy, FilterConfig, FilterOutput, NeighborEstimate, Resampling};
pub use par::Execution;
pub use schedule::RegimeSchedule;
pub use simulate::{simulate, simulate_with};
pub use types::{GroundTruth, ScaleSeries, Series};
