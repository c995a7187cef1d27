//! Sweep orchestration, Pareto fronts, records and plots.

pub mod config;
pub mod data;
pub mod emit;
pub mod pareto;
pub mod records;
pub mod sweep;

pub use config::{Config, CostAxis, MetricKind, SweepSpec};
pub use pareto::{dominates, pareto_front, pareto_indices, ParetoPoint};
pub use records::Record;
pub use sweep::{hardware_string, run_sweep};
