pub mod convergence_lab;
pub mod dynamics;
pub mod energy;
pub mod error;
pub mod field;
pub mod graph;
pub mod quasimetric;
pub mod report;
pub mod variational;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
