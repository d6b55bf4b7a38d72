//! Standard-library companion to `ctesn-core`: run configuration,
//! the surrogate file format, experiment harnesses, and the CSV/JSON
//! emitters behind the `ctesn` binary.

pub mod config;
pub mod container;
pub mod harness;
pub mod output;
