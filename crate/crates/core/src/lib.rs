//! Surrogate modeling for stiff ODE systems with continuous-time echo state
//! networks (CTESNs).
//!
//! The pipeline: solve a reference ("drive") trajectory of the target model at
//! one parameter point, integrate a fixed random reservoir ODE driven by that
//! trajectory, fit a linear readout from reservoir states to the model states
//! for every sampled parameter, and interpolate the readout matrices over the
//! parameter box with radial basis functions. Prediction then costs a readout
//! interpolation and a matrix product; no ODE is solved on the prediction path.
//!
//! The crate is `no_std`-compatible (`alloc` required). The default `std`
//! feature only switches float intrinsics; the optional `rayon` feature
//! parallelizes the embarrassingly parallel training loops without changing
//! any result bit.
//!
//! Everything downstream of a seed is deterministic: the random number
//! generator is frozen (see [`rng`]), matrices are built in a documented draw
//! order, and training aggregates per-sample results by index.

#![cfg_attr(not(feature = "std"), no_std)]
#![deny(unsafe_code)]

extern crate alloc;

pub mod linalg;
pub mod models;
pub mod ode;
pub mod params;
pub mod readout;
pub mod reservoir;
pub mod rng;
pub mod sparse;
pub mod surrogate;

pub use linalg::Mat;
pub use ode::{OdeSystem, Solution, SolveStatus, SolverConfig};
pub use params::{BoxSpace, RbfInterpolator, SobolSequencer};
pub use readout::{ErrorReport, FitConfig, ReadoutMatrix, TimeGrid};
pub use reservoir::{
    DriveNormalization, ReservoirMatrices, ReservoirSolution, ReservoirSpec, TimeWarp,
};
pub use surrogate::{PstarRule, TrainedSurrogate, TrainingConfig};
