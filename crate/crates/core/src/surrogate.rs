//! Training and prediction orchestration.
//!
//! Training solves the full model at Sobol-sampled parameters, drives
//! the reservoir once with the reference-parameter trajectory, fits one
//! readout per sample against that shared reservoir, and interpolates
//! the readouts across the parameter box. Prediction is then two matrix
//! operations and an interpolation lookup; it never touches an ODE
//! solver, which is the entire point of the surrogate.

use alloc::string::String;
use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

use crate::linalg::Mat;
use crate::ode::{solve_stiff, OdeSystem, OutOfRange, Solution, SolveStatus, SolverConfig};
use crate::params::{fit_rbf, BoxSpace, RbfError, RbfInterpolator, SobolError, SobolSequencer};
use crate::readout::{
    relative_error, sample_states, sample_times, ErrorReport, FitConfig, FitError,
    ReadoutFitter, ReadoutMatrix,
};
use crate::reservoir::{
    build_reservoir, simulate_reservoir, BuildError, DriveNormalization, ReservoirSolution,
    ReservoirSpec,
};

#[cfg(feature = "rayon")]
use rayon::prelude::*;

/// Number of points in the common log-spaced grid used to compare
/// surrogate output against ground truth.
const EVALUATION_GRID_POINTS: usize = 400;

/// Which trajectory drives the reservoir.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PstarRule {
    /// The box midpoint: the minimax-distance choice in a rectangle.
    BoxMidpoint,
    /// The first Sobol training sample.
    FirstSample,
}

/// Everything that shapes a training run.
#[derive(Debug, Clone)]
pub struct TrainingConfig {
    /// Number of Sobol training samples; at least d + 2.
    pub n_train: usize,
    pub reservoir: ReservoirSpec,
    pub fit: FitConfig,
    /// Solver settings for the stiff ground-truth solves (the reservoir
    /// simulation reuses the tolerances with the explicit solver).
    pub solver: SolverConfig,
    pub pstar_rule: PstarRule,
    /// Affinely map each drive component to [-1, 1] before it enters
    /// the reservoir; disable to feed raw states.
    pub normalize_drive: bool,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        TrainingConfig {
            n_train: 100,
            reservoir: ReservoirSpec::default(),
            fit: FitConfig::default(),
            solver: SolverConfig::default(),
            pstar_rule: PstarRule::BoxMidpoint,
            normalize_drive: true,
        }
    }
}

/// Identifying details carried alongside a trained surrogate.
#[derive(Debug, Clone, PartialEq)]
pub struct SurrogateMetadata {
    pub model_name: String,
    /// Model dimension N.
    pub model_dim: usize,
    /// Reservoir dimension N_R.
    pub reservoir_dim: usize,
    pub seed: u64,
    /// Version of this library that produced the surrogate.
    pub tool_version: String,
}

/// A trained surrogate: the shared reservoir trajectory, the per-sample
/// readouts, and the interpolator that carries them across the box.
#[derive(Debug, Clone)]
pub struct TrainedSurrogate {
    pub reservoir_solution: ReservoirSolution,
    pub matrices: Vec<ReadoutMatrix>,
    pub interpolator: RbfInterpolator,
    pub space: BoxSpace,
    pub drive_normalization: DriveNormalization,
    pub tspan: (f64, f64),
    pub metadata: SurrogateMetadata,
}

#[derive(Debug, Clone)]
pub enum TrainError {
    BadConfig(&'static str),
    Sobol(SobolError),
    Reservoir(BuildError),
    /// A ground-truth solve did not reach the end of the span.
    GroundTruthFailed { index: usize, param: Vec<f64>, status: SolveStatus },
    ReservoirSimulationFailed { status: SolveStatus },
    /// Sampling a trajectory outside its span; indicates a truncated
    /// solve slipped through.
    Sampling(OutOfRange),
    Fit { index: usize, error: FitError },
    Rbf(RbfError),
}

impl fmt::Display for TrainError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TrainError::BadConfig(msg) => write!(f, "invalid training config: {msg}"),
            TrainError::Sobol(e) => write!(f, "sobol sampling failed: {e}"),
            TrainError::Reservoir(e) => write!(f, "reservoir construction failed: {e}"),
            TrainError::GroundTruthFailed { index, param, status } => write!(
                f,
                "ground-truth solve {index} at {param:?} stopped: {status}"
            ),
            TrainError::ReservoirSimulationFailed { status } => {
                write!(f, "reservoir simulation stopped: {status}")
            }
            TrainError::Sampling(e) => write!(f, "sampling failed: {e}"),
            TrainError::Fit { index, error } => {
                write!(f, "readout fit {index} failed: {error}")
            }
            TrainError::Rbf(e) => write!(f, "readout interpolation failed: {e}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for TrainError {}

#[derive(Debug, Clone)]
pub enum PredictError {
    /// Parameter rejected by the interpolator (wrong dimension or too
    /// far outside the box).
    Parameter(RbfError),
    /// A requested time lies outside the trained span.
    OutOfSpan(OutOfRange),
}

impl fmt::Display for PredictError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PredictError::Parameter(e) => write!(f, "parameter rejected: {e}"),
            PredictError::OutOfSpan(e) => write!(f, "time outside trained span: {e}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for PredictError {}

/// Maps over items, in parallel when the `rayon` feature is enabled;
/// results keep item order either way.
fn map_indexed<T, U, F>(items: &[T], f: F) -> Vec<U>
where
    T: Sync,
    U: Send,
    F: Fn(&T) -> U + Send + Sync,
{
    #[cfg(feature = "rayon")]
    {
        items.par_iter().map(f).collect()
    }
    #[cfg(not(feature = "rayon"))]
    {
        items.iter().map(f).collect()
    }
}

/// The common log-spaced grid on which surrogates are evaluated against
/// ground truth.
pub fn evaluation_grid(tspan: (f64, f64)) -> Vec<f64> {
    let cfg = FitConfig { n_samples: EVALUATION_GRID_POINTS, ..Default::default() };
    sample_times(tspan, &cfg)
}

fn normalize_columns(norm: &DriveNormalization, x: &mut Mat) {
    let mut col = vec![0.0; x.rows()];
    for k in 0..x.cols() {
        for (i, c) in col.iter_mut().enumerate() {
            *c = x[(i, k)];
        }
        norm.normalize(&mut col);
        x.set_col(k, &col);
    }
}

/// Trains a surrogate for `family` over `space` on `tspan`.
///
/// `family` maps a parameter vector to the model and its initial state;
/// the initial state may depend on the parameters. Ground-truth solves
/// run independently per sample (in parallel under the `rayon` feature)
/// and are aggregated in sample order, so the result does not depend on
/// scheduling.
pub fn train<F>(
    model_name: &str,
    family: F,
    space: &BoxSpace,
    tspan: (f64, f64),
    cfg: &TrainingConfig,
) -> Result<TrainedSurrogate, TrainError>
where
    F: Fn(&[f64]) -> (OdeSystem<'static>, Vec<f64>) + Sync,
{
    let d = space.dim();
    if cfg.n_train < d + 2 {
        return Err(TrainError::BadConfig("n_train must be at least dim + 2"));
    }
    if !(tspan.1 > tspan.0) {
        return Err(TrainError::BadConfig("time span must have positive length"));
    }
    cfg.fit.validate().map_err(TrainError::BadConfig)?;
    cfg.solver.validate().map_err(TrainError::BadConfig)?;
    cfg.reservoir.validate().map_err(TrainError::BadConfig)?;

    let mut seq = SobolSequencer::new(d).map_err(TrainError::Sobol)?;
    let params: Vec<Vec<f64>> =
        (0..cfg.n_train).map(|_| space.map_from_unit(&seq.next_point())).collect();

    let solve_at = |p: &Vec<f64>| -> Solution {
        let (system, y0) = family(p);
        solve_stiff(&system, tspan, &y0, &cfg.solver)
    };

    let truths = map_indexed(&params, solve_at);
    for (index, truth) in truths.iter().enumerate() {
        if !truth.is_success() {
            return Err(TrainError::GroundTruthFailed {
                index,
                param: params[index].clone(),
                status: truth.status(),
            });
        }
    }

    // The reference trajectory that drives the reservoir. The first
    // Sobol sample is the cube center, so under the default midpoint
    // rule the drive solve is already among the training solves.
    let pstar = match cfg.pstar_rule {
        PstarRule::BoxMidpoint => space.midpoint(),
        PstarRule::FirstSample => params[0].clone(),
    };
    let extra_solve;
    let pstar_truth: &Solution = match params.iter().position(|p| *p == pstar) {
        Some(i) => &truths[i],
        None => {
            extra_solve = solve_at(&pstar);
            if !extra_solve.is_success() {
                return Err(TrainError::GroundTruthFailed {
                    index: cfg.n_train,
                    param: pstar,
                    status: extra_solve.status(),
                });
            }
            &extra_solve
        }
    };

    let model_dim = pstar_truth.dim();
    let norm = if cfg.normalize_drive {
        DriveNormalization::from_solution(pstar_truth)
    } else {
        DriveNormalization::identity(model_dim)
    };

    let mats = build_reservoir(&cfg.reservoir, model_dim).map_err(TrainError::Reservoir)?;
    let reservoir_solution = simulate_reservoir(&mats, pstar_truth, &norm, &cfg.solver);
    if !reservoir_solution.sol.is_success() {
        return Err(TrainError::ReservoirSimulationFailed {
            status: reservoir_solution.sol.status(),
        });
    }

    let times = sample_times(tspan, &cfg.fit);
    let r = reservoir_solution.sample(&times).map_err(TrainError::Sampling)?;
    let fitter = ReadoutFitter::new(&r, &cfg.fit)
        .map_err(|error| TrainError::Fit { index: 0, error })?;

    let fits = map_indexed(&truths, |truth| -> Result<ReadoutMatrix, TrainError> {
        let mut x = sample_states(truth, &times).map_err(TrainError::Sampling)?;
        normalize_columns(&norm, &mut x);
        // Parameter tags are attached below, in index order.
        fitter.fit(&x, &[]).map_err(|error| TrainError::Fit { index: 0, error })
    });
    let mut matrices = Vec::with_capacity(cfg.n_train);
    for (index, fit) in fits.into_iter().enumerate() {
        let mut m = fit.map_err(|e| match e {
            TrainError::Fit { error, .. } => TrainError::Fit { index, error },
            other => other,
        })?;
        m.param = params[index].clone();
        matrices.push(m);
    }

    let interpolator = build_interpolator(space, &matrices)?;

    Ok(TrainedSurrogate {
        reservoir_solution,
        matrices,
        interpolator,
        space: space.clone(),
        drive_normalization: norm,
        tspan,
        metadata: SurrogateMetadata {
            model_name: model_name.to_string(),
            model_dim,
            reservoir_dim: cfg.reservoir.n_r,
            seed: cfg.reservoir.seed,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
        },
    })
}

/// Fits the readout interpolator over one matrix per training sample.
fn build_interpolator(
    space: &BoxSpace,
    matrices: &[ReadoutMatrix],
) -> Result<RbfInterpolator, TrainError> {
    let n = matrices.len();
    let first = matrices.first().ok_or(TrainError::BadConfig("no readout matrices"))?;
    let shape = (first.w.rows(), first.w.cols());
    let d = space.dim();
    let mut centers = Mat::zeros(n, d);
    let mut values = Mat::zeros(n, shape.0 * shape.1);
    for (i, m) in matrices.iter().enumerate() {
        if m.param.len() != d || m.w.rows() != shape.0 || m.w.cols() != shape.1 {
            return Err(TrainError::BadConfig("inconsistent readout matrices"));
        }
        centers.row_mut(i).copy_from_slice(&m.param);
        values.row_mut(i).copy_from_slice(m.w.data());
    }
    fit_rbf(space, &centers, &values, shape).map_err(TrainError::Rbf)
}

impl TrainedSurrogate {
    /// Rebuilds a surrogate from its stored pieces (the deserialization
    /// path). The interpolator is refit from the readout matrices, which
    /// reproduces the trained coefficients exactly: the fit is a
    /// deterministic function of (space, centers, values).
    pub fn from_parts(
        reservoir_solution: ReservoirSolution,
        matrices: Vec<ReadoutMatrix>,
        space: BoxSpace,
        drive_normalization: DriveNormalization,
        tspan: (f64, f64),
        metadata: SurrogateMetadata,
    ) -> Result<Self, TrainError> {
        if !(tspan.1 > tspan.0) {
            return Err(TrainError::BadConfig("time span must have positive length"));
        }
        if !(reservoir_solution.covers(tspan.0) && reservoir_solution.covers(tspan.1)) {
            return Err(TrainError::BadConfig("reservoir solution does not cover the span"));
        }
        let interpolator = build_interpolator(&space, &matrices)?;
        Ok(TrainedSurrogate {
            reservoir_solution,
            matrices,
            interpolator,
            space,
            drive_normalization,
            tspan,
            metadata,
        })
    }

    /// Predicts the model states at `p` on `times`, states as columns.
    ///
    /// This path performs no ODE solve: it evaluates the readout
    /// interpolator at `p` and reads the stored reservoir trajectory.
    pub fn predict(&self, p: &[f64], times: &[f64]) -> Result<Mat, PredictError> {
        let w = self.interpolator.eval(p).map_err(PredictError::Parameter)?;
        let readout = ReadoutMatrix { w, fit_residual: 0.0, param: p.to_vec() };
        crate::readout::predict_series(
            &readout,
            &self.reservoir_solution,
            &self.drive_normalization,
            times,
        )
        .map_err(PredictError::OutOfSpan)
    }
}

/// Why a validation row has no error report.
#[derive(Debug, Clone)]
pub enum ValidationFailure {
    SolveFailed(SolveStatus),
    PredictFailed(PredictError),
}

impl fmt::Display for ValidationFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValidationFailure::SolveFailed(status) => {
                write!(f, "ground-truth solve stopped: {status}")
            }
            ValidationFailure::PredictFailed(e) => write!(f, "prediction failed: {e}"),
        }
    }
}

/// One validated parameter: its error report, or why it has none.
#[derive(Debug, Clone)]
pub struct ValidationRow {
    pub param: Vec<f64>,
    pub outcome: Result<ErrorReport, ValidationFailure>,
}

/// Per-parameter validation results on the common evaluation grid.
#[derive(Debug, Clone)]
pub struct ValidationReport {
    pub rows: Vec<ValidationRow>,
}

impl ValidationReport {
    /// Overall errors of the rows that produced one, in row order.
    pub fn overall_errors(&self) -> Vec<f64> {
        self.rows
            .iter()
            .filter_map(|r| r.outcome.as_ref().ok().map(|rep| rep.overall))
            .collect()
    }

    /// Median of the successful overall errors (mean of the two middle
    /// values for even counts); None if every row failed.
    pub fn median_overall(&self) -> Option<f64> {
        let mut errors = self.overall_errors();
        if errors.is_empty() {
            return None;
        }
        errors.sort_by(f64::total_cmp);
        let n = errors.len();
        Some(if n % 2 == 1 {
            errors[n / 2]
        } else {
            0.5 * (errors[n / 2 - 1] + errors[n / 2])
        })
    }

    pub fn max_overall(&self) -> Option<f64> {
        self.overall_errors().into_iter().reduce(f64::max)
    }

    pub fn failures(&self) -> usize {
        self.rows.iter().filter(|r| r.outcome.is_err()).count()
    }
}

/// Checks the surrogate against fresh ground-truth solves at
/// `test_params`, comparing on the common evaluation grid. Failures are
/// recorded per row rather than aborting the sweep.
pub fn validate<F>(
    surrogate: &TrainedSurrogate,
    family: F,
    test_params: &[Vec<f64>],
    solver: &SolverConfig,
) -> ValidationReport
where
    F: Fn(&[f64]) -> (OdeSystem<'static>, Vec<f64>) + Sync,
{
    let times = evaluation_grid(surrogate.tspan);
    let rows = map_indexed(test_params, |p| {
        let (system, y0) = family(p);
        let truth = solve_stiff(&system, surrogate.tspan, &y0, solver);
        if !truth.is_success() {
            return ValidationRow {
                param: p.clone(),
                outcome: Err(ValidationFailure::SolveFailed(truth.status())),
            };
        }
        let outcome = match surrogate.predict(p, &times) {
            Err(e) => Err(ValidationFailure::PredictFailed(e)),
            Ok(pred) => {
                let truth_grid = sample_states(&truth, &times)
                    .expect("successful solve covers its span");
                let report = relative_error(&pred, &truth_grid)
                    .expect("prediction and truth share the grid shape");
                Ok(report)
            }
        };
        ValidationRow { param: p.clone(), outcome }
    });
    ValidationReport { rows }
}
