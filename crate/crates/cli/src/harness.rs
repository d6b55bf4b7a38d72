//! Experiment procedures: the parameter-space error heatmap and the
//! runtime-scaling study, plus the wall-clock helper both rely on.
//!
//! Timing uses the monotonic clock and reports the median of repeated
//! runs with one warm-up excluded, which is enough to tame allocator
//! and cache noise without a full benchmarking framework. Timed
//! sections run sequentially on one thread; only the untimed training
//! step parallelizes internally.

use std::fmt;
use std::time::Instant;

use ctesn_core::models::{heating_family, heating_param_space, HeatingParams, HEATING_SPAN};
use ctesn_core::ode::{solve_stiff, OdeSystem, SolveStatus, SolverConfig};
use ctesn_core::params::SobolSequencer;
use ctesn_core::readout::{relative_error, sample_states};
use ctesn_core::surrogate::{evaluation_grid, train, PredictError, TrainError};
use ctesn_core::{TrainedSurrogate, TrainingConfig};

/// Median wall-clock seconds over `reps` runs of `f`, after one
/// unmeasured warm-up run.
pub fn timing<F: FnMut()>(mut f: F, reps: usize) -> f64 {
    assert!(reps >= 1, "timing needs at least one repetition");
    f();
    let mut samples = Vec::with_capacity(reps);
    for _ in 0..reps {
        let start = Instant::now();
        f();
        samples.push(start.elapsed().as_secs_f64());
    }
    median(&mut samples)
}

fn median(samples: &mut [f64]) -> f64 {
    samples.sort_by(|a, b| a.total_cmp(b));
    let n = samples.len();
    if n % 2 == 1 {
        samples[n / 2]
    } else {
        0.5 * (samples[n / 2 - 1] + samples[n / 2])
    }
}

#[derive(Debug, Clone, Copy)]
pub struct HeatmapStats {
    pub min: f64,
    pub median: f64,
    pub p95: f64,
    pub max: f64,
}

#[derive(Debug, Clone)]
pub struct HeatmapResult {
    /// One entry per grid cell in row-major (p1, then p2) order; `None`
    /// marks a cell whose ground-truth solve failed.
    pub grid: Vec<(Vec<f64>, Option<f64>)>,
    pub resolution: (usize, usize),
    /// Error statistics over the cells that produced an error.
    pub stats: HeatmapStats,
}

impl HeatmapResult {
    pub fn missing(&self) -> usize {
        self.grid.iter().filter(|(_, e)| e.is_none()).count()
    }
}

#[derive(Debug)]
pub enum HarnessError {
    BadInput(String),
    Training { n_rooms: usize, error: TrainError },
    SolveFailed { n_rooms: usize, status: SolveStatus },
    Predict { n_rooms: usize, error: PredictError },
}

impl fmt::Display for HarnessError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            HarnessError::BadInput(msg) => write!(f, "{msg}"),
            HarnessError::Training { n_rooms, error } => {
                write!(f, "training failed at N={n_rooms}: {error}")
            }
            HarnessError::SolveFailed { n_rooms, status } => {
                write!(f, "full solve failed at N={n_rooms}: {status}")
            }
            HarnessError::Predict { n_rooms, error } => {
                write!(f, "prediction failed at N={n_rooms}: {error}")
            }
        }
    }
}

impl std::error::Error for HarnessError {}

/// Sweeps a uniform grid over the surrogate's 2-D parameter box,
/// corners included, comparing each prediction against a fresh stiff
/// solve on the common evaluation grid.
///
/// Cells are visited in (p1, p2) order and a failed ground-truth solve
/// leaves a hole rather than aborting the sweep. The statistics cover
/// the cells that produced an error; with no such cell they are NaN.
pub fn run_heatmap<F>(
    surrogate: &TrainedSurrogate,
    family: F,
    resolution: (usize, usize),
    solver: &SolverConfig,
) -> Result<HeatmapResult, HarnessError>
where
    F: Fn(&[f64]) -> (OdeSystem<'static>, Vec<f64>),
{
    let space = &surrogate.space;
    if space.dim() != 2 {
        return Err(HarnessError::BadInput(format!(
            "heatmaps need a 2-dimensional parameter box, got {}",
            space.dim()
        )));
    }
    let (n1, n2) = resolution;
    if n1 < 2 || n2 < 2 {
        return Err(HarnessError::BadInput(
            "heatmap resolution must be at least 2 per axis to include the corners".to_string(),
        ));
    }

    let times = evaluation_grid(surrogate.tspan);
    let mut grid = Vec::with_capacity(n1 * n2);
    for i in 0..n1 {
        let p1 = grid_coordinate(space.lower()[0], space.upper()[0], i, n1);
        for j in 0..n2 {
            let p2 = grid_coordinate(space.lower()[1], space.upper()[1], j, n2);
            let p = vec![p1, p2];
            let (system, y0) = family(&p);
            let truth = solve_stiff(&system, surrogate.tspan, &y0, solver);
            if !truth.is_success() {
                grid.push((p, None));
                continue;
            }
            let error = match surrogate.predict(&p, &times) {
                Err(_) => None,
                Ok(pred) => {
                    let truth_grid = sample_states(&truth, &times)
                        .expect("successful solve covers its span");
                    Some(relative_error(&pred, &truth_grid).overall)
                }
            };
            grid.push((p, error));
        }
    }

    let mut errors: Vec<f64> = grid.iter().filter_map(|(_, e)| *e).collect();
    let stats = if errors.is_empty() {
        HeatmapStats { min: f64::NAN, median: f64::NAN, p95: f64::NAN, max: f64::NAN }
    } else {
        errors.sort_by(|a, b| a.total_cmp(b));
        HeatmapStats {
            min: errors[0],
            median: median(&mut errors.clone()),
            p95: percentile_95(&errors),
            max: errors[errors.len() - 1],
        }
    };
    Ok(HeatmapResult { grid, resolution, stats })
}

/// Endpoint-exact uniform grid coordinate `k` of `n` over [lo, hi].
fn grid_coordinate(lo: f64, hi: f64, k: usize, n: usize) -> f64 {
    if k == 0 {
        lo
    } else if k == n - 1 {
        hi
    } else {
        lo + (hi - lo) * k as f64 / (n - 1) as f64
    }
}

/// Nearest-rank 95th percentile of an ascending-sorted slice.
fn percentile_95(sorted: &[f64]) -> f64 {
    let rank = (0.95 * sorted.len() as f64).ceil() as usize;
    sorted[rank.saturating_sub(1).min(sorted.len() - 1)]
}

#[derive(Debug, Clone)]
pub struct ScalingRow {
    pub n_rooms: usize,
    pub full_solve_seconds: f64,
    pub surrogate_train_seconds: f64,
    pub surrogate_predict_seconds: f64,
    pub max_relative_error: f64,
}

#[derive(Debug, Clone)]
pub struct ScalingResult {
    pub rows: Vec<ScalingRow>,
    /// Repetitions behind each full-solve timing median.
    pub timing_reps: usize,
}

/// Knobs for the scaling study. The error column is recorded from a
/// handful of unseen parameters, not gated, so the default training
/// setup stays modest to keep five trainings affordable.
#[derive(Debug, Clone)]
pub struct ScalingConfig {
    /// Coefficients shared by every network size; `n_rooms` is
    /// overwritten per row.
    pub base: HeatingParams,
    pub training: TrainingConfig,
    /// Full-solve timing repetitions, at least 5.
    pub solve_reps: usize,
    /// Prediction timing repetitions, at least 100.
    pub predict_reps: usize,
    /// Unseen parameters behind `max_relative_error`.
    pub unseen_count: usize,
}

impl Default for ScalingConfig {
    fn default() -> Self {
        ScalingConfig {
            base: HeatingParams::default(),
            training: TrainingConfig { n_train: 20, ..TrainingConfig::default() },
            solve_reps: 5,
            predict_reps: 100,
            unseen_count: 3,
        }
    }
}

/// Runs the scaling study over increasing room counts: per N, time a
/// full stiff solve at the box midpoint, train a surrogate, time its
/// prediction at the same midpoint, and record the worst relative
/// error at a few unseen parameters.
pub fn run_scaling(n_list: &[usize], cfg: &ScalingConfig) -> Result<ScalingResult, HarnessError> {
    if n_list.is_empty() {
        return Err(HarnessError::BadInput("the N list is empty".to_string()));
    }
    if !n_list.windows(2).all(|w| w[0] < w[1]) {
        return Err(HarnessError::BadInput("the N list must be strictly increasing".to_string()));
    }
    if cfg.solve_reps < 5 {
        return Err(HarnessError::BadInput("solve timing needs at least 5 repetitions".to_string()));
    }
    if cfg.predict_reps < 100 {
        return Err(HarnessError::BadInput(
            "prediction timing needs at least 100 repetitions".to_string(),
        ));
    }

    let space = heating_param_space();
    let midpoint = space.midpoint();
    let mut rows = Vec::with_capacity(n_list.len());
    for &n_rooms in n_list {
        let params = HeatingParams { n_rooms, ..cfg.base.clone() };
        let family = heating_family(params);

        let (system, y0) = family(&midpoint);
        let probe = solve_stiff(&system, HEATING_SPAN, &y0, &cfg.training.solver);
        if !probe.is_success() {
            return Err(HarnessError::SolveFailed { n_rooms, status: probe.status() });
        }
        let full_solve_seconds = timing(
            || {
                solve_stiff(&system, HEATING_SPAN, &y0, &cfg.training.solver);
            },
            cfg.solve_reps,
        );

        let start = Instant::now();
        let surrogate = train("heating", &family, &space, HEATING_SPAN, &cfg.training)
            .map_err(|error| HarnessError::Training { n_rooms, error })?;
        let surrogate_train_seconds = start.elapsed().as_secs_f64();

        let times = evaluation_grid(HEATING_SPAN);
        surrogate
            .predict(&midpoint, &times)
            .map_err(|error| HarnessError::Predict { n_rooms, error })?;
        let surrogate_predict_seconds = timing(
            || {
                let _ = surrogate.predict(&midpoint, &times);
            },
            cfg.predict_reps,
        );

        let mut sobol = SobolSequencer::from_index(space.dim(), cfg.training.n_train as u64 + 1)
            .expect("heating box dimension is supported");
        let mut max_relative_error = 0.0f64;
        for _ in 0..cfg.unseen_count {
            let p = space.map_from_unit(&sobol.next_point());
            let (system, y0) = family(&p);
            let truth = solve_stiff(&system, HEATING_SPAN, &y0, &cfg.training.solver);
            if !truth.is_success() {
                return Err(HarnessError::SolveFailed { n_rooms, status: truth.status() });
            }
            let pred = surrogate
                .predict(&p, &times)
                .map_err(|error| HarnessError::Predict { n_rooms, error })?;
            let truth_grid =
                sample_states(&truth, &times).expect("successful solve covers its span");
            max_relative_error = max_relative_error.max(relative_error(&pred, &truth_grid).overall);
        }

        rows.push(ScalingRow {
            n_rooms,
            full_solve_seconds,
            surrogate_train_seconds,
            surrogate_predict_seconds,
            max_relative_error,
        });
    }
    Ok(ScalingResult { rows, timing_reps: cfg.solve_reps })
}
