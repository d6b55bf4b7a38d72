//! Readout fitting: the trained half of the surrogate.
//!
//! A readout is a single matrix W mapping reservoir states to model
//! states, x(t) = W r(t). Fitting is linear least squares over a set of
//! sample times, stabilized by a singular-value decomposition so that
//! rank-deficient reservoir trajectories shrink the solution instead of
//! blowing it up. One [`ReadoutFitter`] decomposes the reservoir sample
//! matrix once and serves every per-parameter fit from that
//! factorization.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

#[allow(unused_imports)]
use num_traits::Float;

use crate::linalg::{thin_svd, Mat};
use crate::ode::{interpolate_into, OutOfRange, Solution};
use crate::reservoir::{DriveNormalization, ReservoirSolution};

/// Floor for relative denominators, so all-zero references divide
/// cleanly instead of producing NaN.
const ZERO_FLOOR: f64 = 1e-300;

/// Spacing of fit sample times across the training span.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimeGrid {
    /// Log-spaced offsets from the span start; resolves fast transients
    /// that live many decades below the span length.
    Log,
    /// Uniform spacing, endpoints included.
    Linear,
}

/// Least-squares configuration for readout fits.
#[derive(Debug, Clone, PartialEq)]
pub struct FitConfig {
    /// Number of sample times T.
    pub n_samples: usize,
    /// Tikhonov parameter; 0 selects the plain SVD pseudoinverse.
    pub ridge: f64,
    /// Relative singular-value cutoff for the pseudoinverse.
    pub svd_cutoff: f64,
    pub time_grid: TimeGrid,
}

impl Default for FitConfig {
    fn default() -> Self {
        FitConfig { n_samples: 200, ridge: 0.0, svd_cutoff: 1e-10, time_grid: TimeGrid::Log }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<(), &'static str> {
        if self.n_samples < 2 {
            return Err("need at least two sample times");
        }
        if !(self.ridge >= 0.0) {
            return Err("ridge parameter must be nonnegative");
        }
        if !(self.svd_cutoff >= 0.0) {
            return Err("svd cutoff must be nonnegative");
        }
        Ok(())
    }
}

/// A fitted readout: x = w r, with the training residual and the
/// parameter vector the fit belongs to.
#[derive(Debug, Clone)]
pub struct ReadoutMatrix {
    pub w: Mat,
    /// Relative Frobenius residual of the training fit,
    /// |W R - X| / max(|X|, floor).
    pub fit_residual: f64,
    pub param: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum FitError {
    /// The reservoir sample matrix contains NaN or infinity.
    NonFiniteReservoir,
    /// The fit targets contain NaN or infinity.
    NonFiniteTargets,
    ShapeMismatch { expected: (usize, usize), got: (usize, usize) },
}

impl fmt::Display for FitError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FitError::NonFiniteReservoir => write!(f, "reservoir samples are not finite"),
            FitError::NonFiniteTargets => write!(f, "fit targets are not finite"),
            FitError::ShapeMismatch { expected, got } => write!(
                f,
                "shape mismatch: expected {}x{}, got {}x{}",
                expected.0, expected.1, got.0, got.1
            ),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for FitError {}

/// Offset of the first interior log-grid point, as a fraction of the
/// span. The reservoir clock (see [`crate::reservoir::TimeWarp`]) uses
/// the same fraction so log sample grids land nearly uniformly on it.
pub(crate) const LOG_OFFSET_FRACTION: f64 = 1e-6;

/// Sample times for a training fit across `span`.
///
/// The linear grid is uniform with both endpoints included. The log grid
/// places T-1 points log-spaced over offsets (eps, tf - t0] from the
/// span start with eps = 1e-6 of the span, then prepends the start
/// itself, so the earliest sampled offset sits six decades below the
/// span length. Endpoints are assigned exactly, not computed, so they
/// land bitwise on the span bounds.
pub fn sample_times(span: (f64, f64), cfg: &FitConfig) -> Vec<f64> {
    let (t0, tf) = span;
    assert!(tf > t0, "span must have positive length");
    cfg.validate().expect("invalid fit config");
    let n = cfg.n_samples;
    let mut times = Vec::with_capacity(n);
    match cfg.time_grid {
        TimeGrid::Linear => {
            let h = (tf - t0) / (n - 1) as f64;
            times.push(t0);
            for k in 1..n - 1 {
                times.push(t0 + k as f64 * h);
            }
            times.push(tf);
        }
        TimeGrid::Log => {
            let len = tf - t0;
            let eps = LOG_OFFSET_FRACTION * len;
            times.push(t0);
            if n > 2 {
                times.push(t0 + eps);
                let ratio = len / eps;
                for k in 1..n - 2 {
                    let frac = k as f64 / (n - 2) as f64;
                    times.push(t0 + eps * ratio.powf(frac));
                }
            }
            times.push(tf);
        }
    }
    debug_assert!(times.windows(2).all(|w| w[0] < w[1]));
    times
}

/// Samples a solution on a time grid, states as columns.
pub fn sample_states(sol: &Solution, times: &[f64]) -> Result<Mat, OutOfRange> {
    let dim = sol.dim();
    let mut out = Mat::zeros(dim, times.len());
    let mut col = vec![0.0; dim];
    for (k, &tk) in times.iter().enumerate() {
        interpolate_into(sol, tk, &mut col)?;
        out.set_col(k, &col);
    }
    Ok(out)
}

/// Samples the reservoir trajectory and the ground truth on a common
/// time grid: column k of R is the reservoir state at times[k], column k
/// of X the model state.
pub fn collect_matrices(
    res: &ReservoirSolution,
    truth: &Solution,
    times: &[f64],
) -> Result<(Mat, Mat), OutOfRange> {
    Ok((res.sample(times)?, sample_states(truth, times)?))
}

/// Precomputed least-squares machinery for one reservoir sample matrix.
///
/// Feature rows are equilibrated to unit maximum before decomposing:
/// reservoir coordinates can drift to magnitudes near the span length
/// while the structure that resolves fast transients lives at scale
/// one, and without equilibration that structure sits so far below the
/// top singular value that the cutoff (and double-precision SVD
/// accuracy) destroys it. The row scaling is folded back into the
/// projector, so fitted readouts still apply to raw reservoir states.
///
/// Decomposing the scaled R = U S V^T once turns every fit into two
/// small matrix products: W = X V f(S) U^T D^-1, where f is the
/// spectral filter (inverse with cutoff, or the ridge filter
/// s/(s^2 + ridge)) and D holds the row scales. Training fits one
/// readout per parameter sample against the same reservoir, so the
/// shared decomposition dominates the cost of the whole readout stage.
#[derive(Debug, Clone)]
pub struct ReadoutFitter {
    /// Right factor P = V f(S) U^T D^-1 with W = X P, shape T x N_R.
    projector: Mat,
    /// The reservoir samples, kept for residual evaluation.
    r: Mat,
}

impl ReadoutFitter {
    pub fn new(r: &Mat, cfg: &FitConfig) -> Result<Self, FitError> {
        cfg.validate().expect("invalid fit config");
        if !r.is_finite() {
            return Err(FitError::NonFiniteReservoir);
        }
        let mut scales = vec![1.0; r.rows()];
        for (i, d) in scales.iter_mut().enumerate() {
            let m = r.row(i).iter().fold(0.0f64, |m, x| m.max(x.abs()));
            if m > ZERO_FLOOR {
                *d = m;
            }
        }
        let mut scaled = r.clone();
        for i in 0..scaled.rows() {
            for x in scaled.row_mut(i) {
                *x /= scales[i];
            }
        }
        let svd = thin_svd(&scaled);
        let sigma_max = svd.sigma.first().copied().unwrap_or(0.0);
        let threshold = cfg.svd_cutoff * sigma_max;
        let filtered: Vec<f64> = svd
            .sigma
            .iter()
            .map(|&s| {
                if cfg.ridge > 0.0 {
                    s / (s * s + cfg.ridge)
                } else if s > threshold && s > 0.0 {
                    1.0 / s
                } else {
                    0.0
                }
            })
            .collect();
        // P = V diag(filtered) U^T D^-1, assembled without forming diag.
        let k = filtered.len();
        let t = svd.v.rows();
        let n_r = svd.u.rows();
        let mut projector = Mat::zeros(t, n_r);
        for a in 0..t {
            for c in 0..k {
                let vf = svd.v[(a, c)] * filtered[c];
                if vf == 0.0 {
                    continue;
                }
                for b in 0..n_r {
                    projector[(a, b)] += vf * svd.u[(b, c)];
                }
            }
        }
        for a in 0..t {
            for (b, scale) in scales.iter().enumerate() {
                projector[(a, b)] /= scale;
            }
        }
        Ok(ReadoutFitter { projector, r: r.clone() })
    }

    pub fn n_samples(&self) -> usize {
        self.r.cols()
    }

    pub fn reservoir_dim(&self) -> usize {
        self.r.rows()
    }

    /// Fits W against targets `x` (model states by sample times) and
    /// tags the result with `param`.
    pub fn fit(&self, x: &Mat, param: &[f64]) -> Result<ReadoutMatrix, FitError> {
        if x.cols() != self.r.cols() {
            return Err(FitError::ShapeMismatch {
                expected: (x.rows(), self.r.cols()),
                got: (x.rows(), x.cols()),
            });
        }
        if !x.is_finite() {
            return Err(FitError::NonFiniteTargets);
        }
        let w = x.matmul(&self.projector);
        let reconstructed = w.matmul(&self.r);
        let mut diff = 0.0;
        for (a, b) in reconstructed.data().iter().zip(x.data()) {
            let d = a - b;
            diff += d * d;
        }
        let fit_residual = diff.sqrt() / x.frob_norm().max(ZERO_FLOOR);
        Ok(ReadoutMatrix { w, fit_residual, param: param.to_vec() })
    }
}

/// One-shot fit of W against (R, X); see [`ReadoutFitter`] for the
/// amortized variant.
pub fn fit_readout(r: &Mat, x: &Mat, cfg: &FitConfig) -> Result<ReadoutMatrix, FitError> {
    ReadoutFitter::new(r, cfg)?.fit(x, &[])
}

/// Evaluates x(t) = W r(t) on `times` and maps the result back to
/// physical units through the inverse drive normalization. Returns the
/// model states as columns, one per time.
pub fn predict_series(
    readout: &ReadoutMatrix,
    res: &ReservoirSolution,
    norm: &DriveNormalization,
    times: &[f64],
) -> Result<Mat, OutOfRange> {
    let n = readout.w.rows();
    assert_eq!(readout.w.cols(), res.dim(), "readout width != reservoir dim");
    assert_eq!(norm.dim(), n, "normalization dimension mismatch");
    let mut out = Mat::zeros(n, times.len());
    let mut r_state = vec![0.0; res.dim()];
    let mut x_col = vec![0.0; n];
    for (k, &tk) in times.iter().enumerate() {
        res.state_at(tk, &mut r_state)?;
        readout.w.matvec(&r_state, &mut x_col);
        norm.denormalize(&mut x_col);
        out.set_col(k, &x_col);
    }
    Ok(out)
}

/// Per-component relative errors between a prediction and a reference,
/// each normalized by that component's largest reference magnitude over
/// the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorReport {
    /// err_i = max_k |pred_ik - truth_ik| / max_k |truth_ik|; NaN for
    /// skipped components.
    pub per_component: Vec<f64>,
    /// Components whose reference row never exceeds the zero floor.
    pub skipped: Vec<usize>,
    /// Largest per-component error over the non-skipped components.
    pub overall: f64,
}

/// Compares two series of equal shape (components by times).
///
/// Each component is normalized by its own max magnitude over time, so
/// components living on very different scales are weighted evenly and
/// near-zero crossings do not inflate the error.
pub fn relative_error(pred: &Mat, truth: &Mat) -> Result<ErrorReport, FitError> {
    if pred.rows() != truth.rows() || pred.cols() != truth.cols() {
        return Err(FitError::ShapeMismatch {
            expected: (truth.rows(), truth.cols()),
            got: (pred.rows(), pred.cols()),
        });
    }
    let mut per_component = Vec::with_capacity(truth.rows());
    let mut skipped = Vec::new();
    let mut overall = 0.0f64;
    for i in 0..truth.rows() {
        let mut max_diff = 0.0f64;
        let mut max_ref = 0.0f64;
        for k in 0..truth.cols() {
            max_diff = max_diff.max((pred[(i, k)] - truth[(i, k)]).abs());
            max_ref = max_ref.max(truth[(i, k)].abs());
        }
        if max_ref < ZERO_FLOOR {
            skipped.push(i);
            per_component.push(f64::NAN);
        } else {
            let err = max_diff / max_ref;
            per_component.push(err);
            overall = overall.max(err);
        }
    }
    Ok(ErrorReport { per_component, skipped, overall })
}
