//! Fixed random reservoir construction and simulation.
//!
//! The reservoir is the untrained half of the surrogate: a sparse random
//! coupling matrix A and a dense input matrix W_in, both drawn once from
//! a seeded generator and never touched by training. Driving the
//! reservoir ODE r' = tanh(A r + W_in x(t)) with one reference model
//! trajectory produces the shared state history that every readout fit
//! and prediction reuses.
//!
//! The reservoir runs on a logarithmic clock (see [`TimeWarp`]): stiff
//! trajectories pack their transients into the first few decades of a
//! span that can run six orders of magnitude longer, and a unit-rate
//! reservoir integrated against physical time sleeps through the
//! transient and then drifts, saturated, for the rest of the span.
//! Reparameterizing time as s = ln(1 + (t - t0)/eps) gives every decade
//! equal dynamical resolution and bounds the reservoir state by the
//! warped span length, which is a fixed constant regardless of the
//! physical span.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

#[allow(unused_imports)]
use num_traits::Float;

use crate::linalg::Mat;
use crate::ode::{interpolate_into, solve_explicit, OdeSystem, OutOfRange, Solution, SolverConfig};
use crate::readout::LOG_OFFSET_FRACTION;
use crate::rng::{derive_seed, Xoshiro256pp};
use crate::sparse::CsrMatrix;

/// Seed streams carved out of the reservoir seed; one generator per
/// purpose keeps draws independent of each other's consumption order.
const STREAM_A: u64 = 0;
const STREAM_W_IN: u64 = 1;
const STREAM_POWER_ITER: u64 = 2;
const STREAM_A_RETRY: u64 = 3;

/// Fixed seed for the standalone spectral-radius estimator's start
/// vectors, so the one-argument public function is deterministic.
const SPECTRAL_SEED: u64 = 0x5EED_0F_5BEC_7EA1;

/// Shape of the random reservoir to build.
#[derive(Debug, Clone, PartialEq)]
pub struct ReservoirSpec {
    /// Reservoir dimension N_R.
    pub n_r: usize,
    /// Fraction of nonzero entries in A, in (0, 1].
    pub density: f64,
    /// Target spectral radius of A after rescaling.
    pub spectral_radius: f64,
    /// Entries of W_in are uniform in [-input_scale, input_scale].
    pub input_scale: f64,
    /// Seed for all random draws.
    pub seed: u64,
}

impl Default for ReservoirSpec {
    fn default() -> Self {
        ReservoirSpec {
            n_r: 300,
            density: 0.01,
            spectral_radius: 0.1,
            input_scale: 1.0,
            seed: 42,
        }
    }
}

impl ReservoirSpec {
    pub fn validate(&self) -> Result<(), &'static str> {
        if self.n_r == 0 {
            return Err("reservoir dimension must be at least 1");
        }
        if !(self.density > 0.0 && self.density <= 1.0) {
            return Err("density must lie in (0, 1]");
        }
        if !(self.spectral_radius > 0.0) {
            return Err("spectral radius target must be positive");
        }
        if !(self.input_scale > 0.0) {
            return Err("input scale must be positive");
        }
        Ok(())
    }
}

/// The built reservoir: sparse coupling, dense input map, and the spec
/// that generated them.
#[derive(Debug, Clone)]
pub struct ReservoirMatrices {
    pub a: CsrMatrix,
    pub w_in: Mat,
    pub spec: ReservoirSpec,
    pub model_dim: usize,
}

/// Map between physical time and the clock the reservoir integrates on.
///
/// The log warp s = ln(1 + (t - t0)/eps) sends the physical span onto
/// [0, ln(1 + 1/f)] where f is the relative offset shared with the
/// sampling grid, so the warped span is about 13.8 clock units for any
/// model. Log-spaced sample times land nearly uniformly on the clock,
/// which is what makes readouts fitted on such grids well conditioned.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum TimeWarp {
    /// Clock equal to physical time.
    Identity,
    /// s = ln(1 + (t - t0) / eps).
    Log { t0: f64, eps: f64 },
}

impl TimeWarp {
    /// The log warp for a drive over `span`, with the same relative
    /// offset the sampling grid uses.
    pub fn log_over(span: (f64, f64)) -> TimeWarp {
        TimeWarp::Log { t0: span.0, eps: LOG_OFFSET_FRACTION * (span.1 - span.0) }
    }

    /// Physical time to clock time.
    pub fn warp(&self, t: f64) -> f64 {
        match *self {
            TimeWarp::Identity => t,
            TimeWarp::Log { t0, eps } => ((t - t0) / eps).ln_1p(),
        }
    }

    /// Clock time back to physical time.
    pub fn unwarp(&self, s: f64) -> f64 {
        match *self {
            TimeWarp::Identity => s,
            TimeWarp::Log { t0, eps } => t0 + eps * s.exp_m1(),
        }
    }
}

/// Reservoir trajectory from one driven simulation. The stored solution
/// knots live on the reservoir clock; all queries take physical time and
/// go through the warp.
#[derive(Debug, Clone)]
pub struct ReservoirSolution {
    pub sol: Solution,
    pub warp: TimeWarp,
    pub drive_span: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BuildError {
    BadSpec(&'static str),
    /// The random draw (and one retry) produced a matrix whose spectral
    /// radius is numerically zero, so it cannot be rescaled.
    DegenerateSpectralRadius,
}

impl fmt::Display for BuildError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BuildError::BadSpec(msg) => write!(f, "invalid reservoir spec: {msg}"),
            BuildError::DegenerateSpectralRadius => {
                write!(f, "random reservoir has numerically zero spectral radius")
            }
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for BuildError {}

/// Draws the sparse coupling matrix pattern and values from `rng`.
/// Entries are visited row-major so the column indices of each row come
/// out ordered, as the compressed-row layout requires.
fn draw_sparse(rng: &mut Xoshiro256pp, n: usize, density: f64) -> CsrMatrix {
    let mut rows: Vec<Vec<(usize, f64)>> = Vec::with_capacity(n);
    for _ in 0..n {
        let mut row = Vec::new();
        for j in 0..n {
            if rng.uniform() < density {
                row.push((j, rng.uniform_in(-1.0, 1.0)));
            }
        }
        rows.push(row);
    }
    CsrMatrix::from_rows(n, rows)
}

/// Builds the fixed random reservoir for a model with `model_dim`
/// states. Fully deterministic given (spec, model_dim): A's pattern and
/// values come from one seed stream, W_in from another, so neither
/// depends on how many draws the other consumed.
pub fn build_reservoir(
    spec: &ReservoirSpec,
    model_dim: usize,
) -> Result<ReservoirMatrices, BuildError> {
    spec.validate().map_err(BuildError::BadSpec)?;
    if model_dim == 0 {
        return Err(BuildError::BadSpec("model dimension must be at least 1"));
    }

    // Floor the density so an expected row has at least one entry; a
    // 300-state reservoir at the default 1% keeps its requested value.
    let density = spec.density.max(1.0 / spec.n_r as f64);

    let mut a_rng = Xoshiro256pp::new(derive_seed(spec.seed, STREAM_A));
    let mut a = draw_sparse(&mut a_rng, spec.n_r, density);
    let power_seed = derive_seed(spec.seed, STREAM_POWER_ITER);
    let mut rho = estimate_spectral_radius_seeded(&a, power_seed);
    if rho.value <= f64::EPSILON {
        let mut retry_rng = Xoshiro256pp::new(derive_seed(spec.seed, STREAM_A_RETRY));
        a = draw_sparse(&mut retry_rng, spec.n_r, density);
        rho = estimate_spectral_radius_seeded(&a, power_seed);
        if rho.value <= f64::EPSILON {
            return Err(BuildError::DegenerateSpectralRadius);
        }
    }
    a.scale(spec.spectral_radius / rho.value);

    let mut w_rng = Xoshiro256pp::new(derive_seed(spec.seed, STREAM_W_IN));
    let w_in = Mat::from_fn(spec.n_r, model_dim, |_, _| {
        w_rng.uniform_in(-spec.input_scale, spec.input_scale)
    });

    Ok(ReservoirMatrices { a, w_in, spec: spec.clone(), model_dim })
}

/// Spectral-radius estimate with a convergence flag; `converged` is
/// false when the iteration hit its budget or the matrix is degenerate
/// (for example identically zero).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralEstimate {
    pub value: f64,
    pub converged: bool,
}

/// Estimates the spectral radius of a square sparse matrix.
///
/// Uses subspace iteration with a two-column block: real nonsymmetric
/// random matrices routinely have a dominant complex-conjugate pair, for
/// which single-vector power iteration fails to settle (the iterate
/// rotates forever). Projecting onto the two-dimensional block recovers
/// the pair's modulus as sqrt(det) of the projected 2x2 matrix.
pub fn estimate_spectral_radius(a: &CsrMatrix) -> SpectralEstimate {
    estimate_spectral_radius_seeded(a, SPECTRAL_SEED)
}

pub(crate) fn estimate_spectral_radius_seeded(a: &CsrMatrix, seed: u64) -> SpectralEstimate {
    assert_eq!(a.n_rows(), a.n_cols(), "spectral radius needs a square matrix");
    let n = a.n_rows();
    const TOL: f64 = 1e-6;
    const MAX_ITERS: usize = 1000;

    let mut rng = Xoshiro256pp::new(seed);
    let cols = 2.min(n);
    let mut q: Vec<Vec<f64>> = (0..cols)
        .map(|_| (0..n).map(|_| rng.uniform_in(-1.0, 1.0)).collect())
        .collect();
    if !orthonormalize(&mut q, &mut rng) {
        return SpectralEstimate { value: 0.0, converged: false };
    }

    let mut z: Vec<Vec<f64>> = vec![vec![0.0; n]; cols];
    let mut rho_prev = f64::INFINITY;
    for _ in 0..MAX_ITERS {
        for (zi, qi) in z.iter_mut().zip(&q) {
            a.matvec(qi, zi);
        }
        // Projected matrix B = Q^T (A Q), at most 2x2.
        let b00 = dot(&q[0], &z[0]);
        let rho = if cols == 2 {
            let b01 = dot(&q[0], &z[1]);
            let b10 = dot(&q[1], &z[0]);
            let b11 = dot(&q[1], &z[1]);
            block_modulus(b00, b01, b10, b11)
        } else {
            b00.abs()
        };

        if (rho - rho_prev).abs() <= TOL * rho.max(1e-30) {
            return SpectralEstimate { value: rho, converged: true };
        }
        rho_prev = rho;

        for (qi, zi) in q.iter_mut().zip(&z) {
            qi.copy_from_slice(zi);
        }
        if !orthonormalize(&mut q, &mut rng) {
            // The iterate died: every direction the matrix produces has
            // collapsed, so the spectral radius is numerically zero.
            return SpectralEstimate { value: 0.0, converged: false };
        }
    }
    SpectralEstimate { value: rho_prev, converged: false }
}

/// Largest eigenvalue modulus of [[b00, b01], [b10, b11]]; a negative
/// discriminant means a complex pair with squared modulus det.
fn block_modulus(b00: f64, b01: f64, b10: f64, b11: f64) -> f64 {
    let tr = b00 + b11;
    let det = b00 * b11 - b01 * b10;
    let disc = tr * tr - 4.0 * det;
    if disc >= 0.0 {
        let root = disc.sqrt();
        (0.5 * (tr + root)).abs().max((0.5 * (tr - root)).abs())
    } else {
        det.sqrt()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// In-place Gram-Schmidt. A collapsed second column is replaced by one
/// fresh random draw; a collapsed first column (or a repeat collapse)
/// reports failure.
fn orthonormalize(q: &mut [Vec<f64>], rng: &mut Xoshiro256pp) -> bool {
    const COLLAPSE: f64 = 1e-300;
    let norm0 = dot(&q[0], &q[0]).sqrt();
    if norm0 < COLLAPSE {
        return false;
    }
    for x in q[0].iter_mut() {
        *x /= norm0;
    }
    if q.len() == 1 {
        return true;
    }
    for attempt in 0..2 {
        let proj = dot(&q[0], &q[1]);
        let (head, tail) = q.split_at_mut(1);
        for (x1, &x0) in tail[0].iter_mut().zip(head[0].iter()) {
            *x1 -= proj * x0;
        }
        let norm1 = dot(&q[1], &q[1]).sqrt();
        if norm1 >= COLLAPSE {
            for x in q[1].iter_mut() {
                *x /= norm1;
            }
            return true;
        }
        if attempt == 0 {
            for x in q[1].iter_mut() {
                *x = rng.uniform_in(-1.0, 1.0);
            }
        }
    }
    false
}

/// Per-component affine map taking each model state into [-1, 1] over
/// the reference trajectory, so components spanning many orders of
/// magnitude drive the reservoir evenly. Values outside the reference
/// range map smoothly outside [-1, 1]; there is no clamping.
#[derive(Debug, Clone, PartialEq)]
pub struct DriveNormalization {
    pub offset: Vec<f64>,
    pub scale: Vec<f64>,
}

impl DriveNormalization {
    /// Ranges read off the stored states of `sol`. A component that
    /// never moves gets scale 1 so the map stays invertible.
    pub fn from_solution(sol: &Solution) -> Self {
        let dim = sol.dim();
        let mut lo = vec![f64::INFINITY; dim];
        let mut hi = vec![f64::NEG_INFINITY; dim];
        for k in 0..sol.len() {
            for (i, &x) in sol.state(k).iter().enumerate() {
                lo[i] = lo[i].min(x);
                hi[i] = hi[i].max(x);
            }
        }
        let mut offset = vec![0.0; dim];
        let mut scale = vec![1.0; dim];
        for i in 0..dim {
            offset[i] = 0.5 * (hi[i] + lo[i]);
            let half_range = 0.5 * (hi[i] - lo[i]);
            if half_range > 0.0 && half_range.is_finite() {
                scale[i] = half_range;
            }
        }
        DriveNormalization { offset, scale }
    }

    /// The do-nothing map, for running with normalization disabled.
    pub fn identity(dim: usize) -> Self {
        DriveNormalization { offset: vec![0.0; dim], scale: vec![1.0; dim] }
    }

    pub fn dim(&self) -> usize {
        self.offset.len()
    }

    /// Physical units to normalized, in place.
    pub fn normalize(&self, x: &mut [f64]) {
        for ((x, &o), &s) in x.iter_mut().zip(&self.offset).zip(&self.scale) {
            *x = (*x - o) / s;
        }
    }

    /// Normalized back to physical units, in place.
    pub fn denormalize(&self, x: &mut [f64]) {
        for ((x, &o), &s) in x.iter_mut().zip(&self.offset).zip(&self.scale) {
            *x = *x * s + o;
        }
    }
}

/// Integrates the reservoir ODE r' = tanh(A r + W_in x(t)) across the
/// drive's span, on the logarithmic clock: the solver walks
/// s in [0, ln(1 + 1/f)] and the drive is read at the physical time each
/// clock value maps back to.
///
/// The reservoir starts from r(0) = 1 in every component rather than
/// zero: a nonzero start keeps the initial reservoir state linearly
/// useful to the readout, which must reproduce the model's initial
/// condition at the very first fitting time.
pub fn simulate_reservoir(
    mats: &ReservoirMatrices,
    drive: &Solution,
    norm: &DriveNormalization,
    cfg: &SolverConfig,
) -> ReservoirSolution {
    assert_eq!(drive.dim(), mats.model_dim, "drive dimension mismatch");
    assert_eq!(norm.dim(), mats.model_dim, "normalization dimension mismatch");
    assert!(!drive.is_empty(), "drive trajectory is empty");
    let t0 = drive.times()[0];
    let tf = *drive.times().last().unwrap();
    assert!(tf > t0, "drive span must have positive length");
    let n_r = mats.spec.n_r;
    let model_dim = mats.model_dim;
    let warp = TimeWarp::log_over((t0, tf));
    let s_end = warp.warp(tf);

    let system = OdeSystem::new(n_r, move |s, r, drdt| {
        // Clamp the unwarped stage time: rounding may land a hair
        // outside the drive's knots at either end.
        let t = warp.unwarp(s).clamp(t0, tf);
        let mut x = vec![0.0; model_dim];
        interpolate_into(drive, t, &mut x).expect("drive covers the simulated span");
        norm.normalize(&mut x);
        mats.a.matvec(r, drdt);
        for (i, out) in drdt.iter_mut().enumerate() {
            let mut acc = *out;
            for (j, &xj) in x.iter().enumerate() {
                acc += mats.w_in[(i, j)] * xj;
            }
            *out = acc.tanh();
        }
    });

    let r0 = vec![1.0; n_r];
    let sol = solve_explicit(&system, (0.0, s_end), &r0, cfg);
    ReservoirSolution { sol, warp, drive_span: (t0, tf) }
}

impl ReservoirSolution {
    pub fn covers(&self, t: f64) -> bool {
        t >= self.drive_span.0 && t <= self.drive_span.1
    }

    pub fn dim(&self) -> usize {
        self.sol.dim()
    }

    /// Reservoir state at physical time `t`, written into `out`.
    pub fn state_at(&self, t: f64, out: &mut [f64]) -> Result<(), OutOfRange> {
        if !self.covers(t) {
            return Err(OutOfRange {
                t,
                t_first: self.drive_span.0,
                t_last: self.drive_span.1,
            });
        }
        let times = self.sol.times();
        let (s0, s1) = (times[0], times[times.len() - 1]);
        // The warp of an in-span time lands inside the stored clock range
        // up to rounding at the ends; clamp so those hit the end knots.
        let s = self.warp.warp(t).clamp(s0, s1);
        interpolate_into(&self.sol, s, out)
    }

    /// Reservoir states on a physical time grid, states as columns.
    pub fn sample(&self, times: &[f64]) -> Result<Mat, OutOfRange> {
        let mut out = Mat::zeros(self.sol.dim(), times.len());
        let mut col = vec![0.0; self.sol.dim()];
        for (k, &tk) in times.iter().enumerate() {
            self.state_at(tk, &mut col)?;
            out.set_col(k, &col);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::{robertson, robertson_initial_state, RobertsonParams};
    use crate::ode::{solve_stiff, SolveStatus};
    use crate::readout::{sample_times, FitConfig};

    fn dense_to_csr(m: &Mat) -> CsrMatrix {
        let rows: Vec<Vec<(usize, f64)>> = (0..m.rows())
            .map(|i| {
                (0..m.cols())
                    .filter(|&j| m[(i, j)] != 0.0)
                    .map(|j| (j, m[(i, j)]))
                    .collect()
            })
            .collect();
        CsrMatrix::from_rows(m.cols(), rows)
    }

    #[test]
    fn spec_validation_catches_bad_fields() {
        assert!(ReservoirSpec::default().validate().is_ok());
        assert!(ReservoirSpec { n_r: 0, ..Default::default() }.validate().is_err());
        assert!(ReservoirSpec { density: 0.0, ..Default::default() }.validate().is_err());
        assert!(ReservoirSpec { density: 1.5, ..Default::default() }.validate().is_err());
        assert!(ReservoirSpec { spectral_radius: 0.0, ..Default::default() }
            .validate()
            .is_err());
        assert!(ReservoirSpec { input_scale: -1.0, ..Default::default() }
            .validate()
            .is_err());
    }

    #[test]
    fn build_is_bitwise_deterministic() {
        let spec = ReservoirSpec::default();
        let first = build_reservoir(&spec, 3).unwrap();
        let second = build_reservoir(&spec, 3).unwrap();
        assert_eq!(first.a.bits_hash(), second.a.bits_hash());
        assert_eq!(first.w_in.bits_hash(), second.w_in.bits_hash());
        let other_seed = build_reservoir(&ReservoirSpec { seed: 43, ..spec }, 3).unwrap();
        assert_ne!(first.a.bits_hash(), other_seed.a.bits_hash());
    }

    #[test]
    fn full_density_fills_the_matrix() {
        let spec = ReservoirSpec { n_r: 2, density: 1.0, ..Default::default() };
        let mats = build_reservoir(&spec, 1).unwrap();
        assert_eq!(mats.a.nnz(), 4);
    }

    #[test]
    fn default_build_hits_density_and_radius_targets() {
        let spec = ReservoirSpec::default();
        let mats = build_reservoir(&spec, 3).unwrap();
        let expected_nnz = spec.density * (spec.n_r * spec.n_r) as f64;
        let nnz = mats.a.nnz() as f64;
        assert!(
            (nnz - expected_nnz).abs() <= 0.2 * expected_nnz,
            "nnz {nnz} vs expected {expected_nnz}"
        );
        // A random sparse matrix this size has closely spaced top
        // moduli, so the budgeted iteration may stop short of full
        // convergence; the estimate still has to land in the 5% window.
        let rho = estimate_spectral_radius(&mats.a);
        assert!(rho.value > 0.0);
        assert!(
            (rho.value - spec.spectral_radius).abs() <= 0.05 * spec.spectral_radius,
            "estimated radius {}",
            rho.value
        );
        assert_eq!(mats.w_in.rows(), spec.n_r);
        assert_eq!(mats.w_in.cols(), 3);
        assert!(mats.w_in.data().iter().all(|&w| w.abs() <= spec.input_scale));
    }

    #[test]
    fn spectral_radius_of_simple_matrices() {
        let eye = dense_to_csr(&Mat::identity(5));
        let est = estimate_spectral_radius(&eye);
        assert!(est.converged);
        assert!((est.value - 1.0).abs() < 1e-6);

        let diag = dense_to_csr(&Mat::from_vec(2, 2, vec![3.0, 0.0, 0.0, -1.0]));
        let est = estimate_spectral_radius(&diag);
        assert!(est.converged);
        assert!((est.value - 3.0).abs() < 1e-5);

        let zero = CsrMatrix::from_rows(4, vec![vec![], vec![], vec![], vec![]]);
        let est = estimate_spectral_radius(&zero);
        assert_eq!(est.value, 0.0);
        assert!(!est.converged, "zero matrix must be flagged degenerate");
    }

    #[test]
    fn spectral_radius_resolves_complex_dominant_pairs() {
        // Eigenvalues +/-2i: a single power-iteration vector never
        // settles on this matrix, the two-column block must.
        let rot = dense_to_csr(&Mat::from_vec(2, 2, vec![0.0, -2.0, 2.0, 0.0]));
        let est = estimate_spectral_radius(&rot);
        assert!(est.converged);
        assert!((est.value - 2.0).abs() < 1e-6, "got {}", est.value);
    }

    #[test]
    fn scaling_is_equivariant() {
        // estimate(c*A) == c*estimate(A) exactly: the iteration only
        // multiplies by A and normalizes, so a scalar factor rides
        // through every Rayleigh quotient.
        let spec = ReservoirSpec { n_r: 40, density: 0.1, ..Default::default() };
        let mats = build_reservoir(&spec, 1).unwrap();
        let mut scaled = mats.a.clone();
        scaled.scale(3.0);
        let base = estimate_spectral_radius(&mats.a);
        let tripled = estimate_spectral_radius(&scaled);
        assert!((tripled.value - 3.0 * base.value).abs() <= 1e-9 * tripled.value.max(1.0));
    }

    #[test]
    fn normalization_maps_reference_range_to_unit_interval() {
        let mut sol = Solution::with_capacity(2, 3);
        sol.push_step(0.0, &[0.0, 5.0], &[0.0, 0.0]);
        sol.push_step(1.0, &[2.0, 5.0], &[0.0, 0.0]);
        sol.push_step(2.0, &[4.0, 5.0], &[0.0, 0.0]);
        let norm = DriveNormalization::from_solution(&sol);
        assert_eq!(norm.offset, vec![2.0, 5.0]);
        assert_eq!(norm.scale, vec![2.0, 1.0]); // flat component keeps scale 1

        let mut x = vec![0.0, 5.0];
        norm.normalize(&mut x);
        assert_eq!(x, vec![-1.0, 0.0]);
        norm.denormalize(&mut x);
        assert_eq!(x, vec![0.0, 5.0]);

        let ident = DriveNormalization::identity(2);
        let mut y = vec![3.0, -4.0];
        ident.normalize(&mut y);
        assert_eq!(y, vec![3.0, -4.0]);
    }

    /// A two-knot constant drive for hand-built simulation tests.
    fn constant_drive(value: &[f64], span: (f64, f64)) -> Solution {
        let mut sol = Solution::with_capacity(value.len(), 2);
        let zeros = vec![0.0; value.len()];
        sol.push_step(span.0, value, &zeros);
        sol.push_step(span.1, value, &zeros);
        sol
    }

    #[test]
    fn zero_matrices_hold_the_reservoir_at_its_start() {
        let mats = ReservoirMatrices {
            a: CsrMatrix::from_rows(3, vec![vec![], vec![], vec![]]),
            w_in: Mat::zeros(3, 2),
            spec: ReservoirSpec { n_r: 3, ..Default::default() },
            model_dim: 2,
        };
        let drive = constant_drive(&[1.0, -1.0], (0.0, 2.0));
        let res = simulate_reservoir(
            &mats,
            &drive,
            &DriveNormalization::identity(2),
            &SolverConfig::default(),
        );
        assert_eq!(res.sol.status(), SolveStatus::Success);
        for k in 0..res.sol.len() {
            assert!(res.sol.state(k).iter().all(|&r| r == 1.0));
        }
    }

    #[test]
    fn saturated_input_slews_one_per_clock_unit() {
        let mats = ReservoirMatrices {
            a: CsrMatrix::from_rows(1, vec![vec![]]),
            w_in: Mat::from_vec(1, 1, vec![1.0]),
            spec: ReservoirSpec { n_r: 1, ..Default::default() },
            model_dim: 1,
        };
        let drive = constant_drive(&[500.0], (0.0, 3.0));
        let res = simulate_reservoir(
            &mats,
            &drive,
            &DriveNormalization::identity(1),
            &SolverConfig::default(),
        );
        // tanh(500) pins the derivative at 1 on the clock, so the end
        // state is the start plus the warped span length, which is
        // ln(1 + 1/f) for any physical span.
        let s_end = *res.sol.times().last().unwrap();
        assert!((s_end - (1.0 / LOG_OFFSET_FRACTION).ln_1p()).abs() < 1e-9);
        let end = res.sol.last_state()[0];
        assert!((end - (1.0 + s_end)).abs() < 1e-6, "clock slew rate, got {end}");
    }

    #[test]
    fn warp_round_trips_and_matches_the_grid_geometry() {
        let warp = TimeWarp::log_over((0.0, 1e5));
        assert_eq!(warp.warp(0.0), 0.0);
        for &t in &[1e-3, 0.1, 3.0, 77.0, 1e4, 1e5] {
            let s = warp.warp(t);
            assert!((warp.unwarp(s) - t).abs() <= 1e-9 * t.max(1.0));
        }
        // Log-spaced sample times land close to uniformly on the clock:
        // interior gaps stay within a factor of two of each other (the
        // +1 inside the warp compresses the first few) while the same
        // gaps spread over nearly six decades of physical time.
        let times = sample_times((0.0, 1e5), &FitConfig::default());
        let s: Vec<f64> = times.iter().map(|&t| warp.warp(t)).collect();
        let gaps: Vec<f64> = s.windows(2).map(|w| w[1] - w[0]).collect();
        let interior = &gaps[1..];
        let lo = interior.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = interior.iter().cloned().fold(0.0f64, f64::max);
        assert!(hi / lo < 2.05, "clock gaps spread {lo}..{hi}");
        let phys: Vec<f64> = times.windows(2).map(|w| w[1] - w[0]).collect();
        let phys_hi = phys.iter().cloned().fold(0.0f64, f64::max);
        let phys_lo = phys[1..].iter().cloned().fold(f64::INFINITY, f64::min);
        assert!(phys_hi / phys_lo > 1e5);

        let ident = TimeWarp::Identity;
        assert_eq!(ident.warp(4.5), 4.5);
        assert_eq!(ident.unwarp(4.5), 4.5);
    }

    #[test]
    fn queries_map_physical_times_onto_the_clock() {
        let spec = ReservoirSpec { n_r: 8, density: 0.5, ..Default::default() };
        let mats = build_reservoir(&spec, 2).unwrap();
        let drive = constant_drive(&[0.3, -0.7], (0.0, 50.0));
        let res = simulate_reservoir(
            &mats,
            &drive,
            &DriveNormalization::identity(2),
            &SolverConfig::default(),
        );

        // Span endpoints hit the first and last stored knots exactly.
        let mut r = vec![0.0; 8];
        res.state_at(0.0, &mut r).unwrap();
        assert_eq!(r, res.sol.state(0).to_vec());
        res.state_at(50.0, &mut r).unwrap();
        assert_eq!(r, res.sol.last_state().to_vec());

        // An interior sample agrees with interpolating the stored
        // solution at the warped coordinate.
        let t = 7.25;
        res.state_at(t, &mut r).unwrap();
        let mut direct = vec![0.0; 8];
        interpolate_into(&res.sol, res.warp.warp(t), &mut direct).unwrap();
        assert_eq!(r, direct);

        let m = res.sample(&[0.0, t, 50.0]).unwrap();
        assert_eq!(m.col(1), r);

        // Out-of-span queries report the physical span, not the clock's.
        let err = res.state_at(51.0, &mut r).unwrap_err();
        assert_eq!(err.t, 51.0);
        assert_eq!(err.t_last, 50.0);
    }

    #[test]
    fn driven_reservoir_has_bounded_derivatives_and_is_deterministic() {
        let spec = ReservoirSpec { n_r: 40, ..Default::default() };
        let mats = build_reservoir(&spec, 3).unwrap();
        let truth = solve_stiff(
            &robertson(&RobertsonParams::default()),
            (0.0, 1e3),
            &robertson_initial_state(),
            &SolverConfig::default(),
        );
        assert_eq!(truth.status(), SolveStatus::Success);
        let norm = DriveNormalization::from_solution(&truth);
        let cfg = SolverConfig::default();
        let res = simulate_reservoir(&mats, &truth, &norm, &cfg);
        assert_eq!(res.sol.status(), SolveStatus::Success);
        assert_eq!(res.drive_span, (0.0, 1e3));
        assert!(res.covers(500.0));
        assert!(!res.covers(1e3 + 1.0));

        // tanh bounds every stored derivative component by 1 on the
        // clock, so the state never leaves 1 + warped span length.
        let s_end = *res.sol.times().last().unwrap();
        for k in 0..res.sol.len() {
            assert!(res.sol.deriv(k).iter().all(|&d| d.abs() <= 1.0 + 1e-12));
            assert!(res.sol.state(k).iter().all(|&r| r.abs() <= 1.0 + s_end + 1e-9));
        }

        let again = simulate_reservoir(&mats, &truth, &norm, &cfg);
        assert_eq!(res.sol.bits_hash(), again.sol.bits_hash());
    }
}
