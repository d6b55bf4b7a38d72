//! Adaptive ODE integration: an explicit Dormand-Prince 5(4) pair for
//! non-stiff problems and an L-stable Rosenbrock 2(3) method for stiff ones,
//! both with cubic Hermite dense output over the accepted steps.
//!
//! Both solvers accept a step when the weighted RMS error norm
//! ([`wrms_norm`]) is at most one and drive the step size with a PI
//! controller (safety 0.9, growth factors clamped to [0.2, 5]). Solver
//! failures are reported through [`SolveStatus`] on the returned [`Solution`]
//! together with the partial trajectory, never silently.

use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::sync::atomic::{AtomicU64, Ordering};

#[allow(unused_imports)]
use num_traits::Float;

use crate::linalg::Mat;

mod dopri;
mod rosenbrock;

pub use dopri::solve_explicit;
pub use rosenbrock::solve_stiff;

/// Counts every entry into [`solve_explicit`] or [`solve_stiff`] since
/// process start. Exists so tests can prove the surrogate prediction path
/// never solves an ODE.
static SOLVER_INVOCATIONS: AtomicU64 = AtomicU64::new(0);

pub(crate) fn count_invocation() {
    SOLVER_INVOCATIONS.fetch_add(1, Ordering::Relaxed);
}

/// Total number of solver invocations so far in this process.
pub fn solver_invocations() -> u64 {
    SOLVER_INVOCATIONS.load(Ordering::Relaxed)
}

// --- System definition -------------------------------------------------------

/// A first-order ODE system y' = f(t, y) with an optional analytic Jacobian.
///
/// The right-hand side writes into a caller-provided buffer so the solvers
/// never allocate in their inner loop. The Jacobian callback fills a dense
/// row-major `dim x dim` matrix with df_i/dy_j; when absent, solvers fall
/// back to [`fd_jacobian`].
pub struct OdeSystem<'a> {
    dim: usize,
    rhs: Box<dyn Fn(f64, &[f64], &mut [f64]) + Send + Sync + 'a>,
    jac: Option<Box<dyn Fn(f64, &[f64], &mut Mat) + Send + Sync + 'a>>,
}

impl<'a> OdeSystem<'a> {
    pub fn new(dim: usize, rhs: impl Fn(f64, &[f64], &mut [f64]) + Send + Sync + 'a) -> Self {
        assert!(dim >= 1, "system dimension must be at least 1");
        OdeSystem {
            dim,
            rhs: Box::new(rhs),
            jac: None,
        }
    }

    pub fn with_jacobian(
        mut self,
        jac: impl Fn(f64, &[f64], &mut Mat) + Send + Sync + 'a,
    ) -> Self {
        self.jac = Some(Box::new(jac));
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn has_analytic_jacobian(&self) -> bool {
        self.jac.is_some()
    }

    /// Evaluates f(t, y) into `dydt`.
    pub fn eval_rhs(&self, t: f64, y: &[f64], dydt: &mut [f64]) {
        debug_assert_eq!(y.len(), self.dim);
        debug_assert_eq!(dydt.len(), self.dim);
        (self.rhs)(t, y, dydt);
    }

    /// Fills `out` with the Jacobian at (t, y): analytic if provided,
    /// forward differences otherwise.
    pub fn eval_jacobian(&self, t: f64, y: &[f64], out: &mut Mat) {
        assert_eq!(out.rows(), self.dim);
        assert_eq!(out.cols(), self.dim);
        match &self.jac {
            Some(j) => j(t, y, out),
            None => *out = fd_jacobian(self, t, y),
        }
    }
}

// --- Configuration ------------------------------------------------------------

/// Tolerances and step bounds shared by both solvers.
///
/// `dt_init` and `dt_min` default (when `None`) to `1e-6 * span` and
/// `1e-14 * span` of the solve they are used in.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    /// Per-component absolute tolerance.
    pub abstol: f64,
    /// Relative tolerance.
    pub reltol: f64,
    /// Initial step size; `None` picks 1e-6 of the span.
    pub dt_init: Option<f64>,
    /// Smallest step the controller may require before giving up;
    /// `None` picks 1e-14 of the span. The final step is allowed to be
    /// shorter so the solve can land exactly on the end time.
    pub dt_min: Option<f64>,
    /// Budget of attempted (accepted plus rejected) steps.
    pub max_steps: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            abstol: 1e-8,
            reltol: 1e-6,
            dt_init: None,
            dt_min: None,
            max_steps: 1_000_000,
        }
    }
}

impl SolverConfig {
    /// Checks the invariants that do not depend on the time span.
    pub fn validate(&self) -> Result<(), &'static str> {
        if !(self.abstol > 0.0) || !self.abstol.is_finite() {
            return Err("abstol must be positive and finite");
        }
        if !(self.reltol >= 0.0) || !self.reltol.is_finite() {
            return Err("reltol must be non-negative and finite");
        }
        if let Some(h) = self.dt_init {
            if !(h > 0.0) || !h.is_finite() {
                return Err("dt_init must be positive and finite");
            }
        }
        if let Some(h) = self.dt_min {
            if !(h > 0.0) || !h.is_finite() {
                return Err("dt_min must be positive and finite");
            }
        }
        if let (Some(h0), Some(hmin)) = (self.dt_init, self.dt_min) {
            if hmin > h0 {
                return Err("dt_min must not exceed dt_init");
            }
        }
        if self.max_steps == 0 {
            return Err("max_steps must be at least 1");
        }
        Ok(())
    }

    /// Resolves (dt_init, dt_min) against a concrete span.
    pub(crate) fn resolve_steps(&self, span: f64) -> (f64, f64) {
        let h0 = self.dt_init.unwrap_or(1e-6 * span).min(span);
        let hmin = self.dt_min.unwrap_or(1e-14 * span).min(h0);
        (h0, hmin)
    }
}

// --- Solution -----------------------------------------------------------------

/// Why a solve stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    /// Reached the end of the time span.
    Success,
    /// `max_steps` attempted steps were used up.
    StepBudgetExhausted,
    /// Error control demanded a step below `dt_min`.
    DtUnderflow,
    /// The Rosenbrock stage matrix stayed numerically singular even after
    /// step-size reduction.
    SingularStageMatrix,
}

impl SolveStatus {
    pub fn is_success(self) -> bool {
        matches!(self, SolveStatus::Success)
    }
}

impl fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SolveStatus::Success => "success",
            SolveStatus::StepBudgetExhausted => "step budget exhausted",
            SolveStatus::DtUnderflow => "step size underflow",
            SolveStatus::SingularStageMatrix => "singular stage matrix",
        };
        f.write_str(s)
    }
}

/// Accepted-step trajectory with state derivatives, the basis for dense
/// output. `times` is strictly increasing and starts at t0; on success it
/// ends exactly at tf.
#[derive(Debug, Clone)]
pub struct Solution {
    dim: usize,
    times: Vec<f64>,
    states: Vec<f64>,
    derivs: Vec<f64>,
    status: SolveStatus,
    steps_rejected: u64,
    rhs_evals: u64,
}

impl Solution {
    pub(crate) fn with_capacity(dim: usize, cap: usize) -> Self {
        Solution {
            dim,
            times: Vec::with_capacity(cap),
            states: Vec::with_capacity(cap * dim),
            derivs: Vec::with_capacity(cap * dim),
            status: SolveStatus::Success,
            steps_rejected: 0,
            rhs_evals: 0,
        }
    }

    /// Reassembles a solution from raw storage, for deserialization.
    /// The layout rules the solvers guarantee are checked, not assumed.
    pub fn from_parts(
        dim: usize,
        times: Vec<f64>,
        states: Vec<f64>,
        derivs: Vec<f64>,
        status: SolveStatus,
        steps_rejected: u64,
        rhs_evals: u64,
    ) -> Result<Self, &'static str> {
        if dim == 0 {
            return Err("solution dimension must be at least 1");
        }
        if states.len() != times.len() * dim || derivs.len() != times.len() * dim {
            return Err("state storage does not match times x dim");
        }
        if !times.windows(2).all(|w| w[0] < w[1]) {
            return Err("times must be strictly increasing");
        }
        if times.iter().any(|t| !t.is_finite()) {
            return Err("times must be finite");
        }
        Ok(Solution { dim, times, states, derivs, status, steps_rejected, rhs_evals })
    }

    pub(crate) fn push_step(&mut self, t: f64, y: &[f64], dydt: &[f64]) {
        if let Some(&last) = self.times.last() {
            debug_assert!(t > last, "accepted times must be strictly increasing");
        }
        self.times.push(t);
        self.states.extend_from_slice(y);
        self.derivs.extend_from_slice(dydt);
    }

    pub(crate) fn set_status(&mut self, status: SolveStatus) {
        self.status = status;
    }

    /// Swaps in a full replacement for the stored derivatives; the stiff
    /// solver rebuilds them from knot states before returning.
    pub(crate) fn replace_derivs(&mut self, derivs: Vec<f64>) {
        assert_eq!(derivs.len(), self.derivs.len());
        self.derivs = derivs;
    }

    pub(crate) fn add_rejections(&mut self, n: u64) {
        self.steps_rejected += n;
    }

    pub(crate) fn add_rhs_evals(&mut self, n: u64) {
        self.rhs_evals += n;
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of stored points (accepted steps plus the initial condition).
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn state(&self, k: usize) -> &[f64] {
        &self.states[k * self.dim..(k + 1) * self.dim]
    }

    pub fn deriv(&self, k: usize) -> &[f64] {
        &self.derivs[k * self.dim..(k + 1) * self.dim]
    }

    /// All states as one flat row-major array, one row per stored point.
    pub fn states_flat(&self) -> &[f64] {
        &self.states
    }

    /// All derivatives as one flat row-major array, matching
    /// [`states_flat`](Self::states_flat).
    pub fn derivs_flat(&self) -> &[f64] {
        &self.derivs
    }

    pub fn last_state(&self) -> &[f64] {
        self.state(self.len() - 1)
    }

    pub fn status(&self) -> SolveStatus {
        self.status
    }

    pub fn is_success(&self) -> bool {
        self.status.is_success()
    }

    /// Accepted steps taken (excludes the initial point).
    pub fn steps_accepted(&self) -> u64 {
        (self.len() as u64).saturating_sub(1)
    }

    pub fn steps_rejected(&self) -> u64 {
        self.steps_rejected
    }

    pub fn rhs_evals(&self) -> u64 {
        self.rhs_evals
    }

    /// Exact bit fold over the stored trajectory, for determinism checks.
    pub fn bits_hash(&self) -> u64 {
        let mut h = 0xcbf2_9ce4_8422_2325u64;
        for &t in &self.times {
            h ^= t.to_bits();
            h = h.wrapping_mul(0x1000_0000_01b3);
        }
        for &x in self.states.iter().chain(&self.derivs) {
            h ^= x.to_bits();
            h = h.wrapping_mul(0x1000_0000_01b3);
        }
        h
    }
}

// --- Error norm and Jacobian --------------------------------------------------

/// Weighted RMS norm used for step acceptance: the step passes when the
/// result is at most 1. Component weights are
/// `abstol + reltol * max(|y_prev_i|, |y_new_i|)`.
pub fn wrms_norm(err: &[f64], y_prev: &[f64], y_new: &[f64], cfg: &SolverConfig) -> f64 {
    assert_eq!(err.len(), y_prev.len());
    assert_eq!(err.len(), y_new.len());
    assert!(!err.is_empty());
    let mut acc = 0.0;
    for i in 0..err.len() {
        let w = cfg.abstol + cfg.reltol * y_prev[i].abs().max(y_new[i].abs());
        let r = err[i] / w;
        acc += r * r;
    }
    (acc / err.len() as f64).sqrt()
}

/// Forward-difference Jacobian. Column j uses the perturbation
/// `sqrt(machine epsilon) * max(|y_j|, 1)`, which is exact for linear
/// right-hand sides up to rounding.
pub fn fd_jacobian(system: &OdeSystem<'_>, t: f64, y: &[f64]) -> Mat {
    let n = system.dim();
    assert_eq!(y.len(), n);
    let mut jac = Mat::zeros(n, n);
    let mut f0 = vec![0.0; n];
    let mut f1 = vec![0.0; n];
    let mut yp = y.to_vec();
    system.eval_rhs(t, y, &mut f0);
    let sqrt_eps = f64::EPSILON.sqrt();
    for j in 0..n {
        let h = sqrt_eps * y[j].abs().max(1.0);
        let saved = yp[j];
        yp[j] = saved + h;
        // recompute the actual perturbation to kill rounding in the divisor
        let h_actual = yp[j] - saved;
        system.eval_rhs(t, &yp, &mut f1);
        yp[j] = saved;
        for i in 0..n {
            jac[(i, j)] = (f1[i] - f0[i]) / h_actual;
        }
    }
    jac
}

// --- Dense output ---------------------------------------------------------------

/// Interpolation was requested outside the solution's stored time range.
#[derive(Debug, Clone, PartialEq)]
pub struct OutOfRange {
    pub t: f64,
    pub t_first: f64,
    pub t_last: f64,
}

impl fmt::Display for OutOfRange {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "time {} outside solution range [{}, {}]; extrapolation refused",
            self.t, self.t_first, self.t_last
        )
    }
}

#[cfg(feature = "std")]
impl std::error::Error for OutOfRange {}

/// Cubic Hermite dense output over the accepted steps. Exact (bitwise) at
/// the stored knots; between knots it uses the stored states and derivatives
/// of the bracketing step. Out-of-range times are an error, never an
/// extrapolation.
pub fn interpolate(sol: &Solution, t: f64) -> Result<Vec<f64>, OutOfRange> {
    let mut out = vec![0.0; sol.dim()];
    interpolate_into(sol, t, &mut out)?;
    Ok(out)
}

/// [`interpolate`] without the allocation.
pub fn interpolate_into(sol: &Solution, t: f64, out: &mut [f64]) -> Result<(), OutOfRange> {
    assert_eq!(out.len(), sol.dim());
    assert!(!sol.is_empty(), "cannot interpolate an empty solution");
    let times = sol.times();
    let (first, last) = (times[0], times[times.len() - 1]);
    if !(t >= first && t <= last) {
        return Err(OutOfRange {
            t,
            t_first: first,
            t_last: last,
        });
    }
    // exact knot hits return the stored state bit-for-bit
    let idx = times.partition_point(|&tk| tk < t);
    if idx < times.len() && times[idx] == t {
        out.copy_from_slice(sol.state(idx));
        return Ok(());
    }
    let k = idx - 1;
    let (t0, t1) = (times[k], times[k + 1]);
    let h = t1 - t0;
    let s = (t - t0) / h;
    let s2 = s * s;
    let s3 = s2 * s;
    let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
    let h10 = s3 - 2.0 * s2 + s;
    let h01 = -2.0 * s3 + 3.0 * s2;
    let h11 = s3 - s2;
    let y0 = sol.state(k);
    let y1 = sol.state(k + 1);
    let d0 = sol.deriv(k);
    let d1 = sol.deriv(k + 1);
    for i in 0..out.len() {
        out[i] = h00 * y0[i] + h * h10 * d0[i] + h01 * y1[i] + h * h11 * d1[i];
    }
    Ok(())
}

// --- Step-size controller --------------------------------------------------------

pub(crate) const SAFETY: f64 = 0.9;
pub(crate) const FACTOR_MIN: f64 = 0.2;
pub(crate) const FACTOR_MAX: f64 = 5.0;

/// PI step-size controller (Gustafsson coefficients 0.7/k and 0.4/k, where k
/// is the order of the embedded error estimate plus one). Growth is
/// suppressed on the first step after a rejection.
pub(crate) struct StepController {
    inv_order: f64,
    prev_err: f64,
    just_rejected: bool,
}

impl StepController {
    pub(crate) fn new(err_order: u32) -> Self {
        StepController {
            inv_order: 1.0 / err_order as f64,
            prev_err: 1e-4,
            just_rejected: false,
        }
    }

    /// Factor to apply after an accepted step with error norm `err`.
    pub(crate) fn accept(&mut self, err: f64) -> f64 {
        let e = err.max(1e-10);
        let mut f = SAFETY * e.powf(-0.7 * self.inv_order) * self.prev_err.powf(0.4 * self.inv_order);
        if self.just_rejected {
            f = f.min(1.0);
            self.just_rejected = false;
        }
        self.prev_err = e.max(1e-4);
        f.clamp(FACTOR_MIN, FACTOR_MAX)
    }

    /// Factor to apply after a rejected step; always shrinks.
    pub(crate) fn reject(&mut self, err: f64) -> f64 {
        self.just_rejected = true;
        let e = err.max(1e-10);
        (SAFETY * e.powf(-self.inv_order)).clamp(FACTOR_MIN, 0.9)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn decay_system() -> OdeSystem<'static> {
        OdeSystem::new(1, |_t, y, dydt| dydt[0] = -y[0])
    }

    #[test]
    fn wrms_hand_value() {
        let cfg = SolverConfig {
            abstol: 0.1,
            reltol: 0.0,
            ..SolverConfig::default()
        };
        let n = wrms_norm(&[0.1, 0.0], &[1.0, 1.0], &[1.0, 1.0], &cfg);
        assert!((n - 0.5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn wrms_scales_with_tolerances() {
        let cfg = SolverConfig {
            abstol: 1e-6,
            reltol: 1e-3,
            ..SolverConfig::default()
        };
        let loose = SolverConfig {
            abstol: 2e-6,
            reltol: 2e-3,
            ..SolverConfig::default()
        };
        let err = [1e-4, -2e-5];
        let y = [0.5, -2.0];
        let tight_norm = wrms_norm(&err, &y, &y, &cfg);
        let loose_norm = wrms_norm(&err, &y, &y, &loose);
        assert!((tight_norm - 2.0 * loose_norm).abs() < 1e-12 * tight_norm);
    }

    #[test]
    fn fd_jacobian_exact_for_linear_rhs() {
        // y' = A y with A = [[1, 2], [-3, 0.5]]
        let sys = OdeSystem::new(2, |_t, y, dydt| {
            dydt[0] = y[0] + 2.0 * y[1];
            dydt[1] = -3.0 * y[0] + 0.5 * y[1];
        });
        let jac = fd_jacobian(&sys, 0.0, &[0.3, -0.7]);
        let want = [[1.0, 2.0], [-3.0, 0.5]];
        for i in 0..2 {
            for j in 0..2 {
                assert!(
                    (jac[(i, j)] - want[i][j]).abs() < 1e-7,
                    "entry ({i},{j}): {} vs {}",
                    jac[(i, j)],
                    want[i][j]
                );
            }
        }
    }

    #[test]
    fn config_validation_catches_bad_fields() {
        let mut cfg = SolverConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.abstol = 0.0;
        assert!(cfg.validate().is_err());
        cfg.abstol = 1e-8;
        cfg.dt_init = Some(1e-3);
        cfg.dt_min = Some(1e-2);
        assert!(cfg.validate().is_err());
        cfg.dt_min = Some(1e-9);
        cfg.max_steps = 0;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn interpolate_hits_knots_bitwise_and_rejects_outside() {
        let sys = decay_system();
        let sol = solve_explicit(&sys, (0.0, 2.0), &[1.0], &SolverConfig::default());
        assert!(sol.is_success());
        for k in [0, sol.len() / 2, sol.len() - 1] {
            let t = sol.times()[k];
            let y = interpolate(&sol, t).unwrap();
            assert_eq!(y[0].to_bits(), sol.state(k)[0].to_bits());
        }
        assert!(interpolate(&sol, -0.1).is_err());
        assert!(interpolate(&sol, 2.0 + 1e-9).is_err());
    }

    #[test]
    fn interpolate_reproduces_cubics_between_knots() {
        // Hand-built two-knot solution for y(t) = t^3 with exact derivatives;
        // cubic Hermite must reproduce it everywhere in between.
        let mut sol = Solution::with_capacity(1, 2);
        sol.push_step(1.0, &[1.0], &[3.0]);
        sol.push_step(3.0, &[27.0], &[27.0]);
        for k in 0..=20 {
            let t = 1.0 + 2.0 * k as f64 / 20.0;
            let y = interpolate(&sol, t).unwrap()[0];
            assert!((y - t * t * t).abs() < 1e-12, "t={t}: {y}");
        }
    }

    #[test]
    fn interpolation_is_continuous_at_knots() {
        let sys = decay_system();
        let sol = solve_explicit(&sys, (0.0, 2.0), &[1.0], &SolverConfig::default());
        for k in 1..sol.len() - 1 {
            let t = sol.times()[k];
            let left = interpolate(&sol, t - 1e-10).unwrap()[0];
            let right = interpolate(&sol, t + 1e-10).unwrap()[0];
            assert!((left - right).abs() < 1e-8);
        }
    }

    #[test]
    fn solver_invocation_counter_increments() {
        let before = solver_invocations();
        let sys = decay_system();
        let _ = solve_explicit(&sys, (0.0, 1.0), &[1.0], &SolverConfig::default());
        let _ = solve_stiff(&sys, (0.0, 1.0), &[1.0], &SolverConfig::default());
        assert_eq!(solver_invocations(), before + 2);
    }

    #[test]
    fn controller_spec_behavior() {
        let mut c = StepController::new(5);
        // tiny error -> growth capped at 5
        assert!((c.accept(1e-10) - FACTOR_MAX).abs() < 1e-12);
        // huge error on reject -> shrink floored at 0.2
        assert!((c.reject(1e10) - FACTOR_MIN).abs() < 1e-12);
        // right after a rejection an accept may not grow the step
        let f = c.accept(0.5);
        assert!(f <= 1.0);
    }
}
