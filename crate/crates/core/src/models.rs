//! Benchmark systems: the Robertson kinetics problem and a lumped
//! heating network with one central heater and N controlled rooms.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use crate::ode::OdeSystem;
use crate::params::BoxSpace;

/// Reaction rates of the Robertson system.
#[derive(Debug, Clone, PartialEq)]
pub struct RobertsonParams {
    pub k1: f64,
    pub k2: f64,
    pub k3: f64,
}

impl Default for RobertsonParams {
    fn default() -> Self {
        RobertsonParams { k1: 0.04, k2: 1e4, k3: 3e7 }
    }
}

impl RobertsonParams {
    pub fn validate(&self) -> Result<(), &'static str> {
        if self.k1 > 0.0 && self.k2 > 0.0 && self.k3 > 0.0 {
            Ok(())
        } else {
            Err("robertson rates must be positive")
        }
    }

    pub fn as_vec(&self) -> Vec<f64> {
        vec![self.k1, self.k2, self.k3]
    }

    pub fn from_slice(p: &[f64]) -> Self {
        assert_eq!(p.len(), 3);
        RobertsonParams { k1: p[0], k2: p[1], k3: p[2] }
    }
}

/// Default integration span for the Robertson benchmark.
pub const ROBERTSON_SPAN: (f64, f64) = (0.0, 1e5);

pub fn robertson_initial_state() -> Vec<f64> {
    vec![1.0, 0.0, 0.0]
}

/// The three-species Robertson kinetics system with analytic Jacobian:
///
/// ```text
/// y1' = -k1 y1 + k2 y2 y3
/// y2' =  k1 y1 - k2 y2 y3 - k3 y2^2
/// y3' =  k3 y2^2
/// ```
pub fn robertson(params: &RobertsonParams) -> OdeSystem<'static> {
    params.validate().expect("invalid robertson parameters");
    let RobertsonParams { k1, k2, k3 } = *params;
    OdeSystem::new(3, move |_t, y, dy| {
        let slow = k1 * y[0];
        let recomb = k2 * y[1] * y[2];
        let fast = k3 * y[1] * y[1];
        dy[0] = -slow + recomb;
        dy[1] = slow - recomb - fast;
        dy[2] = fast;
    })
    .with_jacobian(move |_t, y, jac| {
        jac[(0, 0)] = -k1;
        jac[(0, 1)] = k2 * y[2];
        jac[(0, 2)] = k2 * y[1];
        jac[(1, 0)] = k1;
        jac[(1, 1)] = -k2 * y[2] - 2.0 * k3 * y[1];
        jac[(1, 2)] = -k2 * y[1];
        jac[(2, 0)] = 0.0;
        jac[(2, 1)] = 2.0 * k3 * y[1];
        jac[(2, 2)] = 0.0;
    })
}

/// Box of Robertson rate vectors (k1, k2, k3) spanning +/-20% around
/// `nominal`, for training surrogates over rate uncertainty.
pub fn robertson_param_space(nominal: &RobertsonParams) -> BoxSpace {
    nominal.validate().expect("invalid robertson parameters");
    let mid = nominal.as_vec();
    let lower = mid.iter().map(|k| 0.8 * k).collect();
    let upper = mid.iter().map(|k| 1.2 * k).collect();
    BoxSpace::new(lower, upper).expect("positive rates give a valid box")
}

/// Robertson model family over the rate box: maps (k1, k2, k3) to the
/// system and its initial state.
pub fn robertson_family() -> impl Fn(&[f64]) -> (OdeSystem<'static>, Vec<f64>) + Send + Sync + Clone
{
    |p: &[f64]| (robertson(&RobertsonParams::from_slice(p)), robertson_initial_state())
}

/// Physical coefficients of the heating network.
///
/// One heater holds a fluid at temperature T_f and exchanges heat with N
/// rooms through PI-controlled valves; state order is
/// (T_f, T_1..T_N, s_1..s_N) where s_i are the controller integrators.
#[derive(Debug, Clone, PartialEq)]
pub struct HeatingParams {
    pub n_rooms: usize,
    /// Shared room set-point, degrees C.
    pub t_room_set: f64,
    /// Heater fluid set-point, degrees C.
    pub t_fluid_set: f64,
    /// Room thermal capacity, J/K.
    pub c_room: f64,
    /// Heater fluid thermal capacity, J/K.
    pub c_heater: f64,
    /// Room-to-ambient loss coefficient, W/K.
    pub u_loss: f64,
    /// Maximum room heat-exchange coefficient, W/K.
    pub k_exchange: f64,
    /// Heater power gain, W/K.
    pub k_heater: f64,
    /// Valve proportional gain, 1/K.
    pub k_p: f64,
    /// Valve integral gain, 1/(K s).
    pub k_i: f64,
    /// Ambient temperature, degrees C.
    pub t_ambient: f64,
}

impl Default for HeatingParams {
    fn default() -> Self {
        HeatingParams {
            n_rooms: 10,
            t_room_set: 20.0,
            t_fluid_set: 70.0,
            c_room: 1e5,
            c_heater: 5e3,
            u_loss: 50.0,
            k_exchange: 500.0,
            k_heater: 5e4,
            k_p: 0.5,
            k_i: 5e-3,
            t_ambient: 10.0,
        }
    }
}

impl HeatingParams {
    pub fn validate(&self) -> Result<(), &'static str> {
        if self.n_rooms == 0 {
            return Err("heating needs at least one room");
        }
        let coeffs = [
            self.c_room,
            self.c_heater,
            self.u_loss,
            self.k_exchange,
            self.k_heater,
            self.k_p,
            self.k_i,
        ];
        if coeffs.iter().any(|&c| !(c > 0.0)) {
            return Err("heating coefficients must be positive");
        }
        if !self.t_room_set.is_finite() || !self.t_fluid_set.is_finite() || !self.t_ambient.is_finite()
        {
            return Err("heating temperatures must be finite");
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        2 * self.n_rooms + 1
    }
}

/// Default integration span for the heating benchmark, seconds.
pub const HEATING_SPAN: (f64, f64) = (0.0, 2e4);

/// Initial state: fluid at its set-point, rooms at ambient, integrators
/// at zero.
pub fn heating_initial_state(params: &HeatingParams) -> Vec<f64> {
    let n = params.n_rooms;
    let mut y0 = vec![params.t_ambient; 2 * n + 1];
    y0[0] = params.t_fluid_set;
    for s in &mut y0[n + 1..] {
        *s = 0.0;
    }
    y0
}

/// Smooth valve saturation mapping controller output to an opening in
/// (0, 1). The slope of 8 makes the valve essentially fully open or
/// closed beyond half a degree of error while staying smooth.
fn valve(z: f64) -> f64 {
    1.0 / (1.0 + (-8.0 * z).exp())
}

/// The heating network as a 2N+1 dimensional system with analytic
/// Jacobian:
///
/// ```text
/// v_i = sigma(k_p (T_set - T_i) + s_i)
/// C_heater T_f' = k_heater (T_fluid_set - T_f) - sum_i k_exchange v_i (T_f - T_i)
/// C_room   T_i' = k_exchange v_i (T_f - T_i) - u_loss (T_i - T_ambient)
///          s_i' = k_i (T_set - T_i)
/// ```
pub fn heating(params: &HeatingParams) -> OdeSystem<'static> {
    params.validate().expect("invalid heating parameters");
    let p = params.clone();
    let q = params.clone();
    let n = params.n_rooms;
    OdeSystem::new(2 * n + 1, move |_t, y, dy| {
        let t_f = y[0];
        let mut exchange_total = 0.0;
        for i in 0..n {
            let t_i = y[1 + i];
            let s_i = y[1 + n + i];
            let v = valve(p.k_p * (p.t_room_set - t_i) + s_i);
            let q_i = p.k_exchange * v * (t_f - t_i);
            exchange_total += q_i;
            dy[1 + i] = (q_i - p.u_loss * (t_i - p.t_ambient)) / p.c_room;
            dy[1 + n + i] = p.k_i * (p.t_room_set - t_i);
        }
        dy[0] = (p.k_heater * (p.t_fluid_set - t_f) - exchange_total) / p.c_heater;
    })
    .with_jacobian(move |_t, y, jac| {
        for e in jac.data_mut() {
            *e = 0.0;
        }
        let t_f = y[0];
        let mut dff = -q.k_heater / q.c_heater;
        for i in 0..n {
            let t_i = y[1 + i];
            let s_i = y[1 + n + i];
            let v = valve(q.k_p * (q.t_room_set - t_i) + s_i);
            // dv/dz for the slope-8 sigmoid; z depends on T_i and s_i.
            let dv_dz = 8.0 * v * (1.0 - v);
            let dv_dti = -q.k_p * dv_dz;
            let gap = t_f - t_i;

            dff -= q.k_exchange * v / q.c_heater;
            jac[(0, 1 + i)] =
                (q.k_exchange * v - q.k_exchange * dv_dti * gap) / q.c_heater;
            jac[(0, 1 + n + i)] = -q.k_exchange * dv_dz * gap / q.c_heater;

            jac[(1 + i, 0)] = q.k_exchange * v / q.c_room;
            jac[(1 + i, 1 + i)] =
                (q.k_exchange * (dv_dti * gap - v) - q.u_loss) / q.c_room;
            jac[(1 + i, 1 + n + i)] = q.k_exchange * dv_dz * gap / q.c_room;

            jac[(1 + n + i, 1 + i)] = -q.k_i;
        }
        jac[(0, 0)] = dff;
    })
}

/// The paper's two-dimensional heating parameter box:
/// room set-point 17..23 degrees C, fluid set-point 65..75 degrees C.
pub fn heating_param_space() -> BoxSpace {
    BoxSpace::new(vec![17.0, 65.0], vec![23.0, 75.0]).expect("static bounds are valid")
}

/// Heating model family over (t_room_set, t_fluid_set): maps a point of
/// [`heating_param_space`] to the system and its initial state. The
/// initial state depends on the parameters through the fluid set-point.
pub fn heating_family(
    base: HeatingParams,
) -> impl Fn(&[f64]) -> (OdeSystem<'static>, Vec<f64>) + Send + Sync + Clone {
    move |p: &[f64]| {
        assert_eq!(p.len(), 2);
        let mut params = base.clone();
        params.t_room_set = p[0];
        params.t_fluid_set = p[1];
        let y0 = heating_initial_state(&params);
        (heating(&params), y0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Mat;
    use crate::ode::{fd_jacobian, solve_explicit, solve_stiff, SolveStatus, SolverConfig};

    fn max_abs_diff(a: &Mat, b: &Mat) -> f64 {
        a.data()
            .iter()
            .zip(b.data())
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    }

    #[test]
    fn robertson_rhs_at_initial_state() {
        let sys = robertson(&RobertsonParams::default());
        let mut dy = [0.0; 3];
        sys.eval_rhs(0.0, &[1.0, 0.0, 0.0], &mut dy);
        assert_eq!(dy, [-0.04, 0.04, 0.0]);
    }

    #[test]
    fn robertson_rhs_conserves_mass_pointwise() {
        let sys = robertson(&RobertsonParams::default());
        let states = [
            [1.0, 0.0, 0.0],
            [0.7, 3e-5, 0.3],
            [0.2, 1e-6, 0.8],
            [0.5, 0.5, 0.5],
        ];
        let mut dy = [0.0; 3];
        for y in &states {
            sys.eval_rhs(0.0, y, &mut dy);
            let scale = dy.iter().map(|d| d.abs()).fold(1.0, f64::max);
            assert!((dy[0] + dy[1] + dy[2]).abs() <= 1e-13 * scale);
        }
    }

    #[test]
    fn robertson_jacobian_matches_finite_differences() {
        let params = RobertsonParams::default();
        let sys = robertson(&params);
        // One-sided differences on the k3 y2^2 term carry O(k3 sqrt(eps))
        // truncation error regardless of the state, which sets the floor
        // on what this comparison can resolve.
        let fd_floor = 2.0 * params.k3 * f64::EPSILON.sqrt();
        let states = [[1.0, 0.0, 0.0], [0.83, 2.9e-2, 0.141], [0.37, 0.61, 0.52]];
        for y in &states {
            let mut analytic = Mat::zeros(3, 3);
            sys.eval_jacobian(0.0, y, &mut analytic);
            let fd = fd_jacobian(&sys, 0.0, y);
            let scale = analytic.data().iter().fold(1.0, |m, e| m.max(e.abs()));
            assert!(max_abs_diff(&analytic, &fd) <= fd_floor + 1e-6 * scale);
        }
    }

    #[test]
    fn robertson_rejects_nonpositive_rates() {
        assert!(RobertsonParams { k1: 0.0, ..Default::default() }.validate().is_err());
        assert!(RobertsonParams { k2: -1.0, ..Default::default() }.validate().is_err());
        assert!(RobertsonParams::default().validate().is_ok());
    }

    #[test]
    fn robertson_box_spans_twenty_percent() {
        let space = robertson_param_space(&RobertsonParams::default());
        assert_eq!(space.lower(), &[0.032, 8e3, 2.4e7]);
        assert_eq!(space.upper(), &[0.048, 1.2e4, 3.6e7]);
    }

    #[test]
    fn robertson_solution_conserves_mass_and_positivity() {
        let cfg = SolverConfig::default();
        let sys = robertson(&RobertsonParams::default());
        let sol = solve_stiff(&sys, ROBERTSON_SPAN, &robertson_initial_state(), &cfg);
        assert_eq!(sol.status(), SolveStatus::Success);
        let conservation_tol = 100.0 * (cfg.abstol + cfg.reltol);
        let positivity_floor = -10.0 * cfg.abstol;
        for k in 0..sol.len() {
            let y = sol.state(k);
            assert!((y[0] + y[1] + y[2] - 1.0).abs() <= conservation_tol, "step {k}");
            assert!(y.iter().all(|&c| c >= positivity_floor), "step {k}");
        }
    }

    #[test]
    fn heating_dimension_is_two_n_plus_one() {
        for n in [1, 10, 100] {
            let params = HeatingParams { n_rooms: n, ..Default::default() };
            assert_eq!(heating(&params).dim(), 2 * n + 1);
            assert_eq!(params.dim(), 2 * n + 1);
            assert_eq!(heating_initial_state(&params).len(), 2 * n + 1);
        }
    }

    #[test]
    fn heating_initial_state_layout() {
        let params = HeatingParams { n_rooms: 3, ..Default::default() };
        let y0 = heating_initial_state(&params);
        assert_eq!(y0, vec![70.0, 10.0, 10.0, 10.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn heating_jacobian_matches_finite_differences() {
        let params = HeatingParams { n_rooms: 3, ..Default::default() };
        let sys = heating(&params);
        // A state away from equilibrium so valves sit on their slopes.
        let y = [55.0, 14.0, 19.5, 23.0, 0.1, -0.05, 0.4];
        let mut analytic = Mat::zeros(7, 7);
        sys.eval_jacobian(0.0, &y, &mut analytic);
        let fd = fd_jacobian(&sys, 0.0, &y);
        let scale = analytic.data().iter().fold(1.0, |m, e| m.max(e.abs()));
        assert!(max_abs_diff(&analytic, &fd) <= 1e-5 * scale);
    }

    #[test]
    fn heating_settles_to_a_bounded_equilibrium() {
        let params = HeatingParams { n_rooms: 2, ..Default::default() };
        let sys = heating(&params);
        let cfg = SolverConfig { abstol: 1e-12, reltol: 1e-10, ..Default::default() };
        let sol = solve_stiff(&sys, (0.0, 1e5), &heating_initial_state(&params), &cfg);
        assert_eq!(sol.status(), SolveStatus::Success);
        let end = sol.last_state();
        let mut dy = vec![0.0; sys.dim()];
        sys.eval_rhs(1e5, end, &mut dy);
        assert!(dy.iter().all(|&d| d.abs() < 1e-9), "not settled: {dy:?}");
        for i in 0..params.n_rooms {
            let t_room = end[1 + i];
            assert!(t_room >= params.t_ambient && t_room <= params.t_fluid_set);
        }
    }

    #[test]
    fn heating_temperatures_stay_bounded_over_the_span() {
        let params = HeatingParams { n_rooms: 4, ..Default::default() };
        let sys = heating(&params);
        let sol = solve_stiff(
            &sys,
            HEATING_SPAN,
            &heating_initial_state(&params),
            &SolverConfig::default(),
        );
        assert_eq!(sol.status(), SolveStatus::Success);
        let lo = params.t_ambient - 1.0;
        let hi = params.t_fluid_set + 1.0;
        for k in 0..sol.len() {
            let y = sol.state(k);
            for &t in &y[..1 + params.n_rooms] {
                assert!(t >= lo && t <= hi, "temperature {t} escapes [{lo}, {hi}]");
            }
        }
    }

    #[test]
    fn heating_stiffness_ratio_of_default_time_constants() {
        let p = HeatingParams::default();
        let heater_tau = p.c_heater / p.k_heater;
        let room_tau = p.c_room / p.u_loss;
        assert!((heater_tau - 0.1).abs() < 1e-12);
        assert!((room_tau - 2000.0).abs() < 1e-9);
        assert!((room_tau / heater_tau - 2e4).abs() < 1e-6);
    }

    #[test]
    fn heating_defeats_the_explicit_solver() {
        // Stiffness evidence: on defaults the explicit solver either
        // exhausts its budget or needs at least 50x the attempted steps
        // of the stiff solver at equal tolerances.
        let params = HeatingParams::default();
        let sys = heating(&params);
        let y0 = heating_initial_state(&params);
        let cfg = SolverConfig::default();
        let stiff = solve_stiff(&sys, HEATING_SPAN, &y0, &cfg);
        assert_eq!(stiff.status(), SolveStatus::Success);
        let explicit = solve_explicit(&sys, HEATING_SPAN, &y0, &cfg);
        let stiff_attempts = stiff.steps_accepted() + stiff.steps_rejected();
        let explicit_attempts = explicit.steps_accepted() + explicit.steps_rejected();
        assert!(
            explicit.status() == SolveStatus::StepBudgetExhausted
                || explicit_attempts >= 50 * stiff_attempts,
            "explicit {explicit_attempts} attempts vs stiff {stiff_attempts}"
        );
    }

    #[test]
    fn heating_family_threads_parameters_through() {
        let family = heating_family(HeatingParams { n_rooms: 2, ..Default::default() });
        let (sys, y0) = family(&[18.0, 72.0]);
        assert_eq!(sys.dim(), 5);
        assert_eq!(y0[0], 72.0);
        // The set-point enters the rhs through the valve argument.
        let mut dy_cool = vec![0.0; 5];
        sys.eval_rhs(0.0, &y0, &mut dy_cool);
        let (sys_hot, _) = family(&[23.0, 72.0]);
        let mut dy_hot = vec![0.0; 5];
        sys_hot.eval_rhs(0.0, &y0, &mut dy_hot);
        assert!(dy_hot[1] > dy_cool[1], "higher set-point opens the valve wider");
    }
}
