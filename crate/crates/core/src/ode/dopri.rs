//! Explicit Dormand-Prince 5(4) integration with FSAL and PI step control.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;

use super::{
    count_invocation, wrms_norm, OdeSystem, Solution, SolveStatus, SolverConfig, StepController,
};

// Butcher tableau of the Dormand-Prince 5(4) pair. The advancing solution is
// the fifth-order one; E* are the differences between the fifth- and
// fourth-order weights, so the error estimate is h * sum(E_i * k_i).
const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

struct Workspace {
    k: [Vec<f64>; 7],
    ytmp: Vec<f64>,
    ynew: Vec<f64>,
    yerr: Vec<f64>,
}

impl Workspace {
    fn new(n: usize) -> Self {
        Workspace {
            k: core::array::from_fn(|_| vec![0.0; n]),
            ytmp: vec![0.0; n],
            ynew: vec![0.0; n],
            yerr: vec![0.0; n],
        }
    }
}

/// One Dormand-Prince step from (t, y) with step h. `ws.k[0]` must hold
/// f(t, y) on entry (FSAL: on acceptance, `ws.k[6]` is f(t+h, ynew)).
/// Fills `ws.ynew` and `ws.yerr` and reports the number of rhs evaluations.
fn dopri5_step(system: &OdeSystem<'_>, t: f64, y: &[f64], h: f64, ws: &mut Workspace) -> u64 {
    let n = y.len();
    macro_rules! stage {
        ($c:expr, $dst:expr, $($a:expr => $src:expr),+) => {{
            for i in 0..n {
                let mut acc = 0.0;
                $(acc += $a * ws.k[$src][i];)+
                ws.ytmp[i] = y[i] + h * acc;
            }
            let (tmp, k) = (&ws.ytmp, &mut ws.k[$dst]);
            system.eval_rhs(t + $c * h, tmp, k);
        }};
    }
    stage!(C2, 1, A21 => 0);
    stage!(C3, 2, A31 => 0, A32 => 1);
    stage!(C4, 3, A41 => 0, A42 => 1, A43 => 2);
    stage!(C5, 4, A51 => 0, A52 => 1, A53 => 2, A54 => 3);
    stage!(1.0, 5, A61 => 0, A62 => 1, A63 => 2, A64 => 3, A65 => 4);
    for i in 0..n {
        ws.ynew[i] = y[i]
            + h * (A71 * ws.k[0][i]
                + A73 * ws.k[2][i]
                + A74 * ws.k[3][i]
                + A75 * ws.k[4][i]
                + A76 * ws.k[5][i]);
    }
    let (ynew, k7) = (&ws.ynew, &mut ws.k[6]);
    system.eval_rhs(t + h, ynew, k7);
    for i in 0..n {
        ws.yerr[i] = h
            * (E1 * ws.k[0][i]
                + E3 * ws.k[2][i]
                + E4 * ws.k[3][i]
                + E5 * ws.k[4][i]
                + E6 * ws.k[5][i]
                + E7 * ws.k[6][i]);
    }
    6
}

/// Integrates y' = f(t, y) over `tspan` with the explicit Dormand-Prince
/// 5(4) method. Accepted steps (with derivatives) land in the returned
/// [`Solution`]; failures are reported via its status together with the
/// partial trajectory.
pub fn solve_explicit(
    system: &OdeSystem<'_>,
    tspan: (f64, f64),
    y0: &[f64],
    cfg: &SolverConfig,
) -> Solution {
    count_invocation();
    cfg.validate().expect("invalid solver configuration");
    let (t0, tf) = tspan;
    assert!(
        tf > t0 && t0.is_finite() && tf.is_finite(),
        "time span must be finite with tf > t0"
    );
    assert_eq!(y0.len(), system.dim(), "initial state dimension mismatch");

    let span = tf - t0;
    let (mut h, hmin) = cfg.resolve_steps(span);
    let n = system.dim();
    let mut ws = Workspace::new(n);
    let mut sol = Solution::with_capacity(n, 512);
    let mut controller = StepController::new(5);

    let mut t = t0;
    let mut y = y0.to_vec();
    system.eval_rhs(t, &y, &mut ws.k[0]);
    sol.add_rhs_evals(1);
    sol.push_step(t, &y, &ws.k[0]);

    let mut attempts: u64 = 0;
    loop {
        if t >= tf {
            sol.set_status(SolveStatus::Success);
            return sol;
        }
        if attempts >= cfg.max_steps {
            sol.set_status(SolveStatus::StepBudgetExhausted);
            return sol;
        }
        attempts += 1;

        let mut h_step = h.min(span);
        let final_step = t + h_step >= tf;
        if final_step {
            h_step = tf - t;
        }

        sol.add_rhs_evals(dopri5_step(system, t, &y, h_step, &mut ws));
        let err = wrms_norm(&ws.yerr, &y, &ws.ynew, cfg);

        if err <= 1.0 {
            t = if final_step { tf } else { t + h_step };
            y.copy_from_slice(&ws.ynew);
            ws.k.swap(0, 6); // FSAL: k7 becomes next k1
            sol.push_step(t, &y, &ws.k[0]);
            h = h_step * controller.accept(err);
        } else {
            sol.add_rejections(1);
            h = h_step * controller.reject(err);
            if h < hmin {
                sol.set_status(SolveStatus::DtUnderflow);
                return sol;
            }
        }
    }
}
