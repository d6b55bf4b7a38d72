//! CSV and JSON emitters.
//!
//! Floats are written with Rust's shortest round-trip formatting: plain
//! decimal, no exponent, no locale, and parsing the text back yields
//! the exact bits. Lines end with `\n`. These files are the figure
//! contract; any plotting tool can consume them directly.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use ctesn_core::linalg::Mat;
use ctesn_core::ode::Solution;

use crate::harness::{HeatmapResult, ScalingResult};

/// One trajectory row per time point: `t,x1,...,xN`. States are given
/// as columns of an N x T matrix, matching the prediction layout.
pub fn trajectory_csv(times: &[f64], states: &Mat) -> String {
    assert_eq!(states.cols(), times.len(), "one state column per time");
    let dim = states.rows();
    let mut out = String::from("t");
    for i in 1..=dim {
        let _ = write!(out, ",x{i}");
    }
    out.push('\n');
    for (k, &t) in times.iter().enumerate() {
        let _ = write!(out, "{t}");
        for i in 0..dim {
            let _ = write!(out, ",{}", states[(i, k)]);
        }
        out.push('\n');
    }
    out
}

/// The same trajectory format fed directly from a solver result, one
/// row per accepted step.
pub fn solution_csv(sol: &Solution) -> String {
    let mut out = String::from("t");
    for i in 1..=sol.dim() {
        let _ = write!(out, ",x{i}");
    }
    out.push('\n');
    for (k, &t) in sol.times().iter().enumerate() {
        let _ = write!(out, "{t}");
        for v in sol.state(k) {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}

/// Heatmap rows `p1,p2,rel_err`, one per grid cell in (p1, p2) order.
/// A cell whose ground-truth solve failed keeps its coordinates and an
/// empty error field.
pub fn heatmap_csv(result: &HeatmapResult) -> String {
    let mut out = String::from("p1,p2,rel_err\n");
    for (p, err) in &result.grid {
        let _ = write!(out, "{},{}", p[0], p[1]);
        match err {
            Some(e) => {
                let _ = writeln!(out, ",{e}");
            }
            None => out.push_str(",\n"),
        }
    }
    out
}

pub fn heatmap_stats_json(result: &HeatmapResult) -> String {
    let stats = &result.stats;
    let mut out = String::from("{\n");
    let _ = writeln!(out, "  \"min\": {},", stats.min);
    let _ = writeln!(out, "  \"median\": {},", stats.median);
    let _ = writeln!(out, "  \"p95\": {},", stats.p95);
    let _ = writeln!(out, "  \"max\": {},", stats.max);
    let _ = writeln!(out, "  \"cells\": {},", result.grid.len());
    let _ = writeln!(out, "  \"missing\": {}", result.missing());
    out.push_str("}\n");
    out
}

/// Scaling rows `N,full_solve_s,train_s,predict_s,max_rel_err`,
/// ascending in N.
pub fn scaling_csv(result: &ScalingResult) -> String {
    let mut out = String::from("N,full_solve_s,train_s,predict_s,max_rel_err\n");
    for row in &result.rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            row.n_rooms,
            row.full_solve_seconds,
            row.surrogate_train_seconds,
            row.surrogate_predict_seconds,
            row.max_relative_error
        );
    }
    out
}

/// Writes `content` to `dir/name`, creating the directory if needed,
/// and returns the full path for reporting.
pub fn write_output(dir: &Path, name: &str, content: &str) -> io::Result<std::path::PathBuf> {
    fs::create_dir_all(dir)?;
    let path = dir.join(name);
    fs::write(&path, content)?;
    Ok(path)
}
