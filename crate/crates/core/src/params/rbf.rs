//! Thin-plate-spline interpolation of vector-valued data over a
//! parameter box.
//!
//! The interpolant acts on box-normalized coordinates so that axes with
//! very different physical scales contribute evenly to the radial
//! distances. A linear polynomial tail makes the fit exact for affine
//! data and pins down the thin-plate kernel's conditional definiteness.

use alloc::vec;
use core::fmt;

#[allow(unused_imports)]
use num_traits::Float;

use crate::linalg::{lu_factor, thin_svd, Mat};
use crate::params::BoxSpace;

/// Fraction of the box diagonal a query point may sit outside the box
/// before evaluation refuses to extrapolate.
const EXTRAPOLATION_LIMIT: f64 = 0.1;

/// Unit-coordinate distance below which two centers count as duplicates.
const DUPLICATE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub enum RbfError {
    /// Centers, values, or the declared value shape disagree in size.
    BadShape,
    /// Interpolation needs at least dim + 1 centers.
    TooFewCenters { needed: usize, got: usize },
    /// A center lies outside the parameter box.
    CenterOutsideBox { index: usize },
    /// Two centers coincide, which makes the kernel system singular.
    DuplicateCenters { first: usize, second: usize },
    /// The kernel system is singular (for example, collinear centers).
    SingularSystem,
    /// Query point has the wrong number of coordinates.
    DimensionMismatch { expected: usize, got: usize },
    /// Query point lies too far outside the box to extrapolate.
    OutOfDomain { distance: f64, limit: f64 },
}

impl fmt::Display for RbfError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RbfError::BadShape => write!(f, "centers, values, and value shape disagree"),
            RbfError::TooFewCenters { needed, got } => {
                write!(f, "need at least {needed} centers, got {got}")
            }
            RbfError::CenterOutsideBox { index } => {
                write!(f, "center {index} lies outside the parameter box")
            }
            RbfError::DuplicateCenters { first, second } => {
                write!(f, "centers {first} and {second} coincide")
            }
            RbfError::SingularSystem => write!(f, "kernel system is singular"),
            RbfError::DimensionMismatch { expected, got } => {
                write!(f, "query has {got} coordinates, box has {expected}")
            }
            RbfError::OutOfDomain { distance, limit } => write!(
                f,
                "query lies {distance:.3e} outside the box (limit {limit:.3e})"
            ),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for RbfError {}

/// Fitted thin-plate-spline surface for matrix-valued data.
#[derive(Debug, Clone)]
pub struct RbfInterpolator {
    space: BoxSpace,
    centers_unit: Mat,
    /// Kernel weights, one row per center, one column per flattened entry.
    rbf_weights: Mat,
    /// Affine tail: row 0 the constant, rows 1..=dim the linear terms.
    poly_weights: Mat,
    value_shape: (usize, usize),
}

/// Thin-plate kernel phi(r) = r^2 ln r, extended continuously by 0 at 0.
fn thin_plate(r: f64) -> f64 {
    if r == 0.0 {
        0.0
    } else {
        r * r * r.ln()
    }
}

fn unit_distance(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (&x, &y) in a.iter().zip(b) {
        let d = x - y;
        acc += d * d;
    }
    acc.sqrt()
}

/// Fits a thin-plate interpolant to `values` sampled at `centers`.
///
/// `centers` is one row per sample point in physical coordinates;
/// `values` holds the matching flattened matrices, one row per sample,
/// laid out row-major with shape `value_shape`.
pub fn fit_rbf(
    space: &BoxSpace,
    centers: &Mat,
    values: &Mat,
    value_shape: (usize, usize),
) -> Result<RbfInterpolator, RbfError> {
    let n = centers.rows();
    let d = space.dim();
    let m = values.cols();
    if centers.cols() != d || values.rows() != n || value_shape.0 * value_shape.1 != m {
        return Err(RbfError::BadShape);
    }
    if n < d + 1 {
        return Err(RbfError::TooFewCenters { needed: d + 1, got: n });
    }
    for i in 0..n {
        if !space.contains(centers.row(i)) {
            return Err(RbfError::CenterOutsideBox { index: i });
        }
    }

    let mut centers_unit = Mat::zeros(n, d);
    for i in 0..n {
        centers_unit.row_mut(i).copy_from_slice(&space.to_unit(centers.row(i)));
    }
    for i in 0..n {
        for j in (i + 1)..n {
            if unit_distance(centers_unit.row(i), centers_unit.row(j)) < DUPLICATE_TOL {
                return Err(RbfError::DuplicateCenters { first: i, second: j });
            }
        }
    }

    // Saddle-point system: kernel block bordered by the affine tail's
    // basis, with moment conditions closing the bottom rows.
    let q = n + d + 1;
    let mut system = Mat::zeros(q, q);
    for i in 0..n {
        for j in 0..n {
            system[(i, j)] =
                thin_plate(unit_distance(centers_unit.row(i), centers_unit.row(j)));
        }
        system[(i, n)] = 1.0;
        system[(n, i)] = 1.0;
        for t in 0..d {
            system[(i, n + 1 + t)] = centers_unit[(i, t)];
            system[(n + 1 + t, i)] = centers_unit[(i, t)];
        }
    }

    let mut rhs = Mat::zeros(q, m);
    for i in 0..n {
        for c in 0..m {
            rhs[(i, c)] = values[(i, c)];
        }
    }

    let coef = solve_saddle(&system, &rhs)?;

    let rbf_weights = Mat::from_fn(n, m, |i, c| coef[(i, c)]);
    let poly_weights = Mat::from_fn(d + 1, m, |i, c| coef[(n + i, c)]);

    Ok(RbfInterpolator {
        space: space.clone(),
        centers_unit,
        rbf_weights,
        poly_weights,
        value_shape,
    })
}

/// Solves the bordered kernel system. LU handles the usual case; when
/// the centers are affinely degenerate (the first d+2 Sobol points lie
/// on a line in 2-D and in a plane in 3-D) the tail block loses rank and
/// LU hits a zero pivot, so the solve falls back to the minimum-norm
/// pseudoinverse solution. The moment rows have zero right-hand sides,
/// which keeps the singular system consistent: interpolation at the
/// centers stays exact and the unrepresentable tail directions get zero
/// weight. The residual check turns any genuinely unsolvable system into
/// an error instead of a silently wrong surface.
fn solve_saddle(system: &Mat, rhs: &Mat) -> Result<Mat, RbfError> {
    if let Ok(lu) = lu_factor(system) {
        return Ok(lu.solve_mat(rhs));
    }
    let svd = thin_svd(system);
    let cutoff = 1e-12 * svd.sigma.first().copied().unwrap_or(0.0);
    let ut_rhs = svd.u.transpose().matmul(rhs);
    let mut scaled = ut_rhs;
    for i in 0..svd.sigma.len() {
        let inv = if svd.sigma[i] > cutoff { 1.0 / svd.sigma[i] } else { 0.0 };
        for c in 0..scaled.cols() {
            scaled[(i, c)] *= inv;
        }
    }
    let coef = svd.v.matmul(&scaled);

    let reproduced = system.matmul(&coef);
    let mut diff = 0.0f64;
    for (a, b) in reproduced.data().iter().zip(rhs.data()) {
        diff = diff.max((a - b).abs());
    }
    let scale = rhs.data().iter().fold(1.0f64, |m, v| m.max(v.abs()));
    if diff > 1e-8 * scale {
        return Err(RbfError::SingularSystem);
    }
    Ok(coef)
}

impl RbfInterpolator {
    pub fn dim(&self) -> usize {
        self.space.dim()
    }

    pub fn n_centers(&self) -> usize {
        self.centers_unit.rows()
    }

    pub fn value_shape(&self) -> (usize, usize) {
        self.value_shape
    }

    pub fn space(&self) -> &BoxSpace {
        &self.space
    }

    /// Interpolates the surface at `p`, returning a matrix of
    /// [`value_shape`](Self::value_shape).
    ///
    /// Points inside the box always evaluate; points outside are allowed
    /// a margin of 10% of the box diagonal, beyond which the query is
    /// rejected rather than extrapolated.
    pub fn eval(&self, p: &[f64]) -> Result<Mat, RbfError> {
        let d = self.space.dim();
        if p.len() != d {
            return Err(RbfError::DimensionMismatch { expected: d, got: p.len() });
        }
        let distance = self.space.distance_outside(p);
        let limit = EXTRAPOLATION_LIMIT * self.space.diagonal();
        if distance > limit {
            return Err(RbfError::OutOfDomain { distance, limit });
        }

        let u = self.space.to_unit(p);
        let n = self.n_centers();
        let mut kernel = vec![0.0; n];
        for (i, k) in kernel.iter_mut().enumerate() {
            *k = thin_plate(unit_distance(&u, self.centers_unit.row(i)));
        }

        let (rows, cols) = self.value_shape;
        let mut out = Mat::zeros(rows, cols);
        for c in 0..rows * cols {
            let mut acc = self.poly_weights[(0, c)];
            for (t, &ut) in u.iter().enumerate() {
                acc += self.poly_weights[(1 + t, c)] * ut;
            }
            for (i, &k) in kernel.iter().enumerate() {
                acc += self.rbf_weights[(i, c)] * k;
            }
            out.data_mut()[c] = acc;
        }
        Ok(out)
    }
}
