//! Dense linear algebra on flat row-major matrices.
//!
//! Deliberately small: the crate needs matrix products, a partial-pivot LU
//! for stage and interpolation systems, and a thin SVD for the readout
//! pseudoinverse. Owning these kernels keeps the core `no_std`-clean and the
//! results bit-reproducible.

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::ops::{Index, IndexMut};

#[allow(unused_imports)]
use num_traits::Float;

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Mat {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    /// Builds from a flat row-major buffer; `data.len()` must be `rows * cols`.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "flat buffer length mismatch");
        Mat { rows, cols, data }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Mat { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn col(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn set_col(&mut self, j: usize, v: &[f64]) {
        assert_eq!(v.len(), self.rows);
        for (i, &x) in v.iter().enumerate() {
            self[(i, j)] = x;
        }
    }

    pub fn transpose(&self) -> Mat {
        Mat::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    /// self * rhs.
    pub fn matmul(&self, rhs: &Mat) -> Mat {
        assert_eq!(self.cols, rhs.rows, "matmul dimension mismatch");
        let mut out = Mat::zeros(self.rows, rhs.cols);
        for (i, orow) in out.data.chunks_mut(rhs.cols).enumerate() {
            for (k, &aik) in self.row(i).iter().enumerate() {
                if aik != 0.0 {
                    for (o, &b) in orow.iter_mut().zip(rhs.row(k)) {
                        *o += aik * b;
                    }
                }
            }
        }
        out
    }

    /// self * x for a vector x, written into `out`.
    pub fn matvec(&self, x: &[f64], out: &mut [f64]) {
        assert_eq!(x.len(), self.cols);
        assert_eq!(out.len(), self.rows);
        for (i, o) in out.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (&a, &b) in self.row(i).iter().zip(x) {
                acc += a * b;
            }
            *o = acc;
        }
    }

    pub fn frob_norm(&self) -> f64 {
        let mut s = 0.0;
        for &x in &self.data {
            s += x * x;
        }
        s.sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Order-insensitive only in the trivial sense: folds the exact bit
    /// patterns in storage order. Used to assert buffers were not mutated.
    pub fn bits_hash(&self) -> u64 {
        let mut h = 0xcbf2_9ce4_8422_2325u64;
        for &x in &self.data {
            h ^= x.to_bits();
            h = h.wrapping_mul(0x1000_0000_01b3);
        }
        h ^ (self.rows as u64).wrapping_mul(31) ^ (self.cols as u64)
    }
}

impl Index<(usize, usize)> for Mat {
    type Output = f64;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Mat {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

// --- LU factorization -------------------------------------------------------

/// The factored matrix was numerically singular (no usable pivot).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SingularMatrix;

impl fmt::Display for SingularMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "matrix is numerically singular")
    }
}

#[cfg(feature = "std")]
impl std::error::Error for SingularMatrix {}

/// Partial-pivot LU factorization of a square matrix.
pub struct Lu {
    lu: Mat,
    piv: Vec<usize>,
}

/// Factors `a` (square) as P*A = L*U with row pivoting. A pivot smaller than
/// `1e-13` times the largest entry of `a` is treated as singular.
pub fn lu_factor(a: &Mat) -> Result<Lu, SingularMatrix> {
    assert_eq!(a.rows(), a.cols(), "lu_factor requires a square matrix");
    let n = a.rows();
    let mut lu = a.clone();
    let mut piv: Vec<usize> = (0..n).collect();
    let scale = lu.data.iter().fold(0.0f64, |m, &x| m.max(x.abs()));
    let tol = if scale > 0.0 { scale * 1e-13 } else { 0.0 };

    for k in 0..n {
        let mut p = k;
        let mut pmag = lu[(k, k)].abs();
        for i in (k + 1)..n {
            let mag = lu[(i, k)].abs();
            if mag > pmag {
                p = i;
                pmag = mag;
            }
        }
        if !(pmag > tol) {
            return Err(SingularMatrix);
        }
        if p != k {
            piv.swap(p, k);
            for j in 0..n {
                let tmp = lu[(k, j)];
                lu[(k, j)] = lu[(p, j)];
                lu[(p, j)] = tmp;
            }
        }
        let pivot = lu[(k, k)];
        for i in (k + 1)..n {
            let factor = lu[(i, k)] / pivot;
            lu[(i, k)] = factor;
            if factor != 0.0 {
                for j in (k + 1)..n {
                    lu[(i, j)] -= factor * lu[(k, j)];
                }
            }
        }
    }
    Ok(Lu { lu, piv })
}

impl Lu {
    pub fn dim(&self) -> usize {
        self.lu.rows()
    }

    /// Solves A x = b, overwriting `x` (which holds b on entry).
    pub fn solve_into(&self, x: &mut [f64]) {
        let n = self.dim();
        assert_eq!(x.len(), n);
        // apply permutation
        let mut b: Vec<f64> = self.piv.iter().map(|&p| x[p]).collect();
        // forward substitution (unit lower)
        for i in 1..n {
            let mut acc = b[i];
            for j in 0..i {
                acc -= self.lu[(i, j)] * b[j];
            }
            b[i] = acc;
        }
        // back substitution
        for i in (0..n).rev() {
            let mut acc = b[i];
            for j in (i + 1)..n {
                acc -= self.lu[(i, j)] * b[j];
            }
            b[i] = acc / self.lu[(i, i)];
        }
        x.copy_from_slice(&b);
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_into(&mut x);
        x
    }

    /// Solves A X = B column by column.
    pub fn solve_mat(&self, b: &Mat) -> Mat {
        assert_eq!(b.rows(), self.dim());
        let mut out = Mat::zeros(b.rows(), b.cols());
        let mut col = vec![0.0; b.rows()];
        for j in 0..b.cols() {
            for i in 0..b.rows() {
                col[i] = b[(i, j)];
            }
            self.solve_into(&mut col);
            out.set_col(j, &col);
        }
        out
    }
}

// --- Thin SVD (one-sided Jacobi) --------------------------------------------

/// Thin singular value decomposition: `a = u * diag(sigma) * v^T` with
/// `u` of shape m x k, `v` of shape n x k, k = min(m, n), singular values
/// sorted in descending order.
pub struct Svd {
    pub u: Mat,
    pub sigma: Vec<f64>,
    pub v: Mat,
}

/// One-sided Jacobi SVD. Quadratically convergent, deterministic, and
/// accurate to high relative precision; plenty for the matrix sizes this
/// crate works with (a few hundred rows and columns).
pub fn thin_svd(a: &Mat) -> Svd {
    if a.rows() < a.cols() {
        let t = thin_svd(&a.transpose());
        return Svd {
            u: t.v,
            sigma: t.sigma,
            v: t.u,
        };
    }
    let m = a.rows();
    let n = a.cols();
    let mut b = a.clone();
    let mut v = Mat::identity(n);
    let eps = 1e-15;

    for _sweep in 0..60 {
        let mut rotated = false;
        for p in 0..n.saturating_sub(1) {
            for q in (p + 1)..n {
                let mut alpha = 0.0;
                let mut beta = 0.0;
                let mut gamma = 0.0;
                for i in 0..m {
                    let bp = b[(i, p)];
                    let bq = b[(i, q)];
                    alpha += bp * bp;
                    beta += bq * bq;
                    gamma += bp * bq;
                }
                if alpha == 0.0 || beta == 0.0 {
                    continue;
                }
                if gamma.abs() <= eps * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = if zeta >= 0.0 {
                    1.0 / (zeta + (1.0 + zeta * zeta).sqrt())
                } else {
                    -1.0 / (-zeta + (1.0 + zeta * zeta).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                for i in 0..m {
                    let bp = b[(i, p)];
                    let bq = b[(i, q)];
                    b[(i, p)] = c * bp - s * bq;
                    b[(i, q)] = s * bp + c * bq;
                }
                for i in 0..n {
                    let vp = v[(i, p)];
                    let vq = v[(i, q)];
                    v[(i, p)] = c * vp - s * vq;
                    v[(i, q)] = s * vp + c * vq;
                }
            }
        }
        if !rotated {
            break;
        }
    }

    let mut sigma = vec![0.0; n];
    let mut u = Mat::zeros(m, n);
    for j in 0..n {
        let mut norm = 0.0;
        for i in 0..m {
            norm += b[(i, j)] * b[(i, j)];
        }
        let norm = norm.sqrt();
        sigma[j] = norm;
        if norm > 0.0 {
            for i in 0..m {
                u[(i, j)] = b[(i, j)] / norm;
            }
        }
    }

    // sort singular values descending, permuting u and v consistently
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| sigma[j].total_cmp(&sigma[i]));
    let sigma_sorted: Vec<f64> = order.iter().map(|&j| sigma[j]).collect();
    let mut u_sorted = Mat::zeros(m, n);
    let mut v_sorted = Mat::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        for i in 0..m {
            u_sorted[(i, dst)] = u[(i, src)];
        }
        for i in 0..n {
            v_sorted[(i, dst)] = v[(i, src)];
        }
    }

    Svd {
        u: u_sorted,
        sigma: sigma_sorted,
        v: v_sorted,
    }
}
