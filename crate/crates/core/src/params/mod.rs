//! Parameter-space tooling: the rectangular sampling box, the Sobol
//! low-discrepancy sequencer that fills it, and the radial-basis-function
//! interpolator that carries readout matrices across it.

use alloc::vec::Vec;
use core::fmt;

#[allow(unused_imports)]
use num_traits::Float;

mod rbf;
mod sobol;

pub use rbf::{fit_rbf, RbfError, RbfInterpolator};
pub use sobol::{SobolError, SobolSequencer};

/// Axis-aligned parameter box with strictly ordered bounds.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxSpace {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl BoxSpace {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self, BoxError> {
        if lower.is_empty() || lower.len() != upper.len() {
            return Err(BoxError::BadShape);
        }
        for (i, (&lo, &hi)) in lower.iter().zip(&upper).enumerate() {
            if !lo.is_finite() || !hi.is_finite() || !(lo < hi) {
                return Err(BoxError::BadBounds { dim: i });
            }
        }
        Ok(BoxSpace { lower, upper })
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn midpoint(&self) -> Vec<f64> {
        self.lower
            .iter()
            .zip(&self.upper)
            .map(|(&lo, &hi)| lo + 0.5 * (hi - lo))
            .collect()
    }

    /// Maps a unit-cube point into the box: u = 0 lands on `lower`,
    /// u = 1 on `upper`.
    pub fn map_from_unit(&self, u: &[f64]) -> Vec<f64> {
        assert_eq!(u.len(), self.dim());
        u.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(&ui, (&lo, &hi))| lo + ui * (hi - lo))
            .collect()
    }

    /// Inverse of [`map_from_unit`]; points outside the box map outside
    /// [0, 1] without clamping.
    pub fn to_unit(&self, p: &[f64]) -> Vec<f64> {
        assert_eq!(p.len(), self.dim());
        p.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .map(|(&pi, (&lo, &hi))| (pi - lo) / (hi - lo))
            .collect()
    }

    pub fn contains(&self, p: &[f64]) -> bool {
        p.len() == self.dim()
            && p.iter()
                .zip(self.lower.iter().zip(&self.upper))
                .all(|(&pi, (&lo, &hi))| pi >= lo && pi <= hi)
    }

    /// Euclidean distance from `p` to the box; zero inside.
    pub fn distance_outside(&self, p: &[f64]) -> f64 {
        assert_eq!(p.len(), self.dim());
        let mut acc = 0.0;
        for (&pi, (&lo, &hi)) in p.iter().zip(self.lower.iter().zip(&self.upper)) {
            let d = if pi < lo {
                lo - pi
            } else if pi > hi {
                pi - hi
            } else {
                0.0
            };
            acc += d * d;
        }
        acc.sqrt()
    }

    /// Euclidean length of the box diagonal.
    pub fn diagonal(&self) -> f64 {
        let mut acc = 0.0;
        for (&lo, &hi) in self.lower.iter().zip(&self.upper) {
            let d = hi - lo;
            acc += d * d;
        }
        acc.sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum BoxError {
    /// Bounds are empty or have mismatched lengths.
    BadShape,
    /// `lower[dim] < upper[dim]` does not hold or a bound is not finite.
    BadBounds { dim: usize },
}

impl fmt::Display for BoxError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BoxError::BadShape => write!(f, "box bounds empty or of mismatched lengths"),
            BoxError::BadBounds { dim } => {
                write!(f, "box bounds for dimension {dim} are not finite and ordered")
            }
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for BoxError {}
