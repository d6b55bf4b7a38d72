//! Gray-code Sobol sequencer over the unit cube.
//!
//! Direction numbers come from the Joe–Kuo D6 primitive-polynomial table
//! embedded at build time for dimensions up to 16. The sequence is
//! generated with the Gray-code update x_n = x_{n-1} XOR v[ctz(n)], so
//! consecutive points cost one XOR per dimension. The all-zero point x_0
//! is skipped: the first point handed out is x_1 = (0.5, ..., 0.5).

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;

/// Bits carried per coordinate; supports 2^32 - 1 points.
const BITS: usize = 32;

/// Largest dimension covered by the embedded direction-number table.
pub const MAX_DIM: usize = 16;

const TABLE: &str = include_str!("joe_kuo_d16.txt");

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SobolError {
    /// Requested dimension is zero or beyond the embedded table.
    DimensionUnsupported { dim: usize },
}

impl fmt::Display for SobolError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SobolError::DimensionUnsupported { dim } => {
                write!(f, "sobol dimension {dim} unsupported (1..={MAX_DIM})")
            }
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for SobolError {}

/// Iterative Sobol state: the current integer coordinates plus the index
/// of the most recently generated point.
#[derive(Debug, Clone)]
pub struct SobolSequencer {
    index: u64,
    x: Vec<u32>,
    v: Vec<[u32; BITS]>,
}

impl SobolSequencer {
    /// Sequencer positioned before x_1.
    pub fn new(dim: usize) -> Result<Self, SobolError> {
        Self::from_index(dim, 0)
    }

    /// Sequencer positioned as if `start` points had already been drawn,
    /// so the next call to [`next_point`](Self::next_point) yields
    /// x_{start+1}. The state is reconstructed in closed form from the
    /// Gray code of `start` rather than by iterating.
    pub fn from_index(dim: usize, start: u64) -> Result<Self, SobolError> {
        if dim == 0 || dim > MAX_DIM {
            return Err(SobolError::DimensionUnsupported { dim });
        }
        assert!(start < (1u64 << BITS) - 1, "sobol index space exhausted");
        let v = direction_numbers(dim);
        let gray = start ^ (start >> 1);
        let mut x = vec![0u32; dim];
        for j in 0..BITS {
            if (gray >> j) & 1 == 1 {
                for (xi, vi) in x.iter_mut().zip(&v) {
                    *xi ^= vi[j];
                }
            }
        }
        Ok(SobolSequencer { index: start, x, v })
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    /// Index of the most recently generated point (0 before the first).
    pub fn index(&self) -> u64 {
        self.index
    }

    /// Advances to the next point of the sequence, in [0, 1)^dim.
    pub fn next_point(&mut self) -> Vec<f64> {
        self.index += 1;
        assert!(self.index < (1u64 << BITS), "sobol index space exhausted");
        let j = self.index.trailing_zeros() as usize;
        for (xi, vi) in self.x.iter_mut().zip(&self.v) {
            *xi ^= vi[j];
        }
        const SCALE: f64 = 1.0 / (1u64 << BITS) as f64;
        self.x.iter().map(|&xi| xi as f64 * SCALE).collect()
    }
}

/// Direction numbers v[j] = m_{j+1} * 2^(BITS-1-j) for the first `dim`
/// Sobol dimensions. Dimension 1 is van der Corput (all m = 1); the rest
/// extend the tabulated initial values with the primitive-polynomial
/// recurrence.
fn direction_numbers(dim: usize) -> Vec<[u32; BITS]> {
    let mut rows = Vec::with_capacity(dim);
    let mut m = [1u32; BITS];
    rows.push(pack(&m));
    let mut entries = TABLE
        .lines()
        .filter(|l| !l.trim_start().starts_with('#') && !l.trim().is_empty());
    for d in 2..=dim {
        let line = entries.next().expect("direction table shorter than MAX_DIM");
        let mut fields = line.split_whitespace().map(|t| {
            t.parse::<u32>()
                .expect("direction table holds decimal integers")
        });
        let row_dim = fields.next().unwrap() as usize;
        assert_eq!(row_dim, d, "direction table rows out of order");
        let s = fields.next().unwrap() as usize;
        let a = fields.next().unwrap();
        for mi in m.iter_mut().take(s) {
            *mi = fields.next().expect("row shorter than its degree");
        }
        for i in s..BITS {
            m[i] = m[i - s] ^ (m[i - s] << s);
            for k in 1..s {
                if (a >> (s - 1 - k)) & 1 == 1 {
                    m[i] ^= m[i - k] << k;
                }
            }
        }
        rows.push(pack(&m));
    }
    rows
}

fn pack(m: &[u32; BITS]) -> [u32; BITS] {
    let mut v = [0u32; BITS];
    for j in 0..BITS {
        v[j] = m[j] << (BITS - 1 - j);
    }
    v
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_point_is_cube_center_in_every_dimension() {
        for dim in 1..=MAX_DIM {
            let mut seq = SobolSequencer::new(dim).unwrap();
            assert_eq!(seq.next_point(), vec![0.5; dim]);
        }
    }

    #[test]
    fn early_points_match_reference_sequence() {
        // Joe-Kuo reference values for the full 16-dimensional sequence.
        let mut seq = SobolSequencer::new(16).unwrap();
        seq.next_point();
        let x2 = seq.next_point();
        assert_eq!(
            x2,
            vec![
                0.75, 0.25, 0.25, 0.25, 0.75, 0.75, 0.25, 0.75, 0.75, 0.75, 0.75, 0.75, 0.25,
                0.25, 0.75, 0.25
            ]
        );
        for _ in 3..8 {
            seq.next_point();
        }
        let x8 = seq.next_point();
        assert_eq!(
            x8,
            vec![
                0.1875, 0.3125, 0.9375, 0.4375, 0.5625, 0.3125, 0.4375, 0.9375, 0.9375, 0.3125,
                0.6875, 0.0625, 0.9375, 0.9375, 0.8125, 0.9375
            ]
        );
    }

    #[test]
    fn three_dimensional_prefix() {
        let mut seq = SobolSequencer::new(3).unwrap();
        assert_eq!(seq.next_point(), vec![0.5, 0.5, 0.5]);
        assert_eq!(seq.next_point(), vec![0.75, 0.25, 0.25]);
        assert_eq!(seq.next_point(), vec![0.25, 0.75, 0.75]);
    }

    #[test]
    fn dimension_bounds_are_enforced() {
        assert!(matches!(
            SobolSequencer::new(0),
            Err(SobolError::DimensionUnsupported { dim: 0 })
        ));
        assert!(matches!(
            SobolSequencer::new(17),
            Err(SobolError::DimensionUnsupported { dim: 17 })
        ));
        assert!(SobolSequencer::new(16).is_ok());
    }

    #[test]
    fn from_index_matches_iterated_state() {
        let mut walked = SobolSequencer::new(5).unwrap();
        for _ in 0..137 {
            walked.next_point();
        }
        let mut jumped = SobolSequencer::from_index(5, 137).unwrap();
        assert_eq!(jumped.index(), 137);
        for _ in 0..10 {
            assert_eq!(walked.next_point(), jumped.next_point());
        }
    }

    #[test]
    fn dyadic_block_stratifies_two_dimensions() {
        // The base dyadic block {x_0, ..., x_255} (origin included) puts
        // exactly 16 of its 256 points in each cell of the 4x4 grid.
        // Shifted blocks such as {x_1, ..., x_256} do not have this
        // property, so the origin is counted explicitly here even though
        // the sequencer never hands it out.
        let mut seq = SobolSequencer::new(2).unwrap();
        let mut counts = [[0u32; 4]; 4];
        counts[0][0] += 1; // x_0 = (0, 0)
        for _ in 1..256 {
            let p = seq.next_point();
            let i = (p[0] * 4.0) as usize;
            let j = (p[1] * 4.0) as usize;
            counts[i][j] += 1;
        }
        for row in &counts {
            for &c in row {
                assert_eq!(c, 16);
            }
        }
    }

    #[test]
    fn every_dimension_projects_onto_dyadic_lattice() {
        // For each coordinate, the base block of 64 points visits every
        // multiple of 1/64 exactly once. This holds only if the direction
        // numbers satisfy m_k odd and m_k < 2^k, so it doubles as a check
        // on the embedded table and the recurrence that extends it.
        let mut seq = SobolSequencer::new(MAX_DIM).unwrap();
        let mut seen = [[false; 64]; MAX_DIM];
        for s in seen.iter_mut() {
            s[0] = true; // x_0 contributes 0 to every coordinate
        }
        for _ in 1..64 {
            let p = seq.next_point();
            for (d, &c) in p.iter().enumerate() {
                let cell = (c * 64.0) as usize;
                assert!(!seen[d][cell], "dimension {d} revisits cell {cell}");
                seen[d][cell] = true;
            }
        }
        for (d, s) in seen.iter().enumerate() {
            assert!(s.iter().all(|&b| b), "dimension {d} misses a lattice cell");
        }
    }

    #[test]
    fn points_stay_inside_half_open_cube() {
        let mut seq = SobolSequencer::new(7).unwrap();
        for _ in 0..1000 {
            let p = seq.next_point();
            assert!(p.iter().all(|&c| (0.0..1.0).contains(&c) && c.is_finite()));
        }
    }
}
