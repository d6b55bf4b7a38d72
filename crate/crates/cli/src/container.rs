//! On-disk container for trained surrogates.
//!
//! A file starts with the 8-byte magic `CTESNSUR` and a little-endian
//! u32 format version, followed by length-prefixed sections. The first
//! section is a UTF-8 JSON header carrying every scalar field; the rest
//! are matrices stored row-major as little-endian f64 behind u64 row
//! and column counts. Three reservoir sections (times, states,
//! derivatives) come first, then one readout matrix per training
//! sample, in sample order.
//!
//! Floats in the JSON header are written in the shortest form that
//! parses back to the same bits, and the binary sections are raw IEEE
//! bytes, so loading a saved surrogate reproduces its predictions
//! bitwise. Nothing time- or host-dependent goes into the file: saving
//! the same surrogate twice yields identical bytes.

use std::fmt;
use std::fs;
use std::io;
use std::path::Path;

use ctesn_core::linalg::Mat;
use ctesn_core::ode::{Solution, SolveStatus};
use ctesn_core::params::BoxSpace;
use ctesn_core::readout::ReadoutMatrix;
use ctesn_core::reservoir::{DriveNormalization, ReservoirSolution, TimeWarp};
use ctesn_core::surrogate::{SurrogateMetadata, TrainedSurrogate};
use serde::{Deserialize, Serialize};

const MAGIC: &[u8; 8] = b"CTESNSUR";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug)]
pub enum ContainerError {
    /// The file does not start with the surrogate magic.
    BadMagic,
    /// The file announces a format version this build cannot read.
    UnsupportedVersion(u32),
    /// A section header or payload runs past the end of the data.
    Truncated,
    /// Structurally complete but semantically broken: bad JSON,
    /// mismatched matrix shapes, or fields the surrogate rejects.
    Malformed(String),
    Io(io::Error),
}

impl fmt::Display for ContainerError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ContainerError::BadMagic => write!(f, "not a surrogate container (bad magic)"),
            ContainerError::UnsupportedVersion(v) => {
                write!(f, "unsupported container version {v} (this build reads {FORMAT_VERSION})")
            }
            ContainerError::Truncated => write!(f, "container is truncated"),
            ContainerError::Malformed(msg) => write!(f, "malformed container: {msg}"),
            ContainerError::Io(e) => write!(f, "container io error: {e}"),
        }
    }
}

impl std::error::Error for ContainerError {}

impl From<io::Error> for ContainerError {
    fn from(e: io::Error) -> Self {
        ContainerError::Io(e)
    }
}

/// Everything scalar about a surrogate, serialized as the JSON header.
/// Matrix payloads live in the binary sections; their shapes are
/// cross-checked against the dims recorded here.
#[derive(Serialize, Deserialize)]
struct Header {
    model_name: String,
    model_dim: usize,
    reservoir_dim: usize,
    seed: u64,
    tool_version: String,
    tspan: [f64; 2],
    drive_span: [f64; 2],
    warp: WarpHeader,
    solve_status: String,
    steps_rejected: u64,
    rhs_evals: u64,
    space_lower: Vec<f64>,
    space_upper: Vec<f64>,
    drive_offset: Vec<f64>,
    drive_scale: Vec<f64>,
    sample_params: Vec<Vec<f64>>,
    fit_residuals: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
enum WarpHeader {
    Identity,
    Log { t0: f64, eps: f64 },
}

impl From<&TimeWarp> for WarpHeader {
    fn from(warp: &TimeWarp) -> Self {
        match *warp {
            TimeWarp::Identity => WarpHeader::Identity,
            TimeWarp::Log { t0, eps } => WarpHeader::Log { t0, eps },
        }
    }
}

impl From<&WarpHeader> for TimeWarp {
    fn from(header: &WarpHeader) -> Self {
        match *header {
            WarpHeader::Identity => TimeWarp::Identity,
            WarpHeader::Log { t0, eps } => TimeWarp::Log { t0, eps },
        }
    }
}

fn status_name(status: SolveStatus) -> &'static str {
    match status {
        SolveStatus::Success => "success",
        SolveStatus::StepBudgetExhausted => "step_budget_exhausted",
        SolveStatus::DtUnderflow => "dt_underflow",
        SolveStatus::SingularStageMatrix => "singular_stage_matrix",
    }
}

fn status_from_name(name: &str) -> Option<SolveStatus> {
    match name {
        "success" => Some(SolveStatus::Success),
        "step_budget_exhausted" => Some(SolveStatus::StepBudgetExhausted),
        "dt_underflow" => Some(SolveStatus::DtUnderflow),
        "singular_stage_matrix" => Some(SolveStatus::SingularStageMatrix),
        _ => None,
    }
}

pub fn save(surrogate: &TrainedSurrogate, path: &Path) -> Result<(), ContainerError> {
    fs::write(path, encode(surrogate))?;
    Ok(())
}

pub fn load(path: &Path) -> Result<TrainedSurrogate, ContainerError> {
    decode(&fs::read(path)?)
}

pub fn encode(surrogate: &TrainedSurrogate) -> Vec<u8> {
    let sol = &surrogate.reservoir_solution.sol;
    let header = Header {
        model_name: surrogate.metadata.model_name.clone(),
        model_dim: surrogate.metadata.model_dim,
        reservoir_dim: surrogate.metadata.reservoir_dim,
        seed: surrogate.metadata.seed,
        tool_version: surrogate.metadata.tool_version.clone(),
        tspan: [surrogate.tspan.0, surrogate.tspan.1],
        drive_span: [
            surrogate.reservoir_solution.drive_span.0,
            surrogate.reservoir_solution.drive_span.1,
        ],
        warp: WarpHeader::from(&surrogate.reservoir_solution.warp),
        solve_status: status_name(sol.status()).to_string(),
        steps_rejected: sol.steps_rejected(),
        rhs_evals: sol.rhs_evals(),
        space_lower: surrogate.space.lower().to_vec(),
        space_upper: surrogate.space.upper().to_vec(),
        drive_offset: surrogate.drive_normalization.offset.clone(),
        drive_scale: surrogate.drive_normalization.scale.clone(),
        sample_params: surrogate.matrices.iter().map(|m| m.param.clone()).collect(),
        fit_residuals: surrogate.matrices.iter().map(|m| m.fit_residual).collect(),
    };
    let header_json =
        serde_json::to_vec(&header).expect("header has no non-serializable content");

    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    push_section(&mut out, &header_json);
    push_section(&mut out, &matrix_payload(sol.len(), 1, sol.times()));
    push_section(&mut out, &matrix_payload(sol.len(), sol.dim(), sol.states_flat()));
    push_section(&mut out, &matrix_payload(sol.len(), sol.dim(), sol.derivs_flat()));
    for matrix in &surrogate.matrices {
        push_section(&mut out, &matrix_payload(matrix.w.rows(), matrix.w.cols(), matrix.w.data()));
    }
    out
}

pub fn decode(bytes: &[u8]) -> Result<TrainedSurrogate, ContainerError> {
    let mut reader = Reader { bytes, pos: 0 };
    let magic = reader.take(MAGIC.len())?;
    if magic != MAGIC {
        return Err(ContainerError::BadMagic);
    }
    let version = u32::from_le_bytes(reader.take(4)?.try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(ContainerError::UnsupportedVersion(version));
    }

    let header: Header = serde_json::from_slice(reader.section()?)
        .map_err(|e| ContainerError::Malformed(format!("header json: {e}")))?;
    let status = status_from_name(&header.solve_status).ok_or_else(|| {
        ContainerError::Malformed(format!("unknown solve status {:?}", header.solve_status))
    })?;
    if header.drive_offset.len() != header.model_dim
        || header.drive_scale.len() != header.model_dim
    {
        return Err(ContainerError::Malformed(
            "drive normalization length does not match the model dimension".to_string(),
        ));
    }
    if header.fit_residuals.len() != header.sample_params.len() {
        return Err(ContainerError::Malformed(
            "one fit residual per sample parameter required".to_string(),
        ));
    }

    let (times, times_cols) = read_matrix(reader.section()?)?;
    let (states, states_cols) = read_matrix(reader.section()?)?;
    let (derivs, derivs_cols) = read_matrix(reader.section()?)?;
    if times_cols != 1 {
        return Err(ContainerError::Malformed("times must be a column vector".to_string()));
    }
    if states_cols != header.reservoir_dim || derivs_cols != header.reservoir_dim {
        return Err(ContainerError::Malformed(
            "reservoir storage width does not match the reservoir dimension".to_string(),
        ));
    }

    let mut matrices = Vec::with_capacity(header.sample_params.len());
    for (param, &fit_residual) in header.sample_params.iter().zip(&header.fit_residuals) {
        let (data, cols) = read_matrix(reader.section()?)?;
        if cols != header.reservoir_dim || data.len() != header.model_dim * cols {
            return Err(ContainerError::Malformed(
                "readout matrix shape does not match the recorded dimensions".to_string(),
            ));
        }
        matrices.push(ReadoutMatrix {
            w: Mat::from_vec(header.model_dim, cols, data),
            fit_residual,
            param: param.clone(),
        });
    }
    if reader.pos != bytes.len() {
        return Err(ContainerError::Malformed("trailing bytes after final section".to_string()));
    }

    let sol = Solution::from_parts(
        header.reservoir_dim,
        times,
        states,
        derivs,
        status,
        header.steps_rejected,
        header.rhs_evals,
    )
    .map_err(|msg| ContainerError::Malformed(format!("reservoir solution: {msg}")))?;
    let reservoir_solution = ReservoirSolution {
        sol,
        warp: TimeWarp::from(&header.warp),
        drive_span: (header.drive_span[0], header.drive_span[1]),
    };
    let space = BoxSpace::new(header.space_lower, header.space_upper)
        .map_err(|e| ContainerError::Malformed(format!("parameter box: {e}")))?;
    let normalization =
        DriveNormalization { offset: header.drive_offset, scale: header.drive_scale };
    let metadata = SurrogateMetadata {
        model_name: header.model_name,
        model_dim: header.model_dim,
        reservoir_dim: header.reservoir_dim,
        seed: header.seed,
        tool_version: header.tool_version,
    };
    TrainedSurrogate::from_parts(
        reservoir_solution,
        matrices,
        space,
        normalization,
        (header.tspan[0], header.tspan[1]),
        metadata,
    )
    .map_err(|e| ContainerError::Malformed(e.to_string()))
}

fn push_section(buf: &mut Vec<u8>, payload: &[u8]) {
    buf.extend_from_slice(&(payload.len() as u64).to_le_bytes());
    buf.extend_from_slice(payload);
}

fn matrix_payload(rows: usize, cols: usize, data: &[f64]) -> Vec<u8> {
    debug_assert_eq!(rows * cols, data.len());
    let mut out = Vec::with_capacity(16 + 8 * data.len());
    out.extend_from_slice(&(rows as u64).to_le_bytes());
    out.extend_from_slice(&(cols as u64).to_le_bytes());
    for v in data {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

/// Parses one matrix payload, returning the row-major data and the
/// column count; the row count is implied by the length.
fn read_matrix(payload: &[u8]) -> Result<(Vec<f64>, usize), ContainerError> {
    if payload.len() < 16 {
        return Err(ContainerError::Truncated);
    }
    let rows = u64::from_le_bytes(payload[0..8].try_into().unwrap());
    let cols = u64::from_le_bytes(payload[8..16].try_into().unwrap());
    let count = rows
        .checked_mul(cols)
        .and_then(|n| usize::try_from(n).ok())
        .ok_or(ContainerError::Truncated)?;
    let expected = 16 + 8 * count;
    if payload.len() != expected {
        return Err(if payload.len() < expected {
            ContainerError::Truncated
        } else {
            ContainerError::Malformed("matrix payload longer than its dimensions".to_string())
        });
    }
    let data = payload[16..]
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok((data, cols as usize))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ContainerError> {
        if self.bytes.len() - self.pos < n {
            return Err(ContainerError::Truncated);
        }
        let slice = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(slice)
    }

    fn section(&mut self) -> Result<&'a [u8], ContainerError> {
        let len = u64::from_le_bytes(self.take(8)?.try_into().unwrap());
        let len = usize::try_from(len).map_err(|_| ContainerError::Truncated)?;
        self.take(len)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// A hand-built surrogate small enough to reason about: a reservoir
    /// of dimension 3 sampled at 11 knots, two model components, and
    /// five readout samples scattered over the unit box.
    fn toy_surrogate() -> TrainedSurrogate {
        let n_r = 3;
        let times: Vec<f64> = (0..11).map(|k| k as f64).collect();
        let mut states = Vec::new();
        let mut derivs = Vec::new();
        for &t in &times {
            for k in 0..n_r {
                let freq = 0.1 * (k + 1) as f64;
                states.push((freq * t).sin());
                derivs.push(freq * (freq * t).cos());
            }
        }
        let sol = Solution::from_parts(n_r, times, states, derivs, SolveStatus::Success, 2, 97)
            .expect("toy layout is valid");
        let reservoir_solution =
            ReservoirSolution { sol, warp: TimeWarp::Identity, drive_span: (0.0, 10.0) };

        let params =
            [[0.2, 0.3], [0.8, 0.4], [0.5, 0.9], [0.1, 0.7], [0.6, 0.1]];
        let matrices = params
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let data: Vec<f64> =
                    (0..2 * n_r).map(|j| 0.1 * (i as f64 + 1.0) + 0.01 * j as f64).collect();
                ReadoutMatrix {
                    w: Mat::from_vec(2, n_r, data),
                    fit_residual: 1e-3 * (i + 1) as f64,
                    param: p.to_vec(),
                }
            })
            .collect();

        TrainedSurrogate::from_parts(
            reservoir_solution,
            matrices,
            BoxSpace::new(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap(),
            DriveNormalization { offset: vec![0.1, -0.2], scale: vec![2.0, 0.5] },
            (0.0, 10.0),
            SurrogateMetadata {
                model_name: "toy".to_string(),
                model_dim: 2,
                reservoir_dim: n_r,
                seed: 7,
                tool_version: "test".to_string(),
            },
        )
        .expect("toy surrogate assembles")
    }

    #[test]
    fn round_trip_is_bitwise() {
        let surrogate = toy_surrogate();
        let bytes = encode(&surrogate);
        let loaded = decode(&bytes).expect("decodes");
        assert_eq!(encode(&loaded), bytes);

        let p = [0.4, 0.6];
        let grid: Vec<f64> = (0..=20).map(|k| 0.5 * k as f64).collect();
        let before = surrogate.predict(&p, &grid).unwrap();
        let after = loaded.predict(&p, &grid).unwrap();
        assert_eq!(before.data().len(), after.data().len());
        for (a, b) in before.data().iter().zip(after.data()) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn corrupt_magic_is_a_magic_error() {
        let mut bytes = encode(&toy_surrogate());
        bytes[0] ^= 0xff;
        assert!(matches!(decode(&bytes), Err(ContainerError::BadMagic)));
    }

    #[test]
    fn bumped_version_is_a_version_error() {
        let mut bytes = encode(&toy_surrogate());
        let bumped = (FORMAT_VERSION + 1).to_le_bytes();
        bytes[8..12].copy_from_slice(&bumped);
        assert!(matches!(
            decode(&bytes),
            Err(ContainerError::UnsupportedVersion(v)) if v == FORMAT_VERSION + 1
        ));
    }

    #[test]
    fn truncation_is_a_truncation_error() {
        let bytes = encode(&toy_surrogate());
        let cut = &bytes[..bytes.len() - 10];
        assert!(matches!(decode(cut), Err(ContainerError::Truncated)));
    }

    #[test]
    fn empty_input_is_truncated() {
        assert!(matches!(decode(&[]), Err(ContainerError::Truncated)));
    }

    #[test]
    fn trailing_bytes_are_rejected() {
        let mut bytes = encode(&toy_surrogate());
        bytes.push(0);
        assert!(matches!(decode(&bytes), Err(ContainerError::Malformed(_))));
    }

    #[test]
    fn unknown_status_name_is_malformed() {
        let mut bytes = encode(&toy_surrogate());
        let needle = b"\"solve_status\":\"success\"";
        let at = bytes
            .windows(needle.len())
            .position(|w| w == needle)
            .expect("status field present");
        bytes[at + needle.len() - 3] = b'!';
        assert!(matches!(decode(&bytes), Err(ContainerError::Malformed(_))));
    }

    #[test]
    fn status_names_round_trip() {
        for status in [
            SolveStatus::Success,
            SolveStatus::StepBudgetExhausted,
            SolveStatus::DtUnderflow,
            SolveStatus::SingularStageMatrix,
        ] {
            assert_eq!(status_from_name(status_name(status)), Some(status));
        }
        assert_eq!(status_from_name("interrupted"), None);
    }
}
