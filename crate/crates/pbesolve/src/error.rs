//! Crate-wide error type.

use thiserror::Error;

/// Errors produced by model evaluation, geometry, meshing, assembly and
/// solves. Input/configuration problems and numerical failures are kept as
/// separate variants so the command line can map them to distinct exit codes.
#[derive(Debug, Error)]
pub enum Error {
    /// Exponent guard `|xi * t| <= 700` violated for one ion species.
    #[error("overflow guard: species {species} (valence {valence}) at t = {t} gives exponent {exponent:.3e} beyond 700")]
    OverflowGuard {
        species: usize,
        valence: i32,
        t: f64,
        exponent: f64,
    },

    /// Evaluation of the Coulomb potential too close to a point charge.
    #[error("singular evaluation: point ({x:.6e}, {y:.6e}, {z:.6e}) within guard distance {guard:.3e} of charge {charge}")]
    Singularity {
        x: f64,
        y: f64,
        z: f64,
        charge: usize,
        guard: f64,
    },

    /// Operation requested for a mode/dimension combination that is not supported.
    #[error("unsupported mode: {0}")]
    UnsupportedMode(String),

    /// Invalid value or inconsistent parameters.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Text parse failure with 1-based line number.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// Input stream contained no usable records.
    #[error("empty input: {0}")]
    EmptyInput(String),

    /// Voxel grid too coarse for the requested morphological operation.
    #[error("grid resolution: {0}")]
    Resolution(String),

    /// Mesh generation or refinement produced an invalid element.
    #[error("mesh error: {0}")]
    Mesh(String),

    /// Sparse index out of range.
    #[error("index {index} out of range for dimension {n}")]
    IndexOutOfRange { index: usize, n: usize },

    /// Non-finite arithmetic inside an iterative solver.
    #[error("solver breakdown: {0}")]
    Breakdown(String),

    /// Iteration limit reached without satisfying the tolerance.
    #[error("no convergence after {iterations} iterations (residual {residual:.6e}, tol {tol:.6e})")]
    Nonconvergence {
        iterations: usize,
        residual: f64,
        tol: f64,
    },

    /// Point located outside the mesh for interpolation.
    #[error("point ({x:.6e}, {y:.6e}) outside the mesh")]
    OutsideMesh { x: f64, y: f64 },

    /// Level-set exponent beta <= 1: the extinction argument does not apply.
    #[error("infeasible exponents: beta = {beta:.6} <= 1 for s = {s}, r = {r}, q = {q}")]
    InfeasibleExponent { beta: f64, s: f64, r: f64, q: f64 },

    /// I/O failure, annotated with the path involved.
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Exit code the CLI maps this error to: 1 for input problems, 2 for
    /// numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::UnsupportedMode(_)
            | Error::InvalidInput(_)
            | Error::Parse { .. }
            | Error::EmptyInput(_)
            | Error::Resolution(_)
            | Error::IndexOutOfRange { .. }
            | Error::InfeasibleExponent { .. }
            | Error::Io { .. } => 1,
            Error::OverflowGuard { .. }
            | Error::Singularity { .. }
            | Error::Mesh(_)
            | Error::Breakdown(_)
            | Error::Nonconvergence { .. }
            | Error::OutsideMesh { .. } => 2,
        }
    }
}
