//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-conforming mesh: {0}")]
    NonConforming(String),

    #[error("cell {cell} has zero area")]
    DegenerateCell { cell: usize },

    #[error("cell {cell} is not counterclockwise (signed area {area})")]
    NonCcwCell { cell: usize, area: f64 },

    #[error("unknown cell id {cell}")]
    UnknownCell { cell: usize },

    #[error("Poisson ratio {nu} outside [0, 0.5)")]
    PoissonRatioOutOfRange { nu: f64 },

    #[error("singular edge-value system on cell {cell}")]
    SingularCellSystem { cell: usize },

    #[error("normal-normal trace mismatch across edge {edge}: |delta| = {delta:.3e}")]
    SymCurlMismatch { edge: usize, delta: f64 },

    #[error("singular local Gram matrix at vertex {vertex} (level {level})")]
    SingularPatchGram { vertex: usize, level: u32 },

    #[error("conjugate gradient stalled: relative residual {residual:.3e} after {iterations} iterations")]
    CgStagnation { iterations: usize, residual: f64 },

    #[error("multigrid did not reach tolerance {tol:.3e} in {max_iter} iterations (residual {residual:.3e})")]
    MaxIterExceeded {
        max_iter: usize,
        tol: f64,
        residual: f64,
    },

    #[error("certification failed: {0}")]
    CertificationFailed(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("mesh file parse error: {0}")]
    MeshParse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Exit code for the CLI: 2 for usage/configuration problems, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::MeshParse(_) => 2,
            _ => 1,
        }
    }
}
