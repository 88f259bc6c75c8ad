use crate::C64;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("A + λI is singular at λ = {lambda}")]
    Singular { lambda: C64 },

    #[error("matrix function: {0}")]
    MatrixFunction(String),

    #[error(
        "degenerate domain: component {component} of ν+g is {height:e}, below h_min, at x = {x:.6}; the ellipticity floor α(g) collapses there"
    )]
    DegenerateDomain {
        x: f64,
        component: usize,
        height: f64,
    },

    #[error("point outside the domain: {0}")]
    OutsideDomain(String),

    #[error("ellipticity floor violated: least eigenvalue minus α(g) = {margin:e}")]
    Ellipticity { margin: f64 },

    #[error(
        "linear solve failed in {context}: residual {residual:e} after {iterations} iterations"
    )]
    Solver {
        context: String,
        residual: f64,
        iterations: usize,
    },

    #[error("initial profile is not admissible: W₁ margin {margin:e} (V_ν margin {vnu_margin:e})")]
    Inadmissible { margin: f64, vnu_margin: f64 },

    #[error("scenario parse error: {0}")]
    Parse(String),

    #[error("scenario schema error: {0}")]
    Schema(String),

    #[error("scenario validation failed: {0}")]
    Validation(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
