use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Not enough observations (or assets) to compute the requested quantity.
    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("shape mismatch: expected {expected}, got {got} ({context})")]
    Shape {
        expected: usize,
        got: usize,
        context: &'static str,
    },

    /// An argument lies outside the mathematical domain of the operation.
    #[error("domain error: {0}")]
    Domain(String),

    #[error("covariance matrix is not symmetric at ({row}, {col}): {a} vs {b}")]
    Asymmetric {
        row: usize,
        col: usize,
        a: f64,
        b: f64,
    },

    #[error("matrix is not positive semi-definite: smallest eigenvalue {min_eigenvalue:e}")]
    NotPositiveSemiDefinite { min_eigenvalue: f64 },

    #[error("E[X]/E[X^2] is 0/0 for mu = 0, sigma = 0")]
    DegenerateMoment,

    #[error("stats file {path}: {message}")]
    Load { path: String, message: String },

    #[error("return series parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("initialization failed: {0}")]
    Initialization(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    /// The solver never produced a feasible individual. Carries the best
    /// violation record seen.
    #[error(
        "no feasible solution found: best equality gap {equality_gap:.6}, \
         total bound violation {bound_violation:.6}"
    )]
    Infeasible {
        equality_gap: f64,
        bound_violation: f64,
        genome: Vec<f64>,
    },

    #[error("i/o error: {0}")]
    Io(String),

    #[error("return-to-risk ratio undefined: sample variance is zero")]
    RatioUndefined,
}
