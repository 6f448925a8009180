use thiserror::Error;

/// Errors raised by the solver stack.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("grid mismatch: operands live on different grids")]
    GridMismatch,
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid exponent q = {0} (need q >= 1)")]
    InvalidExponent(f64),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("cannot normalize the zero field")]
    ZeroField,
    #[error("field is off the constraint sphere (relative mass defect {defect:.3e})")]
    OffSphere { defect: f64 },
    #[error("direction is not tangent (relative overlap {overlap:.3e})")]
    NotTangent { overlap: f64 },
    #[error("geometry not certified: c = {c} exceeds cstar = {cstar}")]
    GeometryNotCertified { c: f64, cstar: f64 },
    #[error("certificate violation: {inequality} (margin {margin:.6e})")]
    CertificateViolation { inequality: String, margin: f64 },
    #[error("path geometry violated: endpoint energy {endpoint:.6e} exceeds interior max {interior:.6e}")]
    PathGeometry { endpoint: f64, interior: f64 },
    #[error("Jacobian singular or ill-conditioned (condition estimate {condition:.3e})")]
    SingularJacobian { condition: f64 },
    #[error("no convergence after {iterations} iterations (residual {residual:.3e})")]
    Divergence { iterations: usize, residual: f64 },
    #[error("non-positive mass encountered during line search")]
    NegativeMass,
    #[error("eigensolver did not converge (worst residual {residual:.3e})")]
    EigenNotConverged { residual: f64 },
    #[error("soliton shooting failed to bracket U(0) in [{lo}, {hi}]")]
    SolitonBracket { lo: f64, hi: f64 },
    #[error("invariant violated: {0}")]
    InvariantViolated(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
