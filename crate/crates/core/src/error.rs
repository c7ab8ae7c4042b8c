use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("spectral coefficients are not conjugate symmetric (imaginary residue {residue:e})")]
    SymmetryViolation { residue: f64 },
    #[error("invalid exponent {name} = {value}: {expected}")]
    InvalidExponent {
        name: &'static str,
        value: f64,
        expected: &'static str,
    },
    #[error("ensemble is empty")]
    EmptyEnsemble,
    #[error("{name} = {value} is out of range: {expected}")]
    OutOfRange {
        name: &'static str,
        value: f64,
        expected: &'static str,
    },
    #[error("insufficient resolution: {0}")]
    ResolutionError(String),
    #[error("time order violated: s = {s} must be < t = {t}")]
    OrderViolation { s: f64, t: f64 },
    #[error("positivity violated: {0}")]
    PositivityViolation(String),
    #[error("derivative order {0} is not supported (max 3)")]
    UnsupportedOrder(u32),
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error("explicit step restriction violated: bound {bound:.4e} exceeds limit {limit:.4e}")]
    StabilityError { bound: f64, limit: f64 },
    #[error("unsupported data: {0}")]
    UnsupportedSpec(String),
    #[error("regression matrix ill-conditioned (condition {cond:.3e} > {limit:.1e}); raise paths or lower the basis degree")]
    IllConditioned { cond: f64, limit: f64 },
    #[error("solution blew up: sup norm {sup:.3e} exceeds guard {guard:.3e}")]
    BlowUp { sup: f64, guard: f64 },
    #[error("budget exceeded: {count} candidates > limit {limit}")]
    BudgetExceeded { count: u64, limit: u64 },
    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },
    #[error("unknown {kind} `{name}`; available: {available}")]
    UnknownStrategy {
        kind: &'static str,
        name: String,
        available: String,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn config(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            path: path.into(),
            message: message.into(),
        }
    }
}
