use thiserror::Error;

/// Errors raised anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid particle cloud: {0}")]
    InvalidCloud(String),

    #[error("invalid perturbation: non-finite coordinate at particle {index}")]
    InvalidPerturbation { index: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("unknown model `{0}`")]
    UnknownModel(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: String, reason: String },

    #[error("model `{model}` failed the coefficient audit: {reason}")]
    ModelValidation { model: String, reason: String },

    #[error("invalid times: {0}")]
    InvalidTimes(String),

    #[error("interval [{r}, {t}] is outside the measure flow range [{start}, {end}]")]
    FlowRange { r: f64, t: f64, start: f64, end: f64 },

    #[error("covariance matrix is not positive definite")]
    SingularCovariance,

    #[error("quadrature box too small: tail mass {tail_mass:.3e} exceeds {limit:.1e}")]
    Coverage { tail_mass: f64, limit: f64 },

    #[error("state diverged at step {step} (t = {time})")]
    Divergence { step: usize, time: f64 },

    #[error("variation run is not paired with its base run: {0}")]
    PairingMismatch(String),

    #[error("diffusion is ill-conditioned: eigenvalues of sigma sigma^T in [{min_eig:.3e}, {max_eig:.3e}]")]
    Conditioning { min_eig: f64, max_eig: f64 },

    #[error("problem size {n} exceeds limit {limit}")]
    SizeLimit { n: usize, limit: usize },

    #[error("quadrature check failed: {0}")]
    Quadrature(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("config error{}: field `{field}`: {message}", line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    Config {
        line: Option<usize>,
        field: String,
        message: String,
    },

    #[error("config value out of range: `{field}` violates `{invariant}`")]
    ConfigRange { field: String, invariant: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
