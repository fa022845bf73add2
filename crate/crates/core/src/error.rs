use thiserror::Error;

/// Errors raised by model construction and the inference operations.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum PsdError {
    #[error("dimension mismatch: expected {expected}, got {got} ({context})")]
    DimensionMismatch {
        expected: usize,
        got: usize,
        context: &'static str,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("coefficient matrix is not positive semidefinite (min eigenvalue {min_eigenvalue:.3e}, tolerance {tolerance:.3e})")]
    NotPsd { min_eigenvalue: f64, tolerance: f64 },

    #[error("model has (numerically) zero mass: {mass:.3e}")]
    ZeroMass { mass: f64 },

    #[error("conditional density is (numerically) zero at the conditioning point: {mass:.3e}")]
    ZeroConditional { mass: f64 },

    #[error("observation has (numerically) zero evidence: c_t = {evidence:.3e}")]
    ZeroEvidence { evidence: f64 },

    #[error("unknown variable block `{0}`")]
    UnknownBlock(String),

    #[error("block `{name}` has width {left} on one side and {right} on the other")]
    BlockWidthMismatch {
        name: String,
        left: usize,
        right: usize,
    },

    #[error("base points do not repeat in groups of {group}")]
    PatternMismatch { group: usize },

    #[error("gram matrix is singular (condition estimate {condition:.3e})")]
    SingularGram { condition: f64 },

    #[error("size cap exceeded: {what} = {value} > {cap}")]
    CapExceeded {
        what: &'static str,
        value: usize,
        cap: usize,
    },

    #[error("gradient descent diverged: |theta| = {magnitude:.3e} after {step} steps")]
    StepTooLarge { magnitude: f64, step: usize },

    #[error("non-finite integrand value at {0:?}")]
    NonFinite(Vec<f64>),

    #[error("rejection sampler acceptance rate {rate:.3e} below 1e-6")]
    EnvelopeFailure { rate: f64 },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("i/o error: {0}")]
    Io(String),

    #[error("filter step {step}: {source}")]
    AtStep {
        step: usize,
        #[source]
        source: Box<PsdError>,
    },
}

impl PsdError {
    /// Short machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            PsdError::DimensionMismatch { .. } => "DimensionMismatch",
            PsdError::InvalidArgument(_) => "InvalidArgument",
            PsdError::NotPsd { .. } => "NotPsd",
            PsdError::ZeroMass { .. } => "ZeroMass",
            PsdError::ZeroConditional { .. } => "ZeroConditional",
            PsdError::ZeroEvidence { .. } => "ZeroEvidence",
            PsdError::UnknownBlock(_) => "UnknownBlock",
            PsdError::BlockWidthMismatch { .. } => "BlockWidthMismatch",
            PsdError::PatternMismatch { .. } => "PatternMismatch",
            PsdError::SingularGram { .. } => "SingularGram",
            PsdError::CapExceeded { .. } => "CapExceeded",
            PsdError::StepTooLarge { .. } => "StepTooLarge",
            PsdError::NonFinite(_) => "NonFinite",
            PsdError::EnvelopeFailure { .. } => "EnvelopeFailure",
            PsdError::Parse(_) => "Parse",
            PsdError::Io(_) => "Io",
            PsdError::AtStep { source, .. } => source.kind(),
        }
    }

    /// Whether the error signals a numerical failure (as opposed to bad input shape).
    pub fn is_numerical(&self) -> bool {
        match self {
            PsdError::NotPsd { .. }
            | PsdError::ZeroMass { .. }
            | PsdError::ZeroConditional { .. }
            | PsdError::ZeroEvidence { .. }
            | PsdError::SingularGram { .. }
            | PsdError::StepTooLarge { .. }
            | PsdError::NonFinite(_)
            | PsdError::EnvelopeFailure { .. } => true,
            PsdError::AtStep { source, .. } => source.is_numerical(),
            _ => false,
        }
    }
}

impl From<std::io::Error> for PsdError {
    fn from(e: std::io::Error) -> Self {
        PsdError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, PsdError>;

pub(crate) fn check_dim(expected: usize, got: usize, context: &'static str) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(PsdError::DimensionMismatch {
            expected,
            got,
            context,
        })
    }
}
