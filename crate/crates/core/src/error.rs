use thiserror::Error;

pub type Result<T> = std::result::Result<T, IlseError>;

#[derive(Debug, Error)]
pub enum IlseError {
    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("weights must be strictly positive and finite, got {0:?}")]
    InvalidWeight([f64; 3]),

    #[error("problem is not well posed: {0}")]
    NotWellPosed(String),

    #[error("{what} is numerically rank deficient (sigma_min = {sigma_min:e}, sigma_max = {sigma_max:e})")]
    RankDeficient {
        what: &'static str,
        sigma_min: f64,
        sigma_max: f64,
    },

    #[error("alpha vanishes, tau0 is infinite")]
    InfiniteTau0,

    #[error("the problem has no equality constraints (s = 0)")]
    NoConstraints,

    #[error("every evaluation of rho failed during minimization")]
    MinimizationFailed,

    #[error("every trial of the experiment failed")]
    AllTrialsFailed,

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl IlseError {
    /// True for failures caused by the numbers rather than by malformed input.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            IlseError::NotWellPosed(_)
                | IlseError::RankDeficient { .. }
                | IlseError::InfiniteTau0
                | IlseError::MinimizationFailed
                | IlseError::AllTrialsFailed
        )
    }
}

pub(crate) fn check_len(what: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(IlseError::DimensionMismatch {
            what,
            expected,
            found,
        })
    }
}
