use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("unsupported exponent e = {0}: the logarithmic case e = 1 is outside the grammar")]
    UnsupportedExponent(f64),

    #[error("inadmissible nonlinearity g: {0}")]
    InadmissibleG(String),

    #[error("inadmissible oscillating potential psi: {0}")]
    InadmissiblePsi(String),

    #[error("inadmissible forcing p: {0}")]
    InadmissibleForcing(String),

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("degenerate state: {0}")]
    DegenerateState(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("quadrature did not converge ({context}) at h = {h}")]
    PrecisionFailure { context: String, h: f64 },

    #[error("energy level h = {h} is below the contraction floor h_min = {h_min}")]
    HTooSmall { h: f64, h_min: f64 },

    #[error("solver failure: {0}")]
    SolverFailure(String),

    #[error("step size underflow at t = {t} (step {step:e})")]
    StiffnessFailure { t: f64, step: f64 },

    #[error("degenerate fit: {0}")]
    FitDegenerate(String),

    #[error("amplitude {0} exceeds the node budget")]
    AmplitudeTooLarge(f64),

    #[error("not applicable: {0}")]
    NotApplicable(String),
}

impl Error {
    /// Numeric failures as opposed to malformed input.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::PrecisionFailure { .. }
                | Error::SolverFailure(_)
                | Error::StiffnessFailure { .. }
                | Error::HTooSmall { .. }
                | Error::FitDegenerate(_)
                | Error::AmplitudeTooLarge(_)
                | Error::NotApplicable(_)
        )
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Error::UnsupportedExponent(_) => "unsupported-exponent",
            Error::InadmissibleG(_) => "inadmissible-g",
            Error::InadmissiblePsi(_) => "inadmissible-psi",
            Error::InadmissibleForcing(_) => "inadmissible-p",
            Error::Unsupported(_) => "unsupported",
            Error::DegenerateState(_) => "degenerate-state",
            Error::InvalidInput(_) => "invalid-input",
            Error::PrecisionFailure { .. } => "precision-failure",
            Error::HTooSmall { .. } => "h-too-small",
            Error::SolverFailure(_) => "solver-failure",
            Error::StiffnessFailure { .. } => "stiffness-failure",
            Error::FitDegenerate(_) => "fit-degenerate",
            Error::AmplitudeTooLarge(_) => "amplitude-too-large",
            Error::NotApplicable(_) => "not-applicable",
        }
    }
}
