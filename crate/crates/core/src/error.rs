use crate::expr::{DiffError, EvalError, ParseError};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Diff(#[from] DiffError),
    #[error(transparent)]
    Parse(#[from] ParseError),

    #[error("invalid measure: {0}")]
    Measure(String),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error("configuration error: {0}")]
    Config(String),

    #[error("ellipticity violated: a(x={x}, y={y}) = {a} is not positive (A1)")]
    Ellipticity { x: f64, y: f64, a: f64 },
    #[error(
        "invariant density not resolved on [{lo}, {hi}]: tail mass {tail_mass:.3e} exceeds {tol:.1e}; \
         enlarge the grid, e.g. frozen.hi={suggest} (A2)"
    )]
    GridTooSmall {
        lo: f64,
        hi: f64,
        tail_mass: f64,
        tol: f64,
        suggest: f64,
    },
    #[error(
        "the standard centering condition fails at x={x}: |∫ b π| = {residual:.3e} > {tol:.1e} (A3)"
    )]
    Centering { x: f64, residual: f64, tol: f64 },
    #[error("non-finite state at step {step} (blow-up; check A4 growth conditions)")]
    BlowUp { step: u64 },
    #[error("corrector is not periodic: mismatch {mismatch:.3e} between y=0 and y=1 (A5)")]
    Periodicity { mismatch: f64 },
    #[error("diffusion matrix is not positive semi-definite: value {value:.3e} (A6)")]
    NotPsd { value: f64 },
    #[error(
        "the two diffusion quadratures disagree at x={x}: {primary:.6e} vs {alt:.6e}; \
         refine or enlarge the frozen grid (A2)"
    )]
    DiffusionMismatch { x: f64, primary: f64, alt: f64 },
    #[error("potential is not 1-periodic: |Q(y+1) - Q(y)| = {mismatch:.3e} at y={at}")]
    NotPeriodic { at: f64, mismatch: f64 },
    #[error("exponent magnitude {exponent:.1} exceeds 700; rescale the potential or increase sigma")]
    Overflow { exponent: f64 },
    #[error("need at least {needed} usable points, got {got}")]
    InsufficientPoints { needed: usize, got: usize },
    #[error("i/o error: {0}")]
    Io(String),
}

impl Error {
    /// Assumption label (A1 to A6) the failure points to, if any.
    pub fn assumption(&self) -> Option<&'static str> {
        match self {
            Error::Ellipticity { .. } => Some("A1"),
            Error::GridTooSmall { .. } | Error::DiffusionMismatch { .. } => Some("A2"),
            Error::Centering { .. } => Some("A3"),
            Error::BlowUp { .. } => Some("A4"),
            Error::Periodicity { .. } => Some("A5"),
            Error::NotPsd { .. } => Some("A6"),
            _ => None,
        }
    }

    /// Errors caused by user input rather than by a numerical failure.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::Parse(_) | Error::Config(_) | Error::InsufficientPoints { .. }
        )
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
