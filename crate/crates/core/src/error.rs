use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("collision: |x| = {r:e} below floor {floor:e} at t = {t}")]
    Collision { r: f64, floor: f64, t: f64 },

    #[error("step size underflow at t = {t} (h = {h:e})")]
    StepUnderflow { t: f64, h: f64 },

    #[error("step budget of {0} exhausted")]
    TooManySteps(usize),

    #[error("found {found} pericenter crossings, {requested} requested")]
    InsufficientCrossings { found: usize, requested: usize },

    #[error("winding {value} is {distance} away from the nearest integer")]
    AmbiguousWinding { value: f64, distance: f64 },

    #[error("degenerate orbit: {0}")]
    Degenerate(String),

    #[error("(H, L) = ({h}, {l}) is not admissible")]
    NotAdmissible { h: f64, l: f64 },

    #[error("quadrature did not converge (last relative change {rel_change:e})")]
    QuadratureNotConverged { rel_change: f64 },

    #[error("out of range: {0}")]
    OutOfRange(String),

    #[error("no admissible angular momentum solves the energy constraint: {0}")]
    EnergyBranch(String),

    #[error("verification failed: {0}")]
    VerificationFailed(String),
}

pub(crate) fn ensure_positive(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter { name, reason: format!("must be positive and finite, got {value}") })
    }
}
