use thiserror::Error;

pub type Result<T> = std::result::Result<T, NlaError>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NlaError {
    #[error("mode `{0}` is already present in the register")]
    ModeCollision(String),

    #[error("mode `{0}` is not in the register")]
    UnknownMode(String),

    #[error("mode registers differ: {left:?} vs {right:?}")]
    RegisterMismatch { left: Vec<String>, right: Vec<String> },

    #[error("basis state with {photons} photons exceeds the cutoff {cutoff}")]
    CutoffExceeded { photons: u32, cutoff: u32 },

    #[error("matrix is not unitary (max deviation {deviation:.3e})")]
    NotUnitary { deviation: f64 },

    #[error("{name} = {value} is outside {range}")]
    OutOfRange {
        name: &'static str,
        value: f64,
        range: &'static str,
    },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("heralding never succeeds (probability {probability:.3e})")]
    NeverHeralds { probability: f64 },

    #[error("state is not a single-rail photon/vacuum mixture on `{mode}`: {reason}")]
    NotSingleRail { mode: String, reason: String },

    #[error("invalid circuit: {0}")]
    InvalidCircuit(String),

    #[error("invalid ensemble: {0}")]
    InvalidEnsemble(String),

    #[error("unsupported: {0}")]
    Unsupported(String),
}

impl NlaError {
    /// True for failures caused by numeric degeneracy of the inputs rather than
    /// by a malformed request.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            NlaError::Degenerate(_) | NlaError::NeverHeralds { .. } | NlaError::NotSingleRail { .. }
        )
    }
}

pub(crate) fn check_unit_interval(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() && (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(NlaError::OutOfRange {
            name,
            value,
            range: "[0, 1]",
        })
    }
}

pub(crate) fn check_open_unit_interval(name: &'static str, value: f64) -> Result<()> {
    if value.is_finite() && value > 0.0 && value < 1.0 {
        Ok(())
    } else {
        Err(NlaError::OutOfRange {
            name,
            value,
            range: "(0, 1)",
        })
    }
}
