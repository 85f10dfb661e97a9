use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("frame {frame} is outside the explicit state sequence (length {len})")]
    FrameOutOfRange { frame: u64, len: usize },

    #[error("spike sequence is empty")]
    EmptySequence,

    #[error("null receive probability {psi0} is degenerate; it must lie strictly inside (0, 1)")]
    DegenerateNull { psi0: f64 },

    #[error("likelihood ratio is undefined: zero-probability outcome observed")]
    DegenerateLikelihood,

    #[error("cannot merge an empty list of e-values")]
    EmptyMerge,

    #[error("no candidate node left to schedule")]
    NoCandidates,
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter { name, reason: reason.into() }
    }
}

pub(crate) fn check_probability(name: &'static str, p: f64) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::invalid(name, format!("{p} is not a probability in [0, 1]")))
    }
}
