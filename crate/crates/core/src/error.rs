use crate::simnet::{ChannelKind, PartyId};

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("malformed encoding: {0}")]
    Malformed(String),

    #[error("universe mismatch: {0} vs {1} parties")]
    UniverseMismatch(usize, usize),

    #[error("infeasible adversary: {0}")]
    Infeasible(String),

    #[error("corruption assignment outside the declared adversary structure: {0}")]
    IllegalCorruption(String),

    #[error("no {channel:?} edge from {sender} to {receiver}")]
    Topology {
        sender: PartyId,
        receiver: PartyId,
        channel: ChannelKind,
    },

    #[error("unknown party {0}")]
    UnknownParty(PartyId),

    #[error("protocol did not halt within {0} rounds")]
    MaxRoundsExceeded(u64),

    #[error("reconstruction of share {share} is ambiguous or empty")]
    Reconstruction { share: usize },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
