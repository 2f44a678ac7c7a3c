use thiserror::Error;

/// Errors surfaced by runners, checkers, and file I/O.
#[derive(Debug, Error)]
pub enum SchedError {
    /// A schedule placed more units in a slot than the machine count allows.
    #[error("infeasible allocation: slot {slot} holds {used} units but capacity is {capacity}")]
    Infeasible { slot: u32, used: u32, capacity: u32 },

    /// A mechanism emitted a unit outside `[arrival, horizon]` or a duplicate unit.
    #[error("bad assignment for job {job}: {reason}")]
    BadAssignment { job: u32, reason: String },

    /// A state token was offered to a mechanism of a different kind.
    #[error("state token kind mismatch: expected `{expected}`, got `{got}`")]
    KindMismatch { expected: String, got: String },

    /// A state token did not decode into the mechanism's state shape.
    #[error("malformed state token: {0}")]
    BadState(String),

    /// A learner was fed a reward outside its declared range.
    #[error("reward {reward} outside declared range [0, {bound}]")]
    RewardRange { reward: f64, bound: f64 },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("bad descriptor `{0}`: {1}")]
    Descriptor(String, String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
