use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("the a1 equation has no real root (discriminant {discriminant:e})")]
    NoRealRoot { discriminant: f64 },

    #[error("a3 equation is degenerate for a1 = {a1}, a2 = {a2}: linear coefficient vanishes")]
    DegenerateA3 { a1: f64, a2: f64 },

    #[error("no admissible root: {0}")]
    NoAdmissibleRoot(String),

    #[error("{count} admissible roots, selection is ambiguous")]
    AmbiguousRoot { count: usize },

    #[error("Riccati integration blew up at t = {time}")]
    BlowUp { time: f64 },

    #[error("Riccati rest points disagree with the root system by {gap:e}")]
    StationarityMismatch { gap: f64 },

    #[error("state became non-finite at step {step}")]
    Diverged { step: usize },

    #[error("step too large at time step {step}: Courant number {courant}")]
    StepTooLarge { step: usize, courant: f64 },

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),
}
