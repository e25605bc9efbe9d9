use thiserror::Error;

/// Errors raised by the model, integrator and solver layers.
#[derive(Debug, Clone, Error, PartialEq)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {got}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("manifold requested on controlled transition {transition}")]
    NotAutonomous { transition: String },

    #[error("nonzero multiplier {value} supplied for controlled transition {transition}")]
    MultiplierOnControlled { transition: String, value: f64 },

    #[error("switching manifold {manifold} never crossed before t = {t_end} (final value {final_value:.6e})")]
    NoCrossing {
        manifold: String,
        t_end: f64,
        final_value: f64,
    },

    #[error("infeasible schedule: {0}")]
    InfeasibleSchedule(String),

    #[error("transversality fails on {manifold}: manifold rate {rate:.3e} at the crossing")]
    Transversality { manifold: String, rate: f64 },

    #[error("time {t} outside [{start}, {end}]")]
    OutOfRange { t: f64, start: f64, end: f64 },

    #[error("invalid input: {0}")]
    InvalidInput(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
