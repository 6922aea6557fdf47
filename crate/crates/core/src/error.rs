use alloc::boxed::Box;
use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// `theta` is not inside `(0, radius)`.
    #[error("theta {theta} is outside the open interval (0, {radius})")]
    Domain { theta: f64, radius: f64 },

    #[error("series did not satisfy the ratio criterion within {terms} terms")]
    NonConvergence { terms: usize },

    /// A requested mean is not attained on `(0, radius)`.
    #[error("mean {alpha} is not attainable: {reason}")]
    Range { alpha: f64, reason: String },

    #[error("invalid power-series family: {0}")]
    InvalidFamily(String),

    #[error("sum {n} is unattainable with {boxes} boxes")]
    Infeasible { boxes: usize, n: usize },

    #[error("table with {cells} cells exceeds the cap of {cap}")]
    Resource { cells: usize, cap: usize },

    #[error("enumeration guard: {states} states exceeds the limit of {limit}")]
    Guard { states: usize, limit: usize },

    #[error("rejection sampler exhausted after {attempts} attempts")]
    Exhausted { attempts: u64 },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("internal consistency: {0}")]
    Internal(String),

    #[error("colour {colour}: {source}")]
    Colour {
        colour: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn in_colour(self, colour: usize) -> Self {
        Error::Colour {
            colour,
            source: Box::new(self),
        }
    }
}
