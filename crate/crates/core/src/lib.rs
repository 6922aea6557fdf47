//! Power-series distributions, exact conditional sampling given a fixed sum,
//! and the multi-colour generalized allocation scheme built from them.
//!
//! The crate is `no_std` and needs only `alloc`.

#![no_std]

extern crate alloc;
#[cfg(any(test, feature = "std"))]
extern crate std;

pub mod error;
pub mod math;
pub mod power_series;
pub mod sampler;
pub mod scheme;
pub mod sum_distribution;
pub mod theory;

pub use error::{Error, Result};
pub use power_series::{Builtin, PowerSeriesDist, PowerSeriesFamily, ThetaValue};
pub use sampler::{ConditionalRow, RejectionOutcome, RowSampler, SamplerStrategy};
pub use scheme::{AllocationMatrix, ColourSpec, OccupancyTarget, SchemeConfig, SchemeSampler};
pub use sum_distribution::{EndRows, SumTable};
pub use theory::{TailBound, TheoryContext};
