//! Exact simulation and unbiased parameter-sensitivity estimation for
//! continuous-time Markov reaction networks.

pub mod apa;
pub mod builtin;
mod error;
pub mod fdiff;
pub mod girsanov;
pub mod model;
pub mod oracle;
pub mod sim;
pub mod stats;

pub use error::{Error, Result};
pub use model::{Observable, ParameterSet, Reaction, ReactionNetwork, State};
pub use sim::{simulate, RngStream, SimOptions, Trajectory};
pub use stats::{EstimateReport, RunConfig};
