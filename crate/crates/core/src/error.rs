use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("model: {0}")]
    Model(String),

    #[error("model file {path}: {source}")]
    ModelFile {
        path: String,
        #[source]
        source: serde_json::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error("reaction index {index} out of range for network with {count} reactions")]
    ReactionIndex { index: usize, count: usize },

    #[error("state dimension {got} does not match network dimension {want}")]
    Dimension { got: usize, want: usize },

    #[error("negative count {value} for species index {species}")]
    NegativeState { species: usize, value: i64 },

    #[error("jump cap of {cap} events exceeded before reaching the time horizon")]
    JumpCapExceeded { cap: u64 },

    #[error("total propensity is zero; no holding time to sample")]
    ZeroTotalPropensity,

    #[error("perturbation step must be nonzero and keep all rates nonnegative (h = {h})")]
    BadPerturbation { h: f64 },

    #[error("likelihood-ratio estimator inapplicable: {0}")]
    GirsanovInapplicable(String),

    #[error(
        "moment equations unavailable: reaction {reaction} has total reactant order {order} > 1"
    )]
    NonAffine { reaction: usize, order: u32 },

    #[error("state-space truncation too tight: escaped probability mass {escaped:.3e} exceeds {limit:.1e}")]
    Truncation { escaped: f64, limit: f64 },

    #[error("truncated state space has {states} states, above the cap of {cap}")]
    StateSpace { states: usize, cap: usize },

    #[error("no closed-form solution for this network: {0}")]
    NoClosedForm(String),
}
