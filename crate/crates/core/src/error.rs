use thiserror::Error;

/// Errors produced by model construction, evaluation, and search.
#[derive(Debug, Error)]
pub enum Error {
    /// Config text could not be parsed. Carries the 1-based line number.
    #[error("config line {line}: {message}")]
    MalformedConfig { line: usize, message: String },

    /// A parameter failed its range check.
    #[error("invalid parameter `{field}`: {message}")]
    Validation { field: &'static str, message: String },

    /// The water height profile violates a hard bound at some grid node.
    #[error("infeasible profile at node {node} (x = {x} m): {reason}")]
    InfeasibleProfile { node: usize, x: f64, reason: String },

    /// Net specific growth never crosses zero on the searched intensity range,
    /// so no compensation intensity exists.
    #[error("no compensation intensity on (0, {upper}]")]
    NoCompensation { upper: f64 },

    /// The areal biomass closure returned a non-positive standing crop.
    #[error("pond too deep: areal biomass {value} gC/m^2 at a0 = {a0} m")]
    PondTooDeep { a0: f64, value: f64 },

    /// Exhaustive enumeration of Nz! permutations was refused.
    #[error("{nz}! permutations exceed the exhaustive-search guard (Nz <= {limit}); enable the large-search override to proceed")]
    PermutationTooLarge { nz: usize, limit: usize },

    #[error("invalid permutation: {0}")]
    InvalidPermutation(String),

    /// An argument left the physical domain of a rate or closure function.
    #[error("domain error: {0}")]
    Domain(String),

    /// A Heun step multiplier left (0, 1), so the lap map is not a contraction.
    #[error("Heun step multiplier outside (0, 1) at layer {layer}, step {step}; refine dx")]
    UnstableStep { layer: usize, step: usize },

    #[error("optimizer failure: {0}")]
    Optimizer(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
