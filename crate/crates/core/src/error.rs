use thiserror::Error;

/// Errors raised across the crate.
///
/// Group indices carried by variants are zero-based; `Display` renders them
/// one-based to match how groups are usually numbered in reports.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("group_sizes has {sizes} entries but rates has {rates}")]
    MismatchedLengths { sizes: usize, rates: usize },

    #[error("a group system needs at least one group")]
    EmptySystem,

    #[error("group_sizes[{}] must be at least 1", group + 1)]
    NonPositiveSize { group: usize },

    #[error("rates[{}] must be a positive finite number", group + 1)]
    NonPositiveRate { group: usize },

    #[error("k_total must be at least 1")]
    ZeroTasks,

    #[error("rank {k} is outside 1..={len}")]
    IndexOutOfRange { k: usize, len: usize },

    #[error("group {}: allocation {k_i} exceeds group size {n_i}", group + 1)]
    AllocationExceedsGroup {
        group: usize,
        k_i: usize,
        n_i: usize,
    },

    #[error("group {}: zero allocation leaves its order statistic undefined", group + 1)]
    ZeroAllocation { group: usize },

    #[error("allocation does not match the system: {0}")]
    InvalidAllocation(String),

    #[error("negative discriminant; k_total exceeds n1 + n2")]
    NegativeDiscriminant,

    #[error("k_pivot = {value} lies outside [0, {upper}]")]
    OutOfBracket { value: f64, upper: f64 },

    #[error("k_total = {k} is infeasible for {n} workers")]
    InfeasibleK { k: usize, n: usize },

    #[error("bisection did not converge within {iterations} iterations (residual {residual})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("cannot reach sum {k} within the per-group caps")]
    InfeasibleAfterClamp { k: usize },

    #[error("invalid code dimensions n = {n}, k = {k}")]
    InvalidDims { n: usize, k: usize },

    #[error("{rows} rows cannot be split into {k} equal blocks")]
    IndivisibleRows { rows: usize, k: usize },

    #[error("need {needed} results with distinct rows, got {got}")]
    InsufficientResults { needed: usize, got: usize },

    #[error("received submatrix is singular")]
    SingularSubmatrix,

    #[error("group {} delivered {got} results, needs {needed}", group + 1)]
    GroupShortfall {
        group: usize,
        got: usize,
        needed: usize,
    },

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("product grid cannot be decoded even with every cell present")]
    NotDecodableEvenComplete,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
