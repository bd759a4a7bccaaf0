use alloc::string::String;
use alloc::vec::Vec;

/// Invalid game description.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SpecError {
    #[error("horizon must be at least one trading round")]
    ZeroHorizon,
    #[error("the game needs at least one fundamental state")]
    NoStates,
    #[error("{what}: expected {expected} entries, found {found}")]
    LengthMismatch { what: &'static str, expected: usize, found: usize },
    #[error("{what} must be strictly positive (entry {index})")]
    NotPositive { what: &'static str, index: usize },
    #[error("{what} must sum to exactly one, got {sum}")]
    NotNormalized { what: &'static str, sum: String },
    #[error("true values must be nonincreasing, v[{index}] < v[{next}]", next = index + 1)]
    ValuesNotSorted { index: usize },
    #[error("{what} contains the value {value} twice")]
    Duplicate { what: &'static str, value: String },
    #[error("{what} must not be empty")]
    Empty { what: &'static str },
    #[error("partition of period {period} is not a partition of the state set: {reason}")]
    NotAPartition { period: usize, reason: String },
    #[error(
        "partition of period {period} does not refine period {prev}: cell {cell:?} overlaps {coarse:?} without being contained in it",
        prev = period - 1
    )]
    NotRefining { period: usize, cell: Vec<usize>, coarse: Vec<usize> },
    #[error("game tree has {outcomes} outcomes, more than the cap of {cap}")]
    TooLarge { outcomes: u128, cap: u128 },
}

/// Failure while evaluating probabilities, payoffs or prices on a tree.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EvalError {
    #[error("outcome {0} is not a terminal node of this tree")]
    UnknownOutcome(usize),
    #[error("outcome {outcome} does not lie after the start node")]
    NotAfter { outcome: usize },
    #[error("node key is not a valid subgame start (root, revelation or decision node)")]
    BadStart,
    #[error("no price for the order flow {flow:?} in period {period}")]
    MissingPrice { period: usize, flow: Vec<usize> },
    #[error("strategy does not match the tree: {0}")]
    StrategyShape(String),
    #[error("order flow {flow:?} is reached with probability zero")]
    UnreachedFlow { flow: Vec<usize> },
    #[error("strategy is not completely mixed at decision node {node}")]
    NotCompletelyMixed { node: usize },
    #[error("price {price} in period {period} lies outside [{low}, {high}]")]
    PriceOutOfRange { period: usize, price: String, low: String, high: String },
    #[error("invalid flow history: {0}")]
    BadFlow(String),
}
