//! Game specification, tree enumeration, strategies and exact evaluation.

mod eval;
mod spec;
mod strategy;
mod tree;

pub use eval::{
    continuation_values, expected_utility, payoff, payoff_with, realisation_prob, subgame_expected_utility,
    subgame_realisation_prob, ContinuationValues, MissingPrice,
};
pub use spec::{GameSpec, Partition};
pub use strategy::BehaviourStrategy;
pub use tree::{DecisionNode, Edge, GameTree, NodeId, NodeKey, Outcome, TreeLimits};
