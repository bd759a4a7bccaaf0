//! Discrete Kyle insider-trading games as extensive-form game trees.
//!
//! The crate is split along the life cycle of a game:
//!
//! * [`game`] builds the tree for a [`GameSpec`], enumerates decision nodes and
//!   outcomes, and evaluates realisation probabilities, payoffs and expected
//!   utilities.
//! * [`pricing`] turns an insider strategy into order-flow probabilities,
//!   Bayes-rational prices and belief systems.
//! * [`solver`] computes sequential equilibria through the ε-perturbed
//!   best-reply homotopy and enumerates supports of single-period games.
//! * [`verifier`] checks equilibrium conditions and the single-period
//!   structure results on concrete instances.
//! * [`continuous`] discretizes single-period games with continuous value and
//!   noise distributions on dyadic grids and reports convergence diagnostics.
//!
//! Probabilities, values and prices are generic over [`Scalar`], which is
//! implemented for exact [`Rational`] arithmetic and for `f64`. Everything
//! outside the iterative solver is exact when instantiated with rationals.
//!
//! The crate is `no_std` and only needs `alloc`.
#![no_std]

extern crate alloc;
#[cfg(any(feature = "std", test))]
extern crate std;

pub mod builtin;
pub mod continuous;
mod error;
pub mod game;
pub mod pricing;
mod scalar;
pub mod solver;
pub mod verifier;

pub use error::{EvalError, SpecError};
pub use game::{BehaviourStrategy, GameSpec, GameTree, NodeId, NodeKey, Outcome, Partition, TreeLimits};
pub use pricing::{BeliefSystem, FlowHistory, PricingSystem};
pub use scalar::{rat, Rational, Scalar};
