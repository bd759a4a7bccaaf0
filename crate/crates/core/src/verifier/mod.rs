//! Equilibrium verification and single-period structure checks.
//!
//! [`verify_kyle`] checks optimality on reached decision nodes and rational
//! pricing on reached flows. [`verify_sequential`] adds optimality at every
//! decision node against the belief-induced prices and checks that the
//! certificate's ε-trace witnesses consistency of the beliefs.

mod structure;

use alloc::vec;
use alloc::vec::Vec;

use crate::error::EvalError;
use crate::game::{continuation_values, BehaviourStrategy, GameTree, MissingPrice, NodeId};
use crate::pricing::{bayes_beliefs, expected_value, price_from_beliefs, pricing_residual, FlowHistory, FlowProbabilities, PricingSystem};
use crate::scalar::{Rational, Scalar};
use crate::solver::EquilibriumCertificate;

pub use structure::{
    check_assumption_grid, check_order_bound, check_structure_lemma, GridCheck, LemmaCheck, OrderBound, OrderBoundReport, StructureOptions,
    StructureReport, Violation,
};

/// Largest distance between the certificate and the last ε level of its
/// trace accepted as witnessing consistency.
pub const DEFAULT_CONSISTENCY_TOL: f64 = 1e-3;

/// Largest gap between trace beliefs and their Bayes conditionals.
const TRACE_BAYES_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum VerifyError {
    #[error("certificate carries no ε-trace, so consistency of its beliefs cannot be checked")]
    MissingTrace,
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Outcome of [`verify_kyle`].
#[derive(Debug, Clone, PartialEq)]
pub struct VerificationReport<S = Rational> {
    /// Largest gain from deviating at a decision node reached with positive
    /// probability, conditional on reaching it.
    pub max_deviation_gain: S,
    pub deviation_witness: Option<NodeId>,
    /// Largest gap between a price and the Bayes price on reached flows.
    pub pricing_residual: S,
    pub pricing_witness: Option<FlowHistory>,
    pub tolerance: S,
    /// Deviation payoff terms that hit a flow without a price and were
    /// charged the worst price for the insider.
    pub filled_prices: usize,
    pub passed: bool,
}

/// Probability of reaching each decision node.
pub fn node_reach<S: Scalar>(tree: &GameTree, strategy: &BehaviourStrategy<S>) -> Vec<S> {
    let spec = tree.spec();
    let mut reach = vec![S::zero(); tree.n_nodes()];
    for node in 0..tree.n_nodes() {
        let dn = tree.node(node);
        reach[node] = match dn.parent {
            None => S::from_rational(spec.cell_mass(1, dn.cell)),
            Some(e) => {
                let parent = tree.node(e.node);
                let share = spec.cell_mass(dn.period, dn.cell) / spec.cell_mass(parent.period, parent.cell);
                reach[e.node].clone()
                    * strategy.prob(e.node, e.trade).clone()
                    * S::from_rational(&spec.noise_probs()[e.noise])
                    * S::from_rational(&share)
            }
        };
    }
    reach
}

/// Checks a Kyle equilibrium: the strategy is optimal against `prices` and
/// `prices` are Bayes-rational on every reached flow.
///
/// Deviations that lead to flows without a price are charged the highest
/// value for buys and the lowest for sells. A reached flow without a price
/// is an error.
pub fn verify_kyle<S: Scalar>(
    tree: &GameTree,
    strategy: &BehaviourStrategy<S>,
    prices: &PricingSystem<S>,
    tol: &S,
) -> Result<VerificationReport<S>, EvalError> {
    strategy.check_shape(tree)?;
    let probs = FlowProbabilities::compute(tree, strategy);
    let (residual, pricing_witness) = pricing_residual(tree, &probs, prices)?;
    let cv = continuation_values(tree, strategy, prices, MissingPrice::Pessimistic)?;
    let reach = node_reach(tree, strategy);
    let (gain, deviation_witness) = worst_gain(&cv, (0..tree.n_nodes()).filter(|&n| reach[n] > S::zero()));
    let passed = gain <= *tol && residual <= *tol;
    Ok(VerificationReport {
        max_deviation_gain: gain,
        deviation_witness,
        pricing_residual: residual,
        pricing_witness,
        tolerance: tol.clone(),
        filled_prices: cv.filled,
        passed,
    })
}

fn worst_gain<S: Scalar>(cv: &crate::game::ContinuationValues<S>, nodes: impl Iterator<Item = NodeId>) -> (S, Option<NodeId>) {
    let mut worst = S::zero();
    let mut witness = None;
    for n in nodes {
        let g = cv.gain(n);
        if g > worst {
            worst = g;
            witness = Some(n);
        }
    }
    (worst, witness)
}

/// Why a certificate's trace does not witness consistency.
#[derive(Debug, Clone, PartialEq)]
pub enum ConsistencyGap {
    /// Beliefs of an ε level differ from the Bayes conditionals of its strategy.
    TraceNotBayes { level: usize, flow: FlowHistory, gap: f64 },
    /// Trace strategies are not completely mixed at some level.
    TraceNotMixed { level: usize, node: NodeId },
    /// The last ε level is too far from the certificate's strategy.
    Strategy { distance: f64 },
    /// The last ε level is too far from the certificate's belief at a flow.
    Beliefs { flow: FlowHistory, gap: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Consistency {
    /// The trace ends within `distance` of the certificate.
    Verified { distance: f64 },
    Unverifiable(ConsistencyGap),
}

/// Outcome of [`verify_sequential`].
#[derive(Debug, Clone, PartialEq)]
pub struct SequentialReport<S = Rational> {
    /// Kyle conditions against the belief-induced prices.
    pub kyle: VerificationReport<S>,
    /// Largest deviation gain over all decision nodes, reached or not.
    pub max_subgame_gain: S,
    pub subgame_witness: Option<NodeId>,
    /// Largest gap between the stated prices and those the beliefs induce.
    pub belief_price_gap: S,
    pub belief_price_witness: Option<FlowHistory>,
    pub consistency: Consistency,
    /// Subgame optimality and rational pricing hold within tolerance. The
    /// certificate is a sequential equilibrium when additionally
    /// `consistency` is verified.
    pub optimal: bool,
}

impl<S> SequentialReport<S> {
    pub fn passed(&self) -> bool {
        self.optimal && matches!(self.consistency, Consistency::Verified { .. })
    }
}

/// Checks a sequential equilibrium certificate.
///
/// Subgame optimality is checked at every decision node against the prices
/// induced by the certificate's beliefs, with tolerance `tol`. Consistency is
/// checked on the ε-trace: every level's beliefs must be Bayes for its
/// strategy, and the last level must lie within `consistency_tol` of the
/// certificate's strategy and beliefs.
pub fn verify_sequential<S: Scalar>(
    tree: &GameTree,
    cert: &EquilibriumCertificate,
    tol: &S,
    consistency_tol: f64,
) -> Result<SequentialReport<S>, VerifyError> {
    if cert.trace.is_empty() {
        return Err(VerifyError::MissingTrace);
    }
    let strategy: BehaviourStrategy<S> = cert.strategy.map(S::from_rational);
    let beliefs = cert.beliefs.map(S::from_rational);
    let stated = cert.prices.map(S::from_rational);
    strategy.check_shape(tree)?;

    let induced = price_from_beliefs(tree, &beliefs);
    let mut gap = S::zero();
    let mut gap_witness = None;
    for t in 1..=tree.horizon() {
        for flow in 0..tree.n_flow_histories(t) {
            let Some(p) = induced.get(t, flow) else {
                return Err(EvalError::MissingPrice { period: t, flow: tree.decode_flow(t, flow) }.into());
            };
            let g = match stated.get(t, flow) {
                Some(s) => (s.clone() - p.clone()).abs_val(),
                None => return Err(EvalError::MissingPrice { period: t, flow: tree.decode_flow(t, flow) }.into()),
            };
            if g > gap {
                gap = g;
                gap_witness = Some(FlowHistory { period: t, index: flow });
            }
        }
    }

    let kyle = verify_kyle(tree, &strategy, &induced, tol)?;
    let cv = continuation_values(tree, &strategy, &induced, MissingPrice::Error)?;
    let (subgame_gain, subgame_witness) = worst_gain(&cv, 0..tree.n_nodes());
    let optimal = kyle.passed && subgame_gain <= *tol && gap <= *tol;

    let consistency = check_trace(tree, cert, consistency_tol);
    Ok(SequentialReport {
        kyle,
        max_subgame_gain: subgame_gain,
        subgame_witness,
        belief_price_gap: gap,
        belief_price_witness: gap_witness,
        consistency,
        optimal,
    })
}

fn check_trace(tree: &GameTree, cert: &EquilibriumCertificate, consistency_tol: f64) -> Consistency {
    for (level, point) in cert.trace.iter().enumerate() {
        if let Some(node) = point.strategy.first_not_completely_mixed() {
            return Consistency::Unverifiable(ConsistencyGap::TraceNotMixed { level, node });
        }
        let bayes = bayes_beliefs(tree, &FlowProbabilities::compute(tree, &point.strategy));
        for (t, flow, b) in bayes.entries() {
            let gap = match point.beliefs.get(t, flow) {
                Some(stored) => stored.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs())),
                None => f64::INFINITY,
            };
            if !(gap <= TRACE_BAYES_TOL) {
                return Consistency::Unverifiable(ConsistencyGap::TraceNotBayes { level, flow: FlowHistory { period: t, index: flow }, gap });
            }
        }
    }
    let last = cert.trace.last().expect("nonempty trace");
    let distance = last.strategy.distance(&cert.strategy.to_f64());
    if !(distance <= consistency_tol) {
        return Consistency::Unverifiable(ConsistencyGap::Strategy { distance });
    }
    let mut worst = distance;
    for (t, flow, b) in cert.beliefs.entries() {
        let Some(traced) = last.beliefs.get(t, flow) else {
            return Consistency::Unverifiable(ConsistencyGap::Beliefs { flow: FlowHistory { period: t, index: flow }, gap: f64::INFINITY });
        };
        let gap = b.iter().zip(traced).fold(0.0f64, |m, (x, y)| m.max((x.to_f64() - y).abs()));
        if !(gap <= consistency_tol) {
            return Consistency::Unverifiable(ConsistencyGap::Beliefs { flow: FlowHistory { period: t, index: flow }, gap });
        }
        worst = worst.max(gap);
    }
    Consistency::Verified { distance: worst }
}

/// Bayes price at each reached flow of `strategy`, the reference for pricing
/// residuals.
pub fn bayes_price_table<S: Scalar>(tree: &GameTree, strategy: &BehaviourStrategy<S>) -> PricingSystem<S> {
    let probs = FlowProbabilities::compute(tree, strategy);
    let mut out = PricingSystem::empty(tree);
    for t in 1..=tree.horizon() {
        for flow in 0..probs.n_flows(t) {
            if let Some(b) = probs.conditional(t, flow) {
                out.set(t, flow, expected_value(tree, &b));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtin;
    use crate::scalar::rat;
    use crate::solver::{sequential_equilibrium, SolverConfig};

    #[test]
    fn example_3_1_passes_exactly() {
        let tree = GameTree::build(&builtin::example_3_1()).unwrap();
        let xi: BehaviourStrategy = builtin::example_3_1_strategy(&tree);
        let report = verify_kyle(&tree, &xi, &builtin::example_3_1_prices(&tree), &rat(0, 1)).unwrap();
        assert!(report.passed);
        assert_eq!(report.max_deviation_gain, rat(0, 1));
        assert_eq!(report.pricing_residual, rat(0, 1));
    }

    #[test]
    fn example_2_1_pure_strategy_fails() {
        let tree = GameTree::build(&builtin::example_2_1(rat(1, 8))).unwrap();
        let xi: BehaviourStrategy = builtin::example_2_1_pure(&tree);
        let prices = crate::pricing::rational_prices(&tree, &xi);
        let report = verify_kyle(&tree, &xi, &prices, &rat(0, 1)).unwrap();
        assert!(!report.passed);
        assert_eq!(report.deviation_witness, Some(0));
        assert_eq!(report.pricing_residual, rat(0, 1));
    }

    #[test]
    fn single_state_passes() {
        let spec = crate::GameSpec::new(1, vec![rat(2, 1)], vec![vec![vec![0]]], vec![rat(1, 1)], vec![rat(-1, 1), rat(1, 1)], vec![rat(0, 1)], vec![rat(1, 1)])
            .unwrap();
        let tree = GameTree::build(&spec).unwrap();
        let xi: BehaviourStrategy = BehaviourStrategy::uniform(&tree);
        let prices = PricingSystem::from_fn(&tree, |_, _| rat(2, 1));
        assert!(verify_kyle(&tree, &xi, &prices, &rat(0, 1)).unwrap().passed);
    }

    #[test]
    fn missing_reached_price_is_an_error() {
        let tree = GameTree::build(&builtin::example_3_1()).unwrap();
        let xi: BehaviourStrategy = builtin::example_3_1_strategy(&tree);
        let mut prices = builtin::example_3_1_prices(&tree);
        prices.clear(1, 2);
        assert!(matches!(verify_kyle(&tree, &xi, &prices, &rat(0, 1)), Err(EvalError::MissingPrice { period: 1, .. })));
    }

    #[test]
    fn sequential_certificate_round_trip() {
        let tree = GameTree::build(&builtin::example_3_1()).unwrap();
        let cert = sequential_equilibrium(&tree, &SolverConfig::default()).unwrap();
        let report = verify_sequential(&tree, &cert, &1e-6, DEFAULT_CONSISTENCY_TOL).unwrap();
        assert!(report.passed(), "{report:?}");

        let mut bad = cert.clone();
        // Point mass on the low state at the zero flow, which is reached.
        bad.beliefs.set(1, 2, vec![rat(0, 1), rat(0, 1), rat(1, 1)]).unwrap();
        bad.prices = price_from_beliefs(&tree, &bad.beliefs);
        let report = verify_sequential(&tree, &bad, &1e-6, DEFAULT_CONSISTENCY_TOL).unwrap();
        assert!(!report.optimal);
        assert_eq!(report.kyle.pricing_witness, Some(FlowHistory { period: 1, index: 2 }));

        let mut none = cert.clone();
        none.trace.clear();
        assert_eq!(verify_sequential(&tree, &none, &1e-6, DEFAULT_CONSISTENCY_TOL).unwrap_err(), VerifyError::MissingTrace);
    }
}
