//! Order-flow probabilities, rational prices and belief systems.
//!
//! Flow histories `(y_1, ..., y_t)` are addressed by a mixed-radix index over
//! the sorted flow grid of the tree (see [`GameTree::flows`]).

use alloc::format;
use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

use num_traits::{Signed, Zero};

use crate::error::EvalError;
use crate::game::{BehaviourStrategy, GameTree};
use crate::scalar::{close, sum, Rational, Scalar};

/// A flow history of length `period`, stored as its mixed-radix index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FlowHistory {
    pub period: usize,
    pub index: usize,
}

impl FlowHistory {
    /// Looks up a history given by flow values. `Ok(None)` when some value is
    /// not an attainable flow.
    pub fn from_values(tree: &GameTree, ys: &[Rational]) -> Result<Option<Self>, EvalError> {
        if ys.is_empty() || ys.len() > tree.horizon() {
            return Err(EvalError::BadFlow(format!("length {} outside 1..={}", ys.len(), tree.horizon())));
        }
        let mut idx = Vec::with_capacity(ys.len());
        for y in ys {
            match tree.flows().binary_search(y) {
                Ok(i) => idx.push(i),
                Err(_) => return Ok(None),
            }
        }
        Ok(Some(Self { period: ys.len(), index: tree.encode_flow(&idx)? }))
    }

    pub fn from_indices(tree: &GameTree, ys: &[usize]) -> Result<Self, EvalError> {
        Ok(Self { period: ys.len(), index: tree.encode_flow(ys)? })
    }

    pub fn indices(&self, tree: &GameTree) -> Vec<usize> {
        tree.decode_flow(self.period, self.index)
    }

    pub fn values(&self, tree: &GameTree) -> Vec<Rational> {
        self.indices(tree).into_iter().map(|i| tree.flows()[i].clone()).collect()
    }
}

/// Prices indexed by period and flow history. Entries may be missing for
/// flows outside the system's domain.
#[derive(Debug, Clone, PartialEq)]
pub struct PricingSystem<S = Rational> {
    prices: Vec<Vec<Option<S>>>,
}

impl<S: Scalar> PricingSystem<S> {
    /// A system with no prices at all.
    pub fn empty(tree: &GameTree) -> Self {
        Self { prices: (1..=tree.horizon()).map(|t| vec![None; tree.n_flow_histories(t)]).collect() }
    }

    /// A complete system from a function of `(period, flow index)`.
    pub fn from_fn(tree: &GameTree, mut f: impl FnMut(usize, usize) -> S) -> Self {
        Self {
            prices: (1..=tree.horizon()).map(|t| (0..tree.n_flow_histories(t)).map(|i| Some(f(t, i))).collect()).collect(),
        }
    }

    pub fn horizon(&self) -> usize {
        self.prices.len()
    }

    pub fn get(&self, period: usize, flow: usize) -> Option<&S> {
        self.prices.get(period.wrapping_sub(1))?.get(flow)?.as_ref()
    }

    /// Price at a flow; querying outside the domain is an error.
    pub fn price(&self, tree: &GameTree, history: FlowHistory) -> Result<&S, EvalError> {
        self.get(history.period, history.index)
            .ok_or_else(|| EvalError::MissingPrice { period: history.period, flow: history.indices(tree) })
    }

    pub fn set(&mut self, period: usize, flow: usize, price: S) {
        self.prices[period - 1][flow] = Some(price);
    }

    pub fn clear(&mut self, period: usize, flow: usize) {
        self.prices[period - 1][flow] = None;
    }

    pub fn n_flows(&self, period: usize) -> usize {
        self.prices[period - 1].len()
    }

    /// `true` when every flow history of every period has a price.
    pub fn is_complete(&self) -> bool {
        self.prices.iter().all(|p| p.iter().all(Option::is_some))
    }

    pub fn n_defined(&self) -> usize {
        self.prices.iter().map(|p| p.iter().filter(|x| x.is_some()).count()).sum()
    }

    /// Checks every stored price lies within `[min value, max value]`.
    pub fn check_range(&self, tree: &GameTree) -> Result<(), EvalError> {
        let spec = tree.spec();
        let (lo, hi) = (S::from_rational(spec.min_value()), S::from_rational(spec.max_value()));
        let slack = S::validation_slack();
        for (t, row) in self.prices.iter().enumerate() {
            for p in row.iter().flatten() {
                let below = if S::EXACT { *p < lo } else { (lo.clone() - p.clone()).to_f64() > slack };
                let above = if S::EXACT { *p > hi } else { (p.clone() - hi.clone()).to_f64() > slack };
                if below || above || p.to_f64().is_nan() {
                    return Err(EvalError::PriceOutOfRange {
                        period: t + 1,
                        price: p.to_string(),
                        low: lo.to_string(),
                        high: hi.to_string(),
                    });
                }
            }
        }
        Ok(())
    }

    pub fn map<T: Scalar>(&self, f: impl Fn(&S) -> T) -> PricingSystem<T> {
        PricingSystem { prices: self.prices.iter().map(|row| row.iter().map(|p| p.as_ref().map(&f)).collect()).collect() }
    }

    /// Iterates over `(period, flow index, price)` of defined entries.
    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, &S)> {
        self.prices.iter().enumerate().flat_map(|(t, row)| row.iter().enumerate().filter_map(move |(i, p)| p.as_ref().map(|p| (t + 1, i, p))))
    }
}

/// Market-maker beliefs: a distribution over states per flow history.
#[derive(Debug, Clone, PartialEq)]
pub struct BeliefSystem<S = Rational> {
    n_states: usize,
    beliefs: Vec<Vec<Option<Vec<S>>>>,
}

impl<S: Scalar> BeliefSystem<S> {
    pub fn empty(tree: &GameTree) -> Self {
        Self {
            n_states: tree.spec().n_states(),
            beliefs: (1..=tree.horizon()).map(|t| vec![None; tree.n_flow_histories(t)]).collect(),
        }
    }

    pub fn get(&self, period: usize, flow: usize) -> Option<&[S]> {
        self.beliefs.get(period.wrapping_sub(1))?.get(flow)?.as_deref()
    }

    /// Stores a belief after checking it is a probability vector.
    pub fn set(&mut self, period: usize, flow: usize, belief: Vec<S>) -> Result<(), EvalError> {
        if belief.len() != self.n_states {
            return Err(EvalError::BadFlow(format!("belief has {} entries for {} states", belief.len(), self.n_states)));
        }
        let slack = S::validation_slack();
        let negative = belief.iter().any(|b| if S::EXACT { *b < S::zero() } else { b.to_f64() < -slack || b.to_f64().is_nan() });
        if negative || !close(&sum(&belief), &S::one(), slack) {
            return Err(EvalError::BadFlow(format!("belief at period {period}, flow {flow} is not a probability vector")));
        }
        self.beliefs[period - 1][flow] = Some(belief);
        Ok(())
    }

    pub fn is_complete(&self) -> bool {
        self.beliefs.iter().all(|p| p.iter().all(Option::is_some))
    }

    pub fn horizon(&self) -> usize {
        self.beliefs.len()
    }

    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn n_flows(&self, period: usize) -> usize {
        self.beliefs[period - 1].len()
    }

    pub fn map<T: Scalar>(&self, f: impl Fn(&S) -> T) -> BeliefSystem<T> {
        BeliefSystem {
            n_states: self.n_states,
            beliefs: self.beliefs.iter().map(|row| row.iter().map(|b| b.as_ref().map(|v| v.iter().map(&f).collect())).collect()).collect(),
        }
    }

    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, &[S])> {
        self.beliefs.iter().enumerate().flat_map(|(t, row)| row.iter().enumerate().filter_map(move |(i, b)| b.as_deref().map(|b| (t + 1, i, b))))
    }
}

/// Joint probabilities of state and flow history for every period.
#[derive(Debug, Clone)]
pub struct FlowProbabilities<S> {
    n_states: usize,
    /// `joint[t - 1][flow * n_states + state]`.
    joint: Vec<Vec<S>>,
    /// Probability of reaching each decision node.
    pub reach: Vec<S>,
}

impl<S: Scalar> FlowProbabilities<S> {
    pub fn compute(tree: &GameTree, strategy: &BehaviourStrategy<S>) -> Self {
        let spec = tree.spec();
        let n = spec.n_states();
        let (k, l) = (tree.n_trades(), tree.n_noise());
        let noise: Vec<S> = spec.noise_probs().iter().map(S::from_rational).collect();
        let mut joint: Vec<Vec<S>> = (1..=tree.horizon()).map(|t| vec![S::zero(); tree.n_flow_histories(t) * n]).collect();
        let mut reach = vec![S::zero(); tree.n_nodes()];
        for node in tree.period_nodes(1) {
            reach[node] = S::from_rational(spec.cell_mass(1, tree.node(node).cell));
        }
        for node in 0..tree.n_nodes() {
            let dn = tree.node(node);
            let r = reach[node].clone();
            if r == S::zero() {
                continue;
            }
            let mass = spec.cell_mass(dn.period, dn.cell);
            let states = tree.cell_states(node);
            let state_w: Vec<S> = states.iter().map(|&s| S::from_rational(&(&spec.prior()[s] / mass))).collect();
            let kids = if dn.period < tree.horizon() { spec.child_cells(dn.period, dn.cell) } else { &[] };
            let kid_w: Vec<S> = kids.iter().map(|&c| S::from_rational(&(spec.cell_mass(dn.period + 1, c) / mass))).collect();
            let row = strategy.row(node);
            for x in 0..k {
                if row[x] == S::zero() {
                    continue;
                }
                let rx = r.clone() * row[x].clone();
                for z in 0..l {
                    let p = rx.clone() * noise[z].clone();
                    let flow = tree.flow_after(node, x, z);
                    let slot = &mut joint[dn.period - 1];
                    for (j, &s) in states.iter().enumerate() {
                        let e = &mut slot[flow * n + s];
                        *e = e.clone() + p.clone() * state_w[j].clone();
                    }
                    for (j, w) in kid_w.iter().enumerate() {
                        let child = tree.child(node, x, z, j).expect("inner node");
                        reach[child] = p.clone() * w.clone();
                    }
                }
            }
        }
        Self { n_states: n, joint, reach }
    }

    pub fn joint(&self, period: usize, flow: usize, state: usize) -> &S {
        &self.joint[period - 1][flow * self.n_states + state]
    }

    pub fn joint_row(&self, period: usize, flow: usize) -> &[S] {
        &self.joint[period - 1][flow * self.n_states..(flow + 1) * self.n_states]
    }

    pub fn marginal(&self, period: usize, flow: usize) -> S {
        sum(self.joint_row(period, flow))
    }

    pub fn is_reached(&self, period: usize, flow: usize) -> bool {
        self.marginal(period, flow) > S::zero()
    }

    /// Bayes conditional distribution of the state given the flow.
    pub fn conditional(&self, period: usize, flow: usize) -> Option<Vec<S>> {
        let m = self.marginal(period, flow);
        if m <= S::zero() {
            return None;
        }
        Some(self.joint_row(period, flow).iter().map(|j| j.clone() / m.clone()).collect())
    }

    pub fn n_flows(&self, period: usize) -> usize {
        self.joint[period - 1].len() / self.n_states
    }
}

/// Joint probability of `state` and the flow history `ys` (flow values).
/// Histories containing an unattainable flow have probability zero.
pub fn joint_flow_prob<S: Scalar>(
    tree: &GameTree,
    strategy: &BehaviourStrategy<S>,
    state: usize,
    ys: &[Rational],
) -> Result<S, EvalError> {
    strategy.check_shape(tree)?;
    match FlowHistory::from_values(tree, ys)? {
        None => Ok(S::zero()),
        Some(h) => Ok(FlowProbabilities::compute(tree, strategy).joint(h.period, h.index, state).clone()),
    }
}

/// Bayes conditional distribution over states given a reached flow history.
pub fn conditional_state_prob<S: Scalar>(
    tree: &GameTree,
    strategy: &BehaviourStrategy<S>,
    history: FlowHistory,
) -> Result<Vec<S>, EvalError> {
    strategy.check_shape(tree)?;
    FlowProbabilities::compute(tree, strategy)
        .conditional(history.period, history.index)
        .ok_or_else(|| EvalError::UnreachedFlow { flow: history.indices(tree) })
}

/// Expected true value under a belief.
pub fn expected_value<S: Scalar>(tree: &GameTree, belief: &[S]) -> S {
    belief.iter().zip(tree.spec().values()).fold(S::zero(), |acc, (b, v)| acc + b.clone() * S::from_rational(v))
}

/// Rational prices on the flows reached under `strategy`; other flows are
/// left out of the domain.
pub fn rational_prices<S: Scalar>(tree: &GameTree, strategy: &BehaviourStrategy<S>) -> PricingSystem<S> {
    rational_prices_from(tree, &FlowProbabilities::compute(tree, strategy))
}

pub fn rational_prices_from<S: Scalar>(tree: &GameTree, probs: &FlowProbabilities<S>) -> PricingSystem<S> {
    let mut prices = PricingSystem::empty(tree);
    for t in 1..=tree.horizon() {
        for flow in 0..probs.n_flows(t) {
            if let Some(b) = probs.conditional(t, flow) {
                prices.set(t, flow, expected_value(tree, &b));
            }
        }
    }
    prices
}

/// Bayes beliefs on reached flows only.
pub fn bayes_beliefs<S: Scalar>(tree: &GameTree, probs: &FlowProbabilities<S>) -> BeliefSystem<S> {
    let mut beliefs = BeliefSystem::empty(tree);
    for t in 1..=tree.horizon() {
        for flow in 0..probs.n_flows(t) {
            if let Some(b) = probs.conditional(t, flow) {
                beliefs.beliefs[t - 1][flow] = Some(b);
            }
        }
    }
    beliefs
}

/// Bayes beliefs of a completely mixed strategy, defined on every flow.
pub fn beliefs_from_strategy<S: Scalar>(tree: &GameTree, strategy: &BehaviourStrategy<S>) -> Result<BeliefSystem<S>, EvalError> {
    strategy.check_shape(tree)?;
    if let Some(node) = strategy.first_not_completely_mixed() {
        return Err(EvalError::NotCompletelyMixed { node });
    }
    let beliefs = bayes_beliefs(tree, &FlowProbabilities::compute(tree, strategy));
    debug_assert!(beliefs.is_complete());
    Ok(beliefs)
}

/// Prices induced by beliefs, on every flow that carries a belief.
pub fn price_from_beliefs<S: Scalar>(tree: &GameTree, beliefs: &BeliefSystem<S>) -> PricingSystem<S> {
    let mut prices = PricingSystem::empty(tree);
    for (t, flow, b) in beliefs.entries() {
        prices.set(t, flow, expected_value(tree, b));
    }
    prices
}

/// Largest gap between `prices` and the Bayes price on reached flows, with
/// the worst flow. A reached flow without a price is an error.
pub fn pricing_residual<S: Scalar>(
    tree: &GameTree,
    probs: &FlowProbabilities<S>,
    prices: &PricingSystem<S>,
) -> Result<(S, Option<FlowHistory>), EvalError> {
    let mut worst = S::zero();
    let mut witness = None;
    for t in 1..=tree.horizon() {
        for flow in 0..probs.n_flows(t) {
            let Some(b) = probs.conditional(t, flow) else { continue };
            let Some(p) = prices.get(t, flow) else {
                return Err(EvalError::MissingPrice { period: t, flow: tree.decode_flow(t, flow) });
            };
            let gap = (p.clone() - expected_value(tree, &b)).abs_val();
            if gap > worst {
                worst = gap;
                witness = Some(FlowHistory { period: t, index: flow });
            }
        }
    }
    Ok((worst, witness))
}

/// Fills flows missing from a single-period price table with a deterrent
/// price: the highest value when only buys can produce the flow, the lowest
/// when only sells can, and otherwise by the sign of the noise-weighted trade.
pub fn complete_single_period(tree: &GameTree, prices: &PricingSystem) -> PricingSystem {
    let spec = tree.spec();
    let mut out = prices.clone();
    for t in 1..=tree.horizon() {
        for flow in 0..prices.n_flows(t) {
            if prices.get(t, flow).is_some() {
                continue;
            }
            let y = &tree.flows()[*tree.decode_flow(t, flow).last().expect("nonempty")];
            let mut tilt = Rational::zero();
            let (mut any_buy, mut any_sell) = (false, false);
            for x in spec.trades() {
                for (z, pz) in spec.noise().iter().zip(spec.noise_probs()) {
                    if &(x + z) == y {
                        tilt += x * pz;
                        any_buy |= x.is_positive();
                        any_sell |= x.is_negative();
                    }
                }
            }
            let high = if any_buy && !any_sell {
                true
            } else if any_sell && !any_buy {
                false
            } else {
                !tilt.is_negative()
            };
            out.set(t, flow, if high { spec.max_value().clone() } else { spec.min_value().clone() });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtin;
    use crate::scalar::rat;

    fn ints(xs: &[i64]) -> Vec<Rational> {
        xs.iter().map(|&x| rat(x, 1)).collect()
    }

    #[test]
    fn example_3_1_joint_and_prices() {
        let tree = GameTree::build(&builtin::example_3_1()).unwrap();
        let xi: BehaviourStrategy = builtin::example_3_1_strategy(&tree);
        assert_eq!(joint_flow_prob(&tree, &xi, 0, &ints(&[0])).unwrap(), rat(1, 4));
        assert_eq!(joint_flow_prob(&tree, &xi, 0, &ints(&[7])).unwrap(), rat(0, 1));
        let h = FlowHistory::from_values(&tree, &ints(&[0])).unwrap().unwrap();
        assert_eq!(conditional_state_prob(&tree, &xi, h).unwrap(), vec![rat(3, 4), rat(1, 8), rat(1, 8)]);
        let prices = rational_prices(&tree, &xi);
        let table: Vec<Rational> = (0..5).map(|f| prices.get(1, f).unwrap().clone()).collect();
        assert_eq!(table, vec![rat(0, 1), rat(3, 7), rat(13, 16), rat(3, 4), rat(1, 1)]);
        assert!(prices.is_complete());
    }

    #[test]
    fn example_2_1_prices() {
        let tree = GameTree::build(&builtin::example_2_1(rat(1, 8))).unwrap();
        let xi: BehaviourStrategy = builtin::example_2_1_pure(&tree);
        assert_eq!(joint_flow_prob(&tree, &xi, 1, &ints(&[0, 1])).unwrap(), rat(3, 64));
        let h = FlowHistory::from_values(&tree, &ints(&[0, 1])).unwrap().unwrap();
        assert_eq!(conditional_state_prob(&tree, &xi, h).unwrap(), vec![rat(1, 2), rat(1, 2)]);
        let prices = rational_prices(&tree, &xi);
        assert_eq!(prices.price(&tree, h).unwrap(), &rat(1, 2));
        let unreached = FlowHistory::from_values(&tree, &ints(&[2, -1])).unwrap().unwrap();
        assert!(prices.price(&tree, unreached).is_err());
        assert!(conditional_state_prob(&tree, &xi, unreached).is_err());
    }

    #[test]
    fn beliefs_need_complete_mixing() {
        let tree = GameTree::build(&builtin::example_2_1(rat(1, 8))).unwrap();
        let pure: BehaviourStrategy = builtin::example_2_1_pure(&tree);
        assert!(matches!(beliefs_from_strategy(&tree, &pure), Err(EvalError::NotCompletelyMixed { .. })));
        let mixed: BehaviourStrategy = BehaviourStrategy::uniform(&tree);
        let beliefs = beliefs_from_strategy(&tree, &mixed).unwrap();
        assert!(beliefs.is_complete());
        let induced = price_from_beliefs(&tree, &beliefs);
        assert!(induced.is_complete());
        assert_eq!(induced, rational_prices(&tree, &mixed));
        induced.check_range(&tree).unwrap();
    }

    #[test]
    fn zero_profit_identity() {
        let tree = GameTree::build(&builtin::example_2_1(rat(1, 8))).unwrap();
        let xi: BehaviourStrategy = builtin::example_2_1_pure(&tree);
        let probs = FlowProbabilities::compute(&tree, &xi);
        let prices = rational_prices_from(&tree, &probs);
        let (res, witness) = pricing_residual(&tree, &probs, &prices).unwrap();
        assert_eq!(res, rat(0, 1));
        assert!(witness.is_none());
        for t in 1..=2 {
            let total = (0..probs.n_flows(t)).fold(rat(0, 1), |acc, f| acc + probs.marginal(t, f));
            assert_eq!(total, rat(1, 1));
        }
    }

    #[test]
    fn point_mass_belief_prices_at_value() {
        let tree = GameTree::build(&builtin::example_3_1()).unwrap();
        let mut beliefs = BeliefSystem::<Rational>::empty(&tree);
        beliefs.set(1, 2, vec![rat(0, 1), rat(1, 1), rat(0, 1)]).unwrap();
        assert!(beliefs.set(1, 3, vec![rat(1, 2), rat(1, 3), rat(0, 1)]).is_err());
        let prices = price_from_beliefs(&tree, &beliefs);
        assert_eq!(prices.get(1, 2), Some(&rat(1, 2)));
        assert_eq!(prices.get(1, 3), None);
    }

    #[test]
    fn out_of_range_prices_are_rejected() {
        let tree = GameTree::build(&builtin::example_3_1()).unwrap();
        let prices = PricingSystem::from_fn(&tree, |_, f| rat(f as i64, 2));
        assert!(matches!(prices.check_range(&tree), Err(EvalError::PriceOutOfRange { .. })));
    }
}
