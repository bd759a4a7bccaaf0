use alloc::vec;
use alloc::vec::Vec;

use crate::error::EvalError;
use crate::game::strategy::BehaviourStrategy;
use crate::game::tree::{Edge, GameTree, NodeId, NodeKey, Outcome};
use crate::pricing::PricingSystem;
use crate::scalar::Scalar;

/// What to do when a payoff term needs a price the pricing system lacks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum MissingPrice {
    #[default]
    Error,
    /// Charge the worst price for the insider: the highest value for buys,
    /// the lowest for sells.
    Pessimistic,
}

/// Probability of `outcome` under `strategy`.
pub fn realisation_prob<S: Scalar>(tree: &GameTree, strategy: &BehaviourStrategy<S>, outcome: &Outcome) -> S {
    let spec = tree.spec();
    let mut p = S::from_rational(&spec.prior()[outcome.state]);
    for edge in tree.path(outcome) {
        p = p * strategy.prob(edge.node, edge.trade).clone() * S::from_rational(&spec.noise_probs()[edge.noise]);
    }
    p
}

/// Probability of `outcome` conditional on reaching `start`.
pub fn subgame_realisation_prob<S: Scalar>(
    tree: &GameTree,
    strategy: &BehaviourStrategy<S>,
    start: NodeKey,
    outcome: &Outcome,
) -> Result<S, EvalError> {
    let spec = tree.spec();
    let path = tree.path(outcome);
    let (from_period, mass) = match start {
        NodeKey::Root => return Ok(realisation_prob(tree, strategy, outcome)),
        NodeKey::Decision(node) => {
            let n = tree.node(node);
            if !tree.is_descendant(outcome.last, node) {
                return Err(EvalError::NotAfter { outcome: outcome.id });
            }
            (n.period, spec.cell_mass(n.period, n.cell))
        }
        NodeKey::Revelation(edge) => {
            let n = tree.node(edge.node);
            if path.get(n.period - 1) != Some(&edge) {
                return Err(EvalError::NotAfter { outcome: outcome.id });
            }
            (n.period + 1, spec.cell_mass(n.period, n.cell))
        }
        NodeKey::Noise { .. } | NodeKey::Terminal(_) => return Err(EvalError::BadStart),
    };
    let mut p = S::from_rational(&(&spec.prior()[outcome.state] / mass));
    for edge in &path[from_period - 1..] {
        p = p * strategy.prob(edge.node, edge.trade).clone() * S::from_rational(&spec.noise_probs()[edge.noise]);
    }
    Ok(p)
}

/// Insider payoff `sum_t (v - S_t(y_1..y_t)) x_t` along an outcome.
///
/// Periods with a zero trade contribute nothing and need no price.
pub fn payoff<S: Scalar>(tree: &GameTree, outcome: &Outcome, prices: &PricingSystem<S>) -> Result<S, EvalError> {
    payoff_with(tree, outcome, prices, MissingPrice::Error)
}

pub fn payoff_with<S: Scalar>(
    tree: &GameTree,
    outcome: &Outcome,
    prices: &PricingSystem<S>,
    policy: MissingPrice,
) -> Result<S, EvalError> {
    let spec = tree.spec();
    let value = S::from_rational(&spec.values()[outcome.state]);
    let mut total = S::zero();
    let mut flow = 0usize;
    for (t, edge) in tree.path(outcome).iter().enumerate() {
        flow = flow * tree.n_flows() + tree.flow_index(edge.trade, edge.noise);
        let x = &spec.trades()[edge.trade];
        if x.is_zero_trade() {
            continue;
        }
        let price = lookup(tree, prices, t + 1, flow, x.is_buy(), policy)?;
        total = total + (value.clone() - price) * S::from_rational(x);
    }
    Ok(total)
}

/// Expected insider utility by enumeration of all outcomes.
pub fn expected_utility<S: Scalar>(
    tree: &GameTree,
    strategy: &BehaviourStrategy<S>,
    prices: &PricingSystem<S>,
) -> Result<S, EvalError> {
    subgame_expected_utility(tree, strategy, prices, NodeKey::Root)
}

/// Expected utility of the subgame starting at `start`, by enumeration of the
/// outcomes after it. Payoffs include earlier periods of each outcome.
pub fn subgame_expected_utility<S: Scalar>(
    tree: &GameTree,
    strategy: &BehaviourStrategy<S>,
    prices: &PricingSystem<S>,
    start: NodeKey,
) -> Result<S, EvalError> {
    strategy.check_shape(tree)?;
    let anchor = match start {
        NodeKey::Root => None,
        NodeKey::Decision(n) => Some(n),
        NodeKey::Revelation(e) => Some(e.node),
        _ => return Err(EvalError::BadStart),
    };
    let mut total = S::zero();
    for outcome in tree.outcomes() {
        if let Some(a) = anchor {
            if !tree.is_descendant(outcome.last, a) {
                continue;
            }
            if let NodeKey::Revelation(edge) = start {
                if tree.path(&outcome)[tree.node(a).period - 1] != edge {
                    continue;
                }
            }
        }
        let p = subgame_realisation_prob(tree, strategy, start, &outcome)?;
        if p == S::zero() {
            continue;
        }
        total = total + p * payoff(tree, &outcome, prices)?;
    }
    Ok(total)
}

/// Continuation values from a backward pass.
///
/// Values only count payoffs from the node's own period on; earlier periods
/// are sunk and identical across deviations.
#[derive(Debug, Clone)]
pub struct ContinuationValues<S> {
    n_trades: usize,
    /// Value of each trade at each node when the strategy is followed later.
    pub follow: Vec<S>,
    /// Value of each trade at each node when play is optimal later.
    pub optimal: Vec<S>,
    /// Value of each node under the strategy.
    pub value: Vec<S>,
    /// Best attainable value at each node.
    pub best: Vec<S>,
    /// Expected utility at the root.
    pub root_value: S,
    /// Best attainable expected utility at the root.
    pub root_best: S,
    /// Number of price terms filled in by the pessimistic policy.
    pub filled: usize,
}

impl<S: Scalar> ContinuationValues<S> {
    pub fn follow_row(&self, node: NodeId) -> &[S] {
        &self.follow[node * self.n_trades..(node + 1) * self.n_trades]
    }

    pub fn optimal_row(&self, node: NodeId) -> &[S] {
        &self.optimal[node * self.n_trades..(node + 1) * self.n_trades]
    }

    /// Gain from the best deviation in the subgame at `node`.
    pub fn gain(&self, node: NodeId) -> S {
        self.best[node].clone() - self.value[node].clone()
    }

    pub fn root_gain(&self) -> S {
        self.root_best.clone() - self.root_value.clone()
    }

    /// Subgame value after a revelation node, under the strategy and at best.
    pub fn revelation_values(&self, tree: &GameTree, edge: Edge) -> (S, S) {
        let spec = tree.spec();
        let n = tree.node(edge.node);
        if n.period == tree.horizon() {
            return (S::zero(), S::zero());
        }
        let kids = spec.child_cells(n.period, n.cell);
        let mass = spec.cell_mass(n.period, n.cell);
        let (mut v, mut b) = (S::zero(), S::zero());
        for (j, &c) in kids.iter().enumerate() {
            let w = S::from_rational(&(spec.cell_mass(n.period + 1, c) / mass));
            let child = tree.child(edge.node, edge.trade, edge.noise, j).expect("inner node");
            v = v + w.clone() * self.value[child].clone();
            b = b + w * self.best[child].clone();
        }
        (v, b)
    }
}

/// Backward induction over the tree.
pub fn continuation_values<S: Scalar>(
    tree: &GameTree,
    strategy: &BehaviourStrategy<S>,
    prices: &PricingSystem<S>,
    policy: MissingPrice,
) -> Result<ContinuationValues<S>, EvalError> {
    strategy.check_shape(tree)?;
    let spec = tree.spec();
    let (k, l) = (tree.n_trades(), tree.n_noise());
    let trades: Vec<S> = spec.trades().iter().map(S::from_rational).collect();
    let noise: Vec<S> = spec.noise_probs().iter().map(S::from_rational).collect();
    let buys: Vec<bool> = spec.trades().iter().map(|x| x.is_buy()).collect();
    let zero_trade: Vec<bool> = spec.trades().iter().map(|x| x.is_zero_trade()).collect();

    let n = tree.n_nodes();
    let mut follow = vec![S::zero(); n * k];
    let mut optimal = vec![S::zero(); n * k];
    let mut value = vec![S::zero(); n];
    let mut best = vec![S::zero(); n];
    let mut filled = 0usize;

    let mut weights: Vec<S> = Vec::new();
    for node in (0..n).rev() {
        let dn = tree.node(node);
        let mean = S::from_rational(spec.cell_mean(dn.period, dn.cell));
        weights.clear();
        if dn.period < tree.horizon() {
            let mass = spec.cell_mass(dn.period, dn.cell);
            for &c in spec.child_cells(dn.period, dn.cell) {
                weights.push(S::from_rational(&(spec.cell_mass(dn.period + 1, c) / mass)));
            }
        }
        for x in 0..k {
            let (mut qf, mut qo) = (S::zero(), S::zero());
            for z in 0..l {
                let mut term = S::zero();
                if !zero_trade[x] {
                    let flow = tree.flow_after(node, x, z);
                    if prices.get(dn.period, flow).is_none() && policy == MissingPrice::Pessimistic {
                        filled += 1;
                    }
                    let price = lookup(tree, prices, dn.period, flow, buys[x], policy)?;
                    term = (mean.clone() - price) * trades[x].clone();
                }
                let (mut cf, mut co) = (term.clone(), term);
                for (j, w) in weights.iter().enumerate() {
                    let child = tree.child(node, x, z, j).expect("inner node");
                    cf = cf + w.clone() * value[child].clone();
                    co = co + w.clone() * best[child].clone();
                }
                qf = qf + noise[z].clone() * cf;
                qo = qo + noise[z].clone() * co;
            }
            follow[node * k + x] = qf;
            optimal[node * k + x] = qo;
        }
        let row = strategy.row(node);
        let mut v = S::zero();
        let mut b: Option<S> = None;
        for x in 0..k {
            v = v + row[x].clone() * follow[node * k + x].clone();
            let o = optimal[node * k + x].clone();
            b = Some(match b {
                Some(cur) => cur.max_val(o),
                None => o,
            });
        }
        value[node] = v;
        best[node] = b.expect("nonempty trade grid");
    }

    let (mut root_value, mut root_best) = (S::zero(), S::zero());
    for node in tree.period_nodes(1) {
        let dn = tree.node(node);
        let w = S::from_rational(spec.cell_mass(1, dn.cell));
        root_value = root_value + w.clone() * value[node].clone();
        root_best = root_best + w * best[node].clone();
    }
    Ok(ContinuationValues { n_trades: k, follow, optimal, value, best, root_value, root_best, filled })
}

fn lookup<S: Scalar>(
    tree: &GameTree,
    prices: &PricingSystem<S>,
    period: usize,
    flow: usize,
    buy: bool,
    policy: MissingPrice,
) -> Result<S, EvalError> {
    match prices.get(period, flow) {
        Some(p) => Ok(p.clone()),
        None => match policy {
            MissingPrice::Error => Err(EvalError::MissingPrice { period, flow: tree.decode_flow(period, flow) }),
            MissingPrice::Pessimistic => {
                let spec = tree.spec();
                Ok(S::from_rational(if buy { spec.max_value() } else { spec.min_value() }))
            }
        },
    }
}

trait TradeSign {
    fn is_buy(&self) -> bool;
    fn is_zero_trade(&self) -> bool;
}

impl TradeSign for crate::scalar::Rational {
    fn is_buy(&self) -> bool {
        num_traits::Signed::is_positive(self)
    }

    fn is_zero_trade(&self) -> bool {
        num_traits::Zero::is_zero(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtin;
    use crate::scalar::{rat, Rational};

    fn ex31_prices(tree: &GameTree) -> PricingSystem {
        builtin::example_3_1_prices(tree)
    }

    #[test]
    fn example_3_1_realisation_and_payoffs() {
        let tree = GameTree::build(&builtin::example_3_1()).unwrap();
        let xi: BehaviourStrategy = builtin::example_3_1_strategy(&tree);
        // state 0 is v = 1; trades and noise ascending (-1, 0, 1).
        let o = tree.outcome(tree.outcome_id(0, 2, 0, 0).unwrap()).unwrap();
        assert_eq!(realisation_prob(&tree, &xi, &o), rat(1, 4));
        let prices = ex31_prices(&tree);
        assert_eq!(payoff(&tree, &o, &prices).unwrap(), rat(3, 16));
        let o = tree.outcome(tree.outcome_id(2, 0, 1, 2).unwrap()).unwrap();
        assert_eq!(payoff(&tree, &o, &prices).unwrap(), rat(3, 7));
        assert_eq!(expected_utility(&tree, &xi, &prices).unwrap(), rat(293, 2688));
    }

    #[test]
    fn example_2_1_path_probabilities() {
        let eps = rat(1, 8);
        let tree = GameTree::build(&builtin::example_2_1(eps)).unwrap();
        let xi: BehaviourStrategy = builtin::example_2_1_pure(&tree);
        // v = 1 is state 0 and its first-period node is 0; trades (0, 1), noise (-1, 0, 1).
        let second = tree.child(0, 1, 2, 0).unwrap();
        let o = tree.outcome(tree.outcome_id(second, 1, 2, 0).unwrap()).unwrap();
        assert_eq!(realisation_prob(&tree, &xi, &o), rat(1, 128));

        let after = tree.child(0, 1, 0, 0).unwrap();
        let o = tree.outcome(tree.outcome_id(after, 1, 1, 0).unwrap()).unwrap();
        let start = NodeKey::Revelation(Edge { node: 0, trade: 1, noise: 0 });
        assert_eq!(subgame_realisation_prob(&tree, &xi, start, &o).unwrap(), rat(3, 4));
        assert_eq!(subgame_realisation_prob(&tree, &xi, NodeKey::Decision(after), &o).unwrap(), rat(3, 4));
        let elsewhere = tree.outcome(0).unwrap();
        assert!(subgame_realisation_prob(&tree, &xi, start, &elsewhere).is_err());
        assert_eq!(subgame_realisation_prob(&tree, &xi, NodeKey::Terminal(0), &o), Err(EvalError::BadStart));
    }

    #[test]
    fn probabilities_sum_to_one() {
        let tree = GameTree::build(&builtin::example_2_1(rat(1, 8))).unwrap();
        let xi: BehaviourStrategy = BehaviourStrategy::uniform(&tree);
        let total = tree.outcomes().fold(Rational::from_integer(0.into()), |acc, o| acc + realisation_prob(&tree, &xi, &o));
        assert_eq!(total, rat(1, 1));
        for node in 0..tree.n_nodes() {
            let total = tree
                .outcomes()
                .filter(|o| tree.is_descendant(o.last, node))
                .fold(rat(0, 1), |acc, o| acc + subgame_realisation_prob(&tree, &xi, NodeKey::Decision(node), &o).unwrap());
            assert_eq!(total, rat(1, 1));
        }
    }

    #[test]
    fn backward_pass_matches_enumeration() {
        let tree = GameTree::build(&builtin::example_3_1()).unwrap();
        let xi: BehaviourStrategy = builtin::example_3_1_strategy(&tree);
        let prices = ex31_prices(&tree);
        let cv = continuation_values(&tree, &xi, &prices, MissingPrice::Error).unwrap();
        assert_eq!(cv.root_value, rat(293, 2688));
        assert_eq!(cv.root_gain(), rat(0, 1));
        // v = 1/2 node: sell, wait, buy.
        assert_eq!(cv.follow_row(1), &[rat(-309, 896), rat(0, 1), rat(-21, 64)][..]);
    }

    #[test]
    fn missing_prices_are_reported_or_filled() {
        let tree = GameTree::build(&builtin::example_3_1()).unwrap();
        let xi: BehaviourStrategy = builtin::example_3_1_strategy(&tree);
        let prices = PricingSystem::<Rational>::empty(&tree);
        let err = continuation_values(&tree, &xi, &prices, MissingPrice::Error).unwrap_err();
        assert!(matches!(err, EvalError::MissingPrice { period: 1, .. }));
        let cv = continuation_values(&tree, &xi, &prices, MissingPrice::Pessimistic).unwrap();
        assert!(cv.filled > 0);
        assert!(cv.root_best <= rat(0, 1));
    }
}
