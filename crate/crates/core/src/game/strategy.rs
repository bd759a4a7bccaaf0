use alloc::format;
use alloc::vec::Vec;

use crate::error::EvalError;
use crate::game::tree::{GameTree, NodeId};
use crate::scalar::{close, sum, Rational, Scalar};

/// Insider behaviour strategy: one probability vector over the trade grid
/// per decision node, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct BehaviourStrategy<S = Rational> {
    n_trades: usize,
    probs: Vec<S>,
}

impl<S: Scalar> BehaviourStrategy<S> {
    /// Validates one probability vector per decision node.
    pub fn new(tree: &GameTree, rows: Vec<Vec<S>>) -> Result<Self, EvalError> {
        if rows.len() != tree.n_nodes() {
            return Err(EvalError::StrategyShape(format!("{} rows for {} decision nodes", rows.len(), tree.n_nodes())));
        }
        let k = tree.n_trades();
        let mut probs = Vec::with_capacity(k * rows.len());
        for (node, row) in rows.into_iter().enumerate() {
            check_row(node, &row, k)?;
            probs.extend(row);
        }
        Ok(Self { n_trades: k, probs })
    }

    pub fn from_fn(tree: &GameTree, mut f: impl FnMut(NodeId) -> Vec<S>) -> Result<Self, EvalError> {
        Self::new(tree, (0..tree.n_nodes()).map(&mut f).collect())
    }

    pub fn uniform(tree: &GameTree) -> Self {
        let k = tree.n_trades();
        let p = S::one() / S::from_usize(k);
        Self { n_trades: k, probs: (0..k * tree.n_nodes()).map(|_| p.clone()).collect() }
    }

    /// Pure strategy from one trade index per decision node.
    pub fn pure(tree: &GameTree, choice: impl Fn(NodeId) -> usize) -> Self {
        let k = tree.n_trades();
        let mut probs = Vec::with_capacity(k * tree.n_nodes());
        for node in 0..tree.n_nodes() {
            let c = choice(node);
            probs.extend((0..k).map(|x| if x == c { S::one() } else { S::zero() }));
        }
        Self { n_trades: k, probs }
    }

    pub fn n_nodes(&self) -> usize {
        self.probs.len() / self.n_trades
    }

    pub fn n_trades(&self) -> usize {
        self.n_trades
    }

    pub fn row(&self, node: NodeId) -> &[S] {
        &self.probs[node * self.n_trades..(node + 1) * self.n_trades]
    }

    pub fn prob(&self, node: NodeId, trade: usize) -> &S {
        &self.probs[node * self.n_trades + trade]
    }

    /// Replaces one row after validating it.
    pub fn set_row(&mut self, node: NodeId, row: Vec<S>) -> Result<(), EvalError> {
        check_row(node, &row, self.n_trades)?;
        let k = self.n_trades;
        self.probs[node * k..(node + 1) * k].clone_from_slice(&row);
        Ok(())
    }

    pub(crate) fn row_mut(&mut self, node: NodeId) -> &mut [S] {
        let k = self.n_trades;
        &mut self.probs[node * k..(node + 1) * k]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[S]> {
        self.probs.chunks(self.n_trades)
    }

    /// `true` when every entry is strictly positive.
    pub fn is_completely_mixed(&self) -> bool {
        self.probs.iter().all(|p| *p > S::zero())
    }

    pub fn first_not_completely_mixed(&self) -> Option<NodeId> {
        self.probs.iter().position(|p| *p <= S::zero()).map(|i| i / self.n_trades)
    }

    /// Checks that the strategy fits `tree`.
    pub fn check_shape(&self, tree: &GameTree) -> Result<(), EvalError> {
        if self.n_trades != tree.n_trades() || self.n_nodes() != tree.n_nodes() {
            return Err(EvalError::StrategyShape(format!(
                "strategy is {}x{}, tree has {} nodes and {} trades",
                self.n_nodes(),
                self.n_trades,
                tree.n_nodes(),
                tree.n_trades()
            )));
        }
        Ok(())
    }

    pub fn map<T: Scalar>(&self, f: impl Fn(&S) -> T) -> BehaviourStrategy<T> {
        BehaviourStrategy { n_trades: self.n_trades, probs: self.probs.iter().map(f).collect() }
    }

    pub fn to_f64(&self) -> BehaviourStrategy<f64> {
        self.map(|p| p.to_f64())
    }

    /// Sup-norm distance to another strategy of the same shape.
    pub fn distance(&self, other: &Self) -> f64 {
        self.probs.iter().zip(&other.probs).map(|(a, b)| (a.clone() - b.clone()).abs_val().to_f64()).fold(0.0, f64::max)
    }

    pub(crate) fn from_flat(n_trades: usize, probs: Vec<S>) -> Self {
        Self { n_trades, probs }
    }
}

fn check_row<S: Scalar>(node: NodeId, row: &[S], k: usize) -> Result<(), EvalError> {
    if row.len() != k {
        return Err(EvalError::StrategyShape(format!("node {node}: {} entries for {k} trades", row.len())));
    }
    let slack = S::validation_slack();
    let negative = |p: &S| if S::EXACT { *p < S::zero() } else { p.to_f64().is_nan() || p.to_f64() < -slack };
    if row.iter().any(negative) {
        return Err(EvalError::StrategyShape(format!("node {node}: negative probability")));
    }
    if !close(&sum(row), &S::one(), slack) {
        return Err(EvalError::StrategyShape(format!("node {node}: probabilities sum to {}", sum(row))));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtin;
    use crate::scalar::rat;
    use alloc::vec;

    #[test]
    fn rows_must_sum_to_one_exactly() {
        let tree = GameTree::build(&builtin::example_3_1()).unwrap();
        let bad = vec![vec![rat(1, 3), rat(1, 3), rat(1, 4)]; 3];
        assert!(BehaviourStrategy::new(&tree, bad).is_err());
        let good = vec![vec![rat(1, 3); 3]; 3];
        let s = BehaviourStrategy::new(&tree, good).unwrap();
        assert!(s.is_completely_mixed());
        assert_eq!(s, BehaviourStrategy::uniform(&tree));
    }

    #[test]
    fn float_rows_get_slack() {
        let tree = GameTree::build(&builtin::example_3_1()).unwrap();
        let rows = vec![vec![0.1, 0.2, 0.7000000000001]; 3];
        assert!(BehaviourStrategy::<f64>::new(&tree, rows).is_ok());
        let rows = vec![vec![-0.1, 0.4, 0.7]; 3];
        assert!(BehaviourStrategy::<f64>::new(&tree, rows).is_err());
    }

    #[test]
    fn shape_is_checked() {
        let tree = GameTree::build(&builtin::example_3_1()).unwrap();
        assert!(BehaviourStrategy::new(&tree, vec![vec![rat(1, 1), rat(0, 1), rat(0, 1)]; 2]).is_err());
        let pure: BehaviourStrategy = BehaviourStrategy::pure(&tree, |n| 2 - n);
        assert_eq!(pure.row(0), &[rat(0, 1), rat(0, 1), rat(1, 1)][..]);
        assert_eq!(pure.first_not_completely_mixed(), Some(0));
    }
}
