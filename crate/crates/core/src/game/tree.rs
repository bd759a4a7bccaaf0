use alloc::vec;
use alloc::vec::Vec;

use crate::error::{EvalError, SpecError};
use crate::game::spec::GameSpec;
use crate::scalar::Rational;

/// Index of an insider decision node (X-node).
pub type NodeId = usize;

/// Size guard for [`GameTree::build`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TreeLimits {
    pub max_outcomes: u128,
}

impl Default for TreeLimits {
    fn default() -> Self {
        Self { max_outcomes: 10_000_000 }
    }
}

/// The edge leading into a node: the decision node it came from, plus the
/// insider trade and noise indices chosen there.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Edge {
    pub node: NodeId,
    pub trade: usize,
    pub noise: usize,
}

/// An insider decision node, the history `(I_1, x_1, z_1, ..., I_t)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecisionNode {
    /// 1-based trading round.
    pub period: usize,
    /// Index of the information cell in the partition of `period`.
    pub cell: usize,
    pub parent: Option<Edge>,
    /// Mixed-radix index of the order flow `(y_1, ..., y_{t-1})`.
    pub flow_prefix: usize,
    child_base: usize,
}

/// Any node of the game tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NodeKey {
    Root,
    /// Information revelation after trade and noise at a decision node.
    Revelation(Edge),
    Decision(NodeId),
    /// Noise move after the insider chose `trade` at `node`.
    Noise { node: NodeId, trade: usize },
    Terminal(usize),
}

/// A terminal node: the last decision node, its trade and noise, and the
/// revealed state.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Outcome {
    pub id: usize,
    pub last: NodeId,
    pub trade: usize,
    pub noise: usize,
    pub state: usize,
}

/// The game tree of a [`GameSpec`], with decision nodes interned in
/// breadth-first order (children always have larger ids than parents).
#[derive(Debug, Clone)]
pub struct GameTree {
    spec: GameSpec,
    nodes: Vec<DecisionNode>,
    /// First node id of each period, plus one past the end.
    period_start: Vec<usize>,
    n_outcomes: usize,
    flows: Vec<Rational>,
    flow_of: Vec<usize>,
}

impl GameTree {
    pub fn build(spec: &GameSpec) -> Result<Self, SpecError> {
        Self::build_with(spec, TreeLimits::default())
    }

    pub fn build_with(spec: &GameSpec, limits: TreeLimits) -> Result<Self, SpecError> {
        let horizon = spec.horizon();
        let k = spec.trades().len();
        let l = spec.noise().len();
        let branch = (k * l) as u128;

        // Count before allocating.
        let mut per_cell: Vec<u128> = vec![1; spec.partition(1).len()];
        let mut total_nodes: u128 = per_cell.len() as u128;
        for t in 1..horizon {
            let mut next = vec![0u128; spec.partition(t + 1).len()];
            for (c, &count) in per_cell.iter().enumerate() {
                for &child in spec.child_cells(t, c) {
                    next[child] = next[child].saturating_add(count.saturating_mul(branch));
                }
            }
            per_cell = next;
            total_nodes = total_nodes.saturating_add(per_cell.iter().fold(0u128, |a, &b| a.saturating_add(b)));
        }
        let mut outcomes: u128 = 0;
        for (c, &count) in per_cell.iter().enumerate() {
            let size = spec.partition(horizon).cells()[c].len() as u128;
            outcomes = outcomes.saturating_add(count.saturating_mul(branch).saturating_mul(size));
        }
        if outcomes > limits.max_outcomes || total_nodes > limits.max_outcomes {
            return Err(SpecError::TooLarge { outcomes, cap: limits.max_outcomes });
        }

        let mut flows: Vec<Rational> = Vec::with_capacity(k * l);
        for x in spec.trades() {
            for z in spec.noise() {
                flows.push(x + z);
            }
        }
        flows.sort();
        flows.dedup();
        let mut flow_of = Vec::with_capacity(k * l);
        for x in spec.trades() {
            for z in spec.noise() {
                flow_of.push(flows.binary_search(&(x + z)).expect("flow present"));
            }
        }
        let m = flows.len();

        let mut nodes: Vec<DecisionNode> = Vec::with_capacity(total_nodes as usize);
        for c in 0..spec.partition(1).len() {
            nodes.push(DecisionNode { period: 1, cell: c, parent: None, flow_prefix: 0, child_base: 0 });
        }
        let mut period_start = vec![0, nodes.len()];
        let mut n_outcomes = 0usize;
        let mut id = 0;
        while id < nodes.len() {
            let (period, cell, prefix) = (nodes[id].period, nodes[id].cell, nodes[id].flow_prefix);
            if period < horizon {
                nodes[id].child_base = nodes.len();
                let kids = spec.child_cells(period, cell).to_vec();
                for x in 0..k {
                    for z in 0..l {
                        let y = flow_of[x * l + z];
                        for &child in &kids {
                            nodes.push(DecisionNode {
                                period: period + 1,
                                cell: child,
                                parent: Some(Edge { node: id, trade: x, noise: z }),
                                flow_prefix: prefix * m + y,
                                child_base: 0,
                            });
                        }
                    }
                }
            } else {
                nodes[id].child_base = n_outcomes;
                n_outcomes += k * l * spec.partition(period).cells()[cell].len();
            }
            id += 1;
            if id == *period_start.last().unwrap() && id < nodes.len() {
                period_start.push(nodes.len());
            }
        }
        debug_assert_eq!(period_start.len(), horizon + 1);

        Ok(Self { spec: spec.clone(), nodes, period_start, n_outcomes, flows, flow_of })
    }

    pub fn spec(&self) -> &GameSpec {
        &self.spec
    }

    pub fn horizon(&self) -> usize {
        self.spec.horizon()
    }

    pub fn n_trades(&self) -> usize {
        self.spec.trades().len()
    }

    pub fn n_noise(&self) -> usize {
        self.spec.noise().len()
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn n_outcomes(&self) -> usize {
        self.n_outcomes
    }

    pub fn node(&self, id: NodeId) -> &DecisionNode {
        &self.nodes[id]
    }

    pub fn nodes(&self) -> &[DecisionNode] {
        &self.nodes
    }

    /// Decision node ids of a 1-based period.
    pub fn period_nodes(&self, period: usize) -> core::ops::Range<usize> {
        self.period_start[period - 1]..self.period_start[period]
    }

    /// The distinct aggregate order flows `x + z`, ascending.
    pub fn flows(&self) -> &[Rational] {
        &self.flows
    }

    pub fn n_flows(&self) -> usize {
        self.flows.len()
    }

    /// Index in [`flows`](Self::flows) of `x + z`.
    pub fn flow_index(&self, trade: usize, noise: usize) -> usize {
        self.flow_of[trade * self.n_noise() + noise]
    }

    /// Number of flow histories of length `period`.
    pub fn n_flow_histories(&self, period: usize) -> usize {
        self.n_flows().pow(period as u32)
    }

    /// Mixed-radix index of the flow history ending with the trade and noise
    /// chosen at `node`.
    pub fn flow_after(&self, node: NodeId, trade: usize, noise: usize) -> usize {
        self.nodes[node].flow_prefix * self.n_flows() + self.flow_index(trade, noise)
    }

    /// Decodes a mixed-radix flow index of the given length.
    pub fn decode_flow(&self, period: usize, mut index: usize) -> Vec<usize> {
        let m = self.n_flows();
        let mut ys = vec![0; period];
        for slot in ys.iter_mut().rev() {
            *slot = index % m;
            index /= m;
        }
        ys
    }

    pub fn encode_flow(&self, ys: &[usize]) -> Result<usize, EvalError> {
        let m = self.n_flows();
        if ys.is_empty() || ys.len() > self.horizon() {
            return Err(EvalError::BadFlow(alloc::format!("length {} outside 1..={}", ys.len(), self.horizon())));
        }
        let mut index = 0usize;
        for &y in ys {
            if y >= m {
                return Err(EvalError::BadFlow(alloc::format!("flow index {y} outside 0..{m}")));
            }
            index = index * m + y;
        }
        Ok(index)
    }

    /// Child decision node after `(trade, noise)` and revelation of the
    /// `j`-th refining cell. `None` in the last period.
    pub fn child(&self, node: NodeId, trade: usize, noise: usize, j: usize) -> Option<NodeId> {
        let n = &self.nodes[node];
        if n.period >= self.horizon() {
            return None;
        }
        let m = self.spec.child_cells(n.period, n.cell).len();
        Some(n.child_base + (trade * self.n_noise() + noise) * m + j)
    }

    /// States of the information cell of a decision node.
    pub fn cell_states(&self, node: NodeId) -> &[usize] {
        let n = &self.nodes[node];
        &self.spec.partition(n.period).cells()[n.cell]
    }

    /// Outcome id for the last-period `node` with `state` revealed.
    pub fn outcome_id(&self, node: NodeId, trade: usize, noise: usize, state: usize) -> Option<usize> {
        let n = &self.nodes[node];
        if n.period != self.horizon() {
            return None;
        }
        let states = self.cell_states(node);
        let j = states.iter().position(|&s| s == state)?;
        Some(n.child_base + (trade * self.n_noise() + noise) * states.len() + j)
    }

    pub fn outcome(&self, id: usize) -> Result<Outcome, EvalError> {
        if id >= self.n_outcomes {
            return Err(EvalError::UnknownOutcome(id));
        }
        let last = self.period_nodes(self.horizon());
        let slice = &self.nodes[last.clone()];
        let pos = slice.partition_point(|n| n.child_base <= id) - 1;
        let node = last.start + pos;
        let states = self.cell_states(node);
        let local = id - self.nodes[node].child_base;
        let (pair, j) = (local / states.len(), local % states.len());
        Ok(Outcome { id, last: node, trade: pair / self.n_noise(), noise: pair % self.n_noise(), state: states[j] })
    }

    pub fn outcomes(&self) -> impl Iterator<Item = Outcome> + '_ {
        self.period_nodes(self.horizon()).flat_map(move |node| {
            let states = self.cell_states(node);
            let base = self.nodes[node].child_base;
            (0..self.n_trades() * self.n_noise() * states.len()).map(move |local| {
                let (pair, j) = (local / states.len(), local % states.len());
                Outcome { id: base + local, last: node, trade: pair / self.n_noise(), noise: pair % self.n_noise(), state: states[j] }
            })
        })
    }

    /// Decision path `(node, trade, noise)` of an outcome, first period first.
    pub fn path(&self, outcome: &Outcome) -> Vec<Edge> {
        let mut path = vec![Edge { node: outcome.last, trade: outcome.trade, noise: outcome.noise }];
        let mut cur = outcome.last;
        while let Some(edge) = self.nodes[cur].parent {
            path.push(edge);
            cur = edge.node;
        }
        path.reverse();
        path
    }

    /// Flow-index history `(y_1, ..., y_T)` of an outcome.
    pub fn outcome_flows(&self, outcome: &Outcome) -> Vec<usize> {
        self.path(outcome).iter().map(|e| self.flow_index(e.trade, e.noise)).collect()
    }

    /// `true` when `node` is `ancestor` or lies below it.
    pub fn is_descendant(&self, mut node: NodeId, ancestor: NodeId) -> bool {
        loop {
            if node == ancestor {
                return true;
            }
            if node < ancestor {
                return false;
            }
            match self.nodes[node].parent {
                Some(e) => node = e.node,
                None => return false,
            }
        }
    }

    /// Enumerates every node key of the tree by class:
    /// `(revelation, decision, noise, terminal)` counts.
    pub fn class_counts(&self) -> (usize, usize, usize, usize) {
        let k = self.n_trades();
        let l = self.n_noise();
        // The root plus one revelation node per (decision node, trade, noise).
        let revelation = 1 + self.nodes.len() * k * l;
        (revelation, self.nodes.len(), self.nodes.len() * k, self.n_outcomes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtin;
    use crate::scalar::rat;

    #[test]
    fn example_2_1_has_fourteen_decision_nodes() {
        let tree = GameTree::build(&builtin::example_2_1(rat(1, 8))).unwrap();
        assert_eq!(tree.n_nodes(), 14);
        assert_eq!(tree.period_nodes(1), 0..2);
        assert_eq!(tree.period_nodes(2), 2..14);
        assert_eq!(tree.n_outcomes(), 12 * 6);
        assert_eq!(tree.flows(), &[rat(-1, 1), rat(0, 1), rat(1, 1), rat(2, 1)][..]);
    }

    #[test]
    fn example_3_1_counts() {
        let tree = GameTree::build(&builtin::example_3_1()).unwrap();
        assert_eq!(tree.n_nodes(), 3);
        assert_eq!(tree.n_outcomes(), 27);
    }

    #[test]
    fn degenerate_tree() {
        let spec = GameSpec::new(1, vec![rat(1, 1)], vec![vec![vec![0]]], vec![rat(1, 1)], vec![rat(0, 1)], vec![rat(-1, 1), rat(1, 1)], vec![rat(1, 2); 2])
            .unwrap();
        let tree = GameTree::build(&spec).unwrap();
        assert_eq!(tree.n_nodes(), 1);
        assert_eq!(tree.n_outcomes(), 2);
    }

    #[test]
    fn outcome_decoding_matches_enumeration() {
        let tree = GameTree::build(&builtin::example_2_1(rat(1, 8))).unwrap();
        for (i, o) in tree.outcomes().enumerate() {
            assert_eq!(o.id, i);
            assert_eq!(tree.outcome(i).unwrap(), o);
            assert_eq!(tree.outcome_id(o.last, o.trade, o.noise, o.state), Some(i));
        }
        assert!(tree.outcome(tree.n_outcomes()).is_err());
    }

    #[test]
    fn flow_codes_round_trip() {
        let tree = GameTree::build(&builtin::example_2_1(rat(1, 8))).unwrap();
        for idx in 0..tree.n_flow_histories(2) {
            assert_eq!(tree.encode_flow(&tree.decode_flow(2, idx)).unwrap(), idx);
        }
    }

    #[test]
    fn size_cap_is_enforced() {
        let spec = builtin::example_2_1(rat(1, 8));
        let err = GameTree::build_with(&spec, TreeLimits { max_outcomes: 10 }).unwrap_err();
        assert_eq!(err, SpecError::TooLarge { outcomes: 72, cap: 10 });
    }
}
