use alloc::vec;
use alloc::vec::Vec;

use crate::game::{continuation_values, BehaviourStrategy, ContinuationValues, GameTree, MissingPrice};
use crate::pricing::{expected_value, FlowProbabilities, PricingSystem};

use super::linalg::levenberg_marquardt;

/// Floating evaluation of strategies against the prices they induce.
///
/// Flows inside the Bayes domain get the conditional expectation under the
/// strategy; other flows take `fallback` prices.
pub(crate) struct Model<'a> {
    pub tree: &'a GameTree,
    pub scale: f64,
    pub fallback: Option<PricingSystem<f64>>,
    /// Fixed Bayes domain; `None` means the flows reached right now.
    pub domain: Option<Vec<Vec<bool>>>,
}

impl<'a> Model<'a> {
    pub fn new(tree: &'a GameTree) -> Self {
        Self { tree, scale: super::payoff_scale(tree), fallback: None, domain: None }
    }

    /// Tolerance unit: the payoff scale, or one for games without stakes.
    pub fn unit(&self) -> f64 {
        if self.scale > 0.0 {
            self.scale
        } else {
            1.0
        }
    }

    pub fn prices(&self, xi: &BehaviourStrategy<f64>) -> PricingSystem<f64> {
        let probs = FlowProbabilities::compute(self.tree, xi);
        let mut prices = PricingSystem::empty(self.tree);
        for t in 1..=self.tree.horizon() {
            for flow in 0..probs.n_flows(t) {
                let m = probs.marginal(t, flow);
                let inside = match &self.domain {
                    Some(d) => d[t - 1][flow] && m != 0.0,
                    None => m > 0.0,
                };
                if inside {
                    let belief: Vec<f64> = probs.joint_row(t, flow).iter().map(|j| j / m).collect();
                    prices.set(t, flow, expected_value(self.tree, &belief));
                } else if let Some(p) = self.fallback.as_ref().and_then(|f| f.get(t, flow)) {
                    prices.set(t, flow, *p);
                }
            }
        }
        prices
    }

    pub fn values(&self, xi: &BehaviourStrategy<f64>) -> ContinuationValues<f64> {
        let prices = self.prices(xi);
        continuation_values(self.tree, xi, &prices, MissingPrice::Pessimistic).expect("shapes match")
    }

    /// Largest gain at any node from the best reply within the ε-simplex.
    pub fn residual(&self, xi: &BehaviourStrategy<f64>, cv: &ContinuationValues<f64>, eps: f64) -> f64 {
        let k = self.tree.n_trades() as f64;
        let mut worst: f64 = 0.0;
        for node in 0..self.tree.n_nodes() {
            let q = cv.follow_row(node);
            let max = q.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let best = eps * q.iter().sum::<f64>() + (1.0 - k * eps) * max;
            let got: f64 = xi.row(node).iter().zip(q).map(|(p, v)| p * v).sum();
            worst = worst.max(best - got);
        }
        worst
    }

    /// Largest one-shot deviation gain over all nodes.
    pub fn gain(&self, xi: &BehaviourStrategy<f64>) -> f64 {
        let cv = self.values(xi);
        self.residual(xi, &cv, 0.0)
    }

    /// Flows reached when each node mixes uniformly over its support.
    pub fn domain_of(&self, support: &[Vec<usize>]) -> Vec<Vec<bool>> {
        let xi = pattern_strategy(self.tree, support, 0.0);
        let probs = FlowProbabilities::compute(self.tree, &xi);
        (1..=self.tree.horizon()).map(|t| (0..probs.n_flows(t)).map(|f| probs.marginal(t, f) > 0.0).collect()).collect()
    }
}

/// `eps` on every trade plus the remaining mass spread uniformly on the support.
pub(crate) fn pattern_strategy(tree: &GameTree, support: &[Vec<usize>], eps: f64) -> BehaviourStrategy<f64> {
    let k = tree.n_trades();
    let mut probs = vec![eps; k * tree.n_nodes()];
    for (node, s) in support.iter().enumerate() {
        let share = (1.0 - k as f64 * eps) / s.len() as f64;
        for &x in s {
            probs[node * k + x] += share;
        }
    }
    BehaviourStrategy::from_flat(k, probs)
}

/// Free mass of each trade: `(xi - eps) / (1 - K eps)`.
pub(crate) fn free_weights(xi: &BehaviourStrategy<f64>, node: usize, eps: f64) -> Vec<f64> {
    let k = xi.n_trades() as f64;
    xi.row(node).iter().map(|p| (p - eps) / (1.0 - k * eps)).collect()
}

/// Trades carrying free mass above `threshold`; the heaviest when none does.
pub(crate) fn support_of(xi: &BehaviourStrategy<f64>, eps: f64, threshold: f64) -> Vec<Vec<usize>> {
    (0..xi.n_nodes())
        .map(|node| {
            let w = free_weights(xi, node, eps);
            let s: Vec<usize> = (0..w.len()).filter(|&x| w[x] > threshold).collect();
            if s.is_empty() {
                vec![argmax(&w)]
            } else {
                s
            }
        })
        .collect()
}

/// Trades whose value is within `tol` of the best.
pub(crate) fn near_optimal(cv: &ContinuationValues<f64>, n_nodes: usize, tol: f64) -> Vec<Vec<usize>> {
    (0..n_nodes)
        .map(|node| {
            let q = cv.follow_row(node);
            let max = q.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            (0..q.len()).filter(|&x| q[x] >= max - tol).collect()
        })
        .collect()
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i] > v[best] {
            best = i;
        }
    }
    best
}

/// Solves the indifference conditions on a fixed support profile at `eps`,
/// adjusting the support when weights turn negative or an excluded trade
/// becomes strictly better. Returns the refined strategy when all nodes end
/// up optimal within the ε-simplex.
pub(crate) fn polish(model: &mut Model<'_>, start: &BehaviourStrategy<f64>, eps: f64, mut support: Vec<Vec<usize>>) -> Option<BehaviourStrategy<f64>> {
    let tree = model.tree;
    let k = tree.n_trades();
    let unit = model.unit();
    let eq_tol = 1e-13 * unit;
    let opt_tol = 1e-11 * unit;
    let mut weights: Vec<Vec<f64>> = (0..tree.n_nodes()).map(|n| free_weights(start, n, eps)).collect();
    let mut seen: Vec<Vec<Vec<usize>>> = Vec::new();

    for _ in 0..24 {
        let mut key = support.clone();
        key.iter_mut().for_each(|s| s.sort_unstable());
        if seen.contains(&key) {
            return None;
        }
        seen.push(key);
        if eps == 0.0 {
            model.domain = Some(model.domain_of(&support));
        }
        // Order each support with its heaviest trade first; that trade is the
        // reference the others are compared against.
        for (node, s) in support.iter_mut().enumerate() {
            let w = &weights[node];
            s.sort_by(|a, b| w[*b].partial_cmp(&w[*a]).unwrap_or(core::cmp::Ordering::Equal).then(a.cmp(b)));
        }
        let mut x0 = Vec::new();
        for (node, s) in support.iter().enumerate() {
            let total: f64 = s.iter().map(|&x| weights[node][x].max(0.0)).sum();
            for &x in &s[1..] {
                let w = if total > 0.0 { weights[node][x].max(0.0) / total } else { 1.0 / s.len() as f64 };
                x0.push(w);
            }
        }
        let build = |params: &[f64]| -> BehaviourStrategy<f64> {
            let mut probs = vec![eps; k * tree.n_nodes()];
            let free = 1.0 - k as f64 * eps;
            let mut i = 0;
            for (node, s) in support.iter().enumerate() {
                let mut rest = 1.0;
                for &x in &s[1..] {
                    probs[node * k + x] += free * params[i];
                    rest -= params[i];
                    i += 1;
                }
                probs[node * k + s[0]] += free * rest;
            }
            BehaviourStrategy::from_flat(k, probs)
        };
        let model_ref: &Model<'_> = model;
        let equations = |params: &[f64]| -> Vec<f64> {
            let xi = build(params);
            let cv = model_ref.values(&xi);
            let mut out = Vec::with_capacity(params.len());
            for (node, s) in support.iter().enumerate() {
                let q = cv.follow_row(node);
                for &x in &s[1..] {
                    out.push((q[x] - q[s[0]]) / unit);
                }
            }
            out
        };
        let (params, res) = levenberg_marquardt(equations, x0, eq_tol / unit, 80);
        let xi = build(&params);
        let cv = model.values(&xi);

        let mut next = support.clone();
        let mut changed = false;
        for (node, s) in support.iter().enumerate() {
            let w = free_weights(&xi, node, eps);
            let q = cv.follow_row(node);
            let reference = q[s[0]];
            // At ε = 0 a vanishing weight changes which flows are reached, so
            // it leaves the support and the system is solved again.
            let floor = if eps == 0.0 && s.len() > 1 { 1e-9 } else { -1e-12 };
            if let Some(&bad) = s.iter().filter(|&&x| w[x] < floor).min_by(|a, b| w[**a].partial_cmp(&w[**b]).unwrap()) {
                next[node].retain(|&x| x != bad);
                changed = true;
                continue;
            }
            let outside = (0..k).filter(|x| !s.contains(x)).max_by(|a, b| q[*a].partial_cmp(&q[*b]).unwrap());
            if let Some(x) = outside {
                if q[x] > reference + opt_tol {
                    next[node].push(x);
                    changed = true;
                }
            }
        }
        weights = (0..tree.n_nodes()).map(|n| free_weights(&xi, n, eps)).collect();
        if !changed {
            if res > 1e-9 {
                return None;
            }
            // Snap tiny negative weights to zero.
            let mut clean = xi.clone();
            for node in 0..tree.n_nodes() {
                let row = clean.row_mut(node);
                for p in row.iter_mut() {
                    if *p < eps {
                        *p = eps;
                    }
                }
                let total: f64 = row.iter().sum();
                for p in row.iter_mut() {
                    *p /= total;
                }
            }
            return Some(clean);
        }
        support = next;
    }
    None
}
