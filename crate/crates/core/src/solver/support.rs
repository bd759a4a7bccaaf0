use alloc::vec;
use alloc::vec::Vec;

use num_traits::Signed;

use crate::game::{continuation_values, BehaviourStrategy, GameTree, MissingPrice};
use crate::pricing::{bayes_beliefs, expected_value, price_from_beliefs, rational_prices, BeliefSystem, FlowProbabilities, PricingSystem};
use crate::scalar::{Rational, Scalar};

use super::linalg::{grid_roots, levenberg_marquardt};
use super::model::{pattern_strategy, Model};
use super::{exact_parts, Arithmetic, CertificateFlag, EquilibriumCertificate, SolverConfig, SolverError};

/// Ambiguous unreached flows searched exhaustively when completing prices.
const MAX_AMBIGUOUS: usize = 12;
/// Smallest mixing weight accepted as part of a support.
const MIN_WEIGHT: f64 = 1e-7;

/// All equilibria of a single-period game found by enumerating support
/// profiles.
///
/// Supports are pruned to profiles where a higher expected value never
/// trades less. Pure profiles are verified exactly; mixed ones are solved on
/// their indifference conditions in floating point. Prices on flows the
/// strategy never reaches are completed with deterrent prices.
pub fn support_enumeration_single_period(tree: &GameTree, config: &SolverConfig) -> Result<Vec<EquilibriumCertificate>, SolverError> {
    if tree.horizon() != 1 {
        return Err(SolverError::NotSinglePeriod);
    }
    let k = tree.n_trades();
    let nodes: Vec<usize> = tree.period_nodes(1).collect();
    let mut order = nodes.clone();
    let spec = tree.spec();
    let mean = |n: usize| spec.cell_mean(1, tree.node(n).cell).clone();
    order.sort_by(|a, b| mean(*b).cmp(&mean(*a)).then(a.cmp(b)));
    let groups: Vec<Vec<usize>> = order.iter().fold(Vec::new(), |mut acc: Vec<Vec<usize>>, &n| {
        match acc.last_mut() {
            Some(g) if mean(g[0]) == mean(n) => g.push(n),
            _ => acc.push(vec![n]),
        }
        acc
    });
    let count = count_profiles(k, &groups.iter().map(Vec::len).collect::<Vec<_>>());
    if count > config.support_cap {
        return Err(SolverError::SupportCapExceeded { count, cap: config.support_cap });
    }

    let mut found: Vec<EquilibriumCertificate> = Vec::new();
    let mut profile = vec![0u64; nodes.len()];
    let mut visit = |profile: &[u64]| {
        let support: Vec<Vec<usize>> = profile.iter().map(|&m| (0..k).filter(|x| m >> x & 1 == 1).collect()).collect();
        let candidates = if support.iter().all(|s| s.len() == 1) {
            pure_candidate(tree, &support).into_iter().collect()
        } else {
            mixed_candidates(tree, &support)
        };
        for cert in candidates {
            let fresh = cert.strategy.to_f64();
            if !found.iter().any(|c| c.strategy.to_f64().distance(&fresh) <= 1e-6) {
                found.push(cert);
            }
        }
    };
    enumerate(k, &groups, 0, 0, (k - 1) as u32, k as u32, &mut profile, &mut visit);
    Ok(found)
}

fn pow_sat(base: u128, exp: usize) -> u128 {
    (0..exp).fold(1u128, |acc, _| acc.saturating_mul(base))
}

/// Number of support profiles where every node of a group trades no more
/// than the smallest trade of any group before it.
fn count_profiles(k: usize, groups: &[usize]) -> u128 {
    if k >= 127 {
        return u128::MAX;
    }
    // within(b, m): nonempty subsets of {m..=b}.
    let within = |b: usize, m: usize| if m > b { 0 } else { (1u128 << (b - m + 1)) - 1 };
    let mut ways = vec![0u128; k];
    ways[k - 1] = 1;
    for &size in groups {
        let mut next = vec![0u128; k];
        for b in 0..k {
            if ways[b] == 0 {
                continue;
            }
            for m in 0..=b {
                let exact = pow_sat(within(b, m), size).saturating_sub(pow_sat(within(b, m + 1), size));
                next[m] = next[m].saturating_add(ways[b].saturating_mul(exact));
            }
        }
        ways = next;
    }
    ways.iter().fold(0u128, |a, w| a.saturating_add(*w))
}

#[allow(clippy::too_many_arguments)]
fn enumerate(
    k: usize,
    groups: &[Vec<usize>],
    group: usize,
    member: usize,
    bound: u32,
    group_min: u32,
    profile: &mut [u64],
    visit: &mut impl FnMut(&[u64]),
) {
    if group == groups.len() {
        visit(profile);
        return;
    }
    if member == groups[group].len() {
        let bound = bound.min(group_min);
        enumerate(k, groups, group + 1, 0, bound, k as u32, profile, visit);
        return;
    }
    let node = groups[group][member];
    let top = (1u64 << (bound + 1)) - 1;
    for mask in 1..=top {
        profile[node] = mask;
        let lowest = mask.trailing_zeros();
        enumerate(k, groups, group, member + 1, bound, group_min.min(lowest), profile, visit);
    }
}

/// Which extreme each unreached flow takes in a completion.
struct Completion {
    /// `(flow, high)` for flows only buys or only sells can produce.
    forced: Vec<(usize, bool)>,
    /// `(flow, default high)` for flows both sides can produce.
    ambiguous: Vec<(usize, bool)>,
}

fn completion(tree: &GameTree, reached: &[bool]) -> Completion {
    let spec = tree.spec();
    let mut forced = Vec::new();
    let mut ambiguous = Vec::new();
    for (flow, _) in reached.iter().enumerate().filter(|(_, r)| !**r) {
        let y = &tree.flows()[flow];
        let (mut buy, mut sell) = (false, false);
        let mut tilt = Rational::default();
        for x in spec.trades() {
            for (z, pz) in spec.noise().iter().zip(spec.noise_probs()) {
                if &(x + z) == y {
                    buy |= x.is_positive();
                    sell |= x.is_negative();
                    tilt += x * pz;
                }
            }
        }
        match (buy, sell) {
            (true, true) => ambiguous.push((flow, !tilt.is_negative())),
            (false, true) => forced.push((flow, false)),
            _ => forced.push((flow, true)),
        }
    }
    Completion { forced, ambiguous }
}

/// Completed price systems, the default sign rule first, then every flip of
/// the ambiguous flows.
fn completions<S: Scalar>(tree: &GameTree, prices: &PricingSystem<S>, reached: &[bool]) -> impl Iterator<Item = PricingSystem<S>> {
    let c = completion(tree, reached);
    let spec = tree.spec();
    let (hi, lo) = (S::from_rational(spec.max_value()), S::from_rational(spec.min_value()));
    let variants: u64 = if c.ambiguous.len() <= MAX_AMBIGUOUS { 1 << c.ambiguous.len() } else { 1 };
    let base = prices.clone();
    (0..variants).map(move |mask| {
        let mut p = base.clone();
        let pick = |high: bool| if high { hi.clone() } else { lo.clone() };
        for &(flow, high) in &c.forced {
            p.set(1, flow, pick(high));
        }
        for (i, &(flow, high)) in c.ambiguous.iter().enumerate() {
            p.set(1, flow, pick(high ^ (mask >> i & 1 == 1)));
        }
        p
    })
}

/// Beliefs: Bayes on reached flows, and on the rest the two-point mixture of
/// the extreme states that prices the flow as given.
fn beliefs_for<S: Scalar>(tree: &GameTree, probs: &FlowProbabilities<S>, prices: &PricingSystem<S>) -> BeliefSystem<S> {
    let spec = tree.spec();
    let n = spec.n_states();
    let mut beliefs = bayes_beliefs(tree, probs);
    let (hi, lo) = (S::from_rational(spec.max_value()), S::from_rational(spec.min_value()));
    for flow in 0..prices.n_flows(1) {
        if beliefs.get(1, flow).is_some() {
            continue;
        }
        let p = prices.get(1, flow).expect("complete").clone();
        let mut b = vec![S::zero(); n];
        if hi == lo {
            b[0] = S::one();
        } else {
            let w = (p - lo.clone()) / (hi.clone() - lo.clone());
            b[n - 1] = S::one() - w.clone();
            b[0] = b[0].clone() + w;
        }
        beliefs.set(1, flow, b).expect("valid belief");
    }
    beliefs
}

fn reached_flows<S: Scalar>(probs: &FlowProbabilities<S>) -> Vec<bool> {
    (0..probs.n_flows(1)).map(|f| probs.is_reached(1, f)).collect()
}

fn pure_candidate(tree: &GameTree, support: &[Vec<usize>]) -> Option<EquilibriumCertificate> {
    let xi: BehaviourStrategy = BehaviourStrategy::pure(tree, |n| support[n][0]);
    let probs = FlowProbabilities::compute(tree, &xi);
    let reached = reached_flows(&probs);
    let partial = rational_prices(tree, &xi);
    let needs_completion = reached.iter().any(|r| !r);
    for prices in completions(tree, &partial, &reached) {
        let cv = continuation_values(tree, &xi, &prices, MissingPrice::Error).ok()?;
        if (0..tree.n_nodes()).all(|n| cv.gain(n) == Rational::default()) {
            let beliefs = beliefs_for(tree, &probs, &prices);
            return Some(EquilibriumCertificate {
                arithmetic: Arithmetic::Exact,
                strategy: xi,
                beliefs,
                prices,
                trace: Vec::new(),
                flags: if needs_completion { vec![CertificateFlag::CompletedPrices] } else { Vec::new() },
            });
        }
    }
    None
}

/// Strategy with `params` as the weights of all but the first trade of
/// each support.
fn weighted(tree: &GameTree, support: &[Vec<usize>], params: &[f64]) -> BehaviourStrategy<f64> {
    let k = tree.n_trades();
    let mut probs = vec![0.0; k * tree.n_nodes()];
    let mut i = 0;
    for (node, s) in support.iter().enumerate() {
        let mut rest = 1.0;
        for &x in &s[1..] {
            probs[node * k + x] = params[i];
            rest -= params[i];
            i += 1;
        }
        probs[node * k + s[0]] = rest;
    }
    BehaviourStrategy::from_flat(k, probs)
}

fn mixed_candidates(tree: &GameTree, support: &[Vec<usize>]) -> Vec<EquilibriumCertificate> {
    let mut model = Model::new(tree);
    model.domain = Some(model.domain_of(support));
    let unit = model.unit();
    let gaps = |params: &[f64]| -> Vec<f64> {
        let cv = model.values(&weighted(tree, support, params));
        let mut out = Vec::with_capacity(params.len());
        for (node, s) in support.iter().enumerate() {
            let q = cv.follow_row(node);
            for &x in &s[1..] {
                out.push((q[x] - q[s[0]]) / unit);
            }
        }
        out
    };
    let dim: usize = support.iter().map(|s| s.len() - 1).sum();
    let mut solutions: Vec<Vec<f64>> = Vec::new();
    if dim == 1 {
        for root in grid_roots(|w| gaps(&[w])[0], 1e-3, 1.0 - 1e-3, 1e-3, 1e-13) {
            solutions.push(vec![root]);
        }
    } else {
        let starts: Vec<Vec<f64>> = vec![
            pattern_strategy(tree, support, 0.0),
            skewed(tree, support, 0.8),
            skewed(tree, support, 0.2),
        ]
        .iter()
        .map(|xi| {
            support.iter().enumerate().flat_map(|(node, s)| s[1..].iter().map(move |&x| xi.row(node)[x])).collect::<Vec<f64>>()
        })
        .collect();
        for x0 in starts {
            let (params, res) = levenberg_marquardt(&gaps, x0, 1e-14, 100);
            if res <= 1e-10 {
                solutions.push(params);
            }
        }
    }
    let mut out = Vec::new();
    for params in solutions {
        if gaps(&params).iter().any(|g| g.abs() > 1e-9) {
            continue;
        }
        let xi = weighted(tree, support, &params);
        let interior = support.iter().enumerate().all(|(node, s)| s.iter().all(|&x| xi.row(node)[x] > MIN_WEIGHT));
        if !interior {
            continue;
        }
        if let Some(cert) = certify_float(tree, &xi, unit) {
            out.push(cert);
        }
    }
    out
}

/// Support weights tilted towards the first trade by `share`.
fn skewed(tree: &GameTree, support: &[Vec<usize>], share: f64) -> BehaviourStrategy<f64> {
    let k = tree.n_trades();
    let mut probs = vec![0.0; k * tree.n_nodes()];
    for (node, s) in support.iter().enumerate() {
        let rest = (1.0 - share) / (s.len() - 1) as f64;
        for (i, &x) in s.iter().enumerate() {
            probs[node * k + x] = if i == 0 { share } else { rest };
        }
    }
    BehaviourStrategy::from_flat(k, probs)
}

fn certify_float(tree: &GameTree, xi: &BehaviourStrategy<f64>, unit: f64) -> Option<EquilibriumCertificate> {
    let probs = FlowProbabilities::compute(tree, xi);
    let reached = reached_flows(&probs);
    let mut partial = PricingSystem::empty(tree);
    for flow in 0..probs.n_flows(1) {
        if let Some(b) = probs.conditional(1, flow) {
            partial.set(1, flow, expected_value(tree, &b));
        }
    }
    let needs_completion = reached.iter().any(|r| !r);
    for prices in completions(tree, &partial, &reached) {
        let cv = continuation_values(tree, xi, &prices, MissingPrice::Error).ok()?;
        if (0..tree.n_nodes()).all(|n| cv.gain(n) <= 1e-9 * unit) {
            let beliefs = beliefs_for(tree, &probs, &prices);
            let (strategy, beliefs) = exact_parts(tree, xi, &beliefs).ok()?;
            return Some(EquilibriumCertificate {
                arithmetic: Arithmetic::Float,
                prices: price_from_beliefs(tree, &beliefs),
                strategy,
                beliefs,
                trace: Vec::new(),
                flags: if needs_completion { vec![CertificateFlag::CompletedPrices] } else { Vec::new() },
            });
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtin;
    use crate::scalar::rat;
    use crate::GameSpec;

    #[test]
    fn profile_count_matches_enumeration() {
        for (k, groups) in [(3usize, vec![vec![0usize], vec![1], vec![2]]), (2, vec![vec![0, 1]]), (3, vec![vec![0], vec![1, 2]])] {
            let sizes: Vec<usize> = groups.iter().map(Vec::len).collect();
            let mut n = 0u128;
            let mut profile = vec![0u64; sizes.iter().sum()];
            enumerate(k, &groups, 0, 0, (k - 1) as u32, k as u32, &mut profile, &mut |_| n += 1);
            assert_eq!(count_profiles(k, &sizes), n);
        }
    }

    #[test]
    fn example_3_1_unique_equilibrium() {
        let tree = GameTree::build(&builtin::example_3_1()).unwrap();
        let found = support_enumeration_single_period(&tree, &SolverConfig::default()).unwrap();
        assert_eq!(found.len(), 1);
        let cert = &found[0];
        assert_eq!(cert.arithmetic, Arithmetic::Exact);
        assert_eq!(cert.strategy, builtin::example_3_1_strategy(&tree));
        assert_eq!(cert.prices, builtin::example_3_1_prices(&tree));
        assert!(cert.flags.is_empty());
    }

    #[test]
    fn symmetric_game_has_mirror_equilibrium() {
        let spec = GameSpec::new(
            1,
            vec![rat(1, 1), rat(0, 1)],
            vec![vec![vec![0], vec![1]]],
            vec![rat(1, 2); 2],
            vec![rat(-1, 1), rat(0, 1), rat(1, 1)],
            vec![rat(-1, 1), rat(0, 1), rat(1, 1)],
            vec![rat(1, 3); 3],
        )
        .unwrap();
        let tree = GameTree::build(&spec).unwrap();
        let found = support_enumeration_single_period(&tree, &SolverConfig::default()).unwrap();
        assert!(!found.is_empty());
        let mirrored = found.iter().any(|c| {
            let xi = c.strategy.to_f64();
            (0..3).all(|x| (xi.row(0)[x] - xi.row(1)[2 - x]).abs() < 1e-6)
        });
        assert!(mirrored);
    }

    #[test]
    fn rejects_two_periods_and_caps() {
        let tree = GameTree::build(&builtin::example_2_1(rat(1, 8))).unwrap();
        assert_eq!(support_enumeration_single_period(&tree, &SolverConfig::default()).unwrap_err(), SolverError::NotSinglePeriod);
        let tree = GameTree::build(&builtin::example_3_1()).unwrap();
        let config = SolverConfig { support_cap: 3, ..SolverConfig::default() };
        assert!(matches!(support_enumeration_single_period(&tree, &config), Err(SolverError::SupportCapExceeded { .. })));
    }
}
