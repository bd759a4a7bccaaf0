use alloc::collections::VecDeque;
use alloc::vec::Vec;


use crate::error::EvalError;
use crate::game::{continuation_values, BehaviourStrategy, GameTree, MissingPrice, NodeId};
use crate::pricing::{bayes_beliefs, price_from_beliefs, BeliefSystem, FlowProbabilities};
use crate::scalar::Scalar;

use super::model::{argmax, near_optimal, polish, support_of, Model};
use super::{exact_parts, Arithmetic, CertificateFlag, EquilibriumCertificate, SolverConfig, SolverError, TracePoint};

/// A fixed point of the ε-perturbed best-reply correspondence.
#[derive(Debug, Clone, PartialEq)]
pub struct FixedPoint {
    pub strategy: BehaviourStrategy<f64>,
    pub beliefs: BeliefSystem<f64>,
    /// Largest gain any node could get by re-optimising within the ε-simplex.
    pub residual: f64,
    /// Damped and logit sweeps used.
    pub iterations: usize,
    pub converged: bool,
    pub used_logit: bool,
}

/// Perturbed best reply at one node: `eps` on every suboptimal trade, the
/// rest spread evenly over the optimal ones.
pub fn best_reply_eps<S: Scalar>(
    tree: &GameTree,
    strategy: &BehaviourStrategy<S>,
    beliefs: &BeliefSystem<S>,
    node: NodeId,
    eps: &S,
) -> Result<Vec<S>, SolverError> {
    check_eps(eps.to_f64(), tree.n_trades())?;
    if node >= tree.n_nodes() {
        return Err(EvalError::StrategyShape(alloc::format!("node {node} out of range")).into());
    }
    let prices = price_from_beliefs(tree, beliefs);
    let cv = continuation_values(tree, strategy, &prices, MissingPrice::Error)?;
    let tie = if S::EXACT { 0.0 } else { 1e-11 * unit(tree) };
    Ok(purify(cv.follow_row(node), eps, tie))
}

fn purify<S: Scalar>(q: &[S], eps: &S, tie: f64) -> Vec<S> {
    let max = q.iter().cloned().fold(q[0].clone(), |a, b| a.max_val(b));
    let optimal: Vec<bool> = q
        .iter()
        .map(|v| if S::EXACT { *v == max } else { (max.clone() - v.clone()).to_f64() <= tie })
        .collect();
    let n_opt = optimal.iter().filter(|&&o| o).count();
    let k = q.len();
    let share = (S::one() - S::from_usize(k - n_opt) * eps.clone()) / S::from_usize(n_opt);
    optimal.iter().map(|&o| if o { share.clone() } else { eps.clone() }).collect()
}

fn check_eps(eps: f64, k: usize) -> Result<(), SolverError> {
    if !(eps > 0.0) || eps * k as f64 >= 1.0 {
        return Err(SolverError::EpsilonOutOfRange { eps, n_trades: k });
    }
    Ok(())
}

fn unit(tree: &GameTree) -> f64 {
    let s = super::payoff_scale(tree);
    if s > 0.0 {
        s
    } else {
        1.0
    }
}

/// Moves a strategy into the ε-simplex, keeping its shape on free mass.
fn into_simplex(xi: &BehaviourStrategy<f64>, eps: f64) -> BehaviourStrategy<f64> {
    let k = xi.n_trades();
    let mut out = xi.clone();
    for node in 0..xi.n_nodes() {
        let row = out.row_mut(node);
        let total: f64 = row.iter().map(|p| p.max(0.0)).sum();
        for p in row.iter_mut() {
            *p = eps + (1.0 - k as f64 * eps) * p.max(0.0) / total;
        }
    }
    out
}

fn logit(q: &[f64], temperature: f64, eps: f64) -> Vec<f64> {
    let max = q.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = q.iter().map(|v| ((v - max) / temperature).exp()).collect();
    let total: f64 = w.iter().sum();
    let free = 1.0 - q.len() as f64 * eps;
    w.iter().map(|x| eps + free * x / total).collect()
}

fn beliefs_of(tree: &GameTree, xi: &BehaviourStrategy<f64>) -> BeliefSystem<f64> {
    bayes_beliefs(tree, &FlowProbabilities::compute(tree, xi))
}

/// Fixed point of the ε-perturbed game by damped simultaneous best replies,
/// falling back to annealed logit smoothing when best replies cycle, then
/// refined on the indifference conditions of its support.
///
/// Never fails silently: a point that misses the residual tolerance comes
/// back with `converged == false`.
pub fn fixed_point_eps(
    tree: &GameTree,
    eps: f64,
    init: Option<&BehaviourStrategy<f64>>,
    config: &SolverConfig,
) -> Result<FixedPoint, SolverError> {
    check_eps(eps, tree.n_trades())?;
    config.validate(tree.n_trades())?;
    if let Some(init) = init {
        init.check_shape(tree)?;
    }
    let mut model = Model::new(tree);
    Ok(solve_level(&mut model, eps, init, config))
}

fn solve_level(model: &mut Model<'_>, eps: f64, init: Option<&BehaviourStrategy<f64>>, config: &SolverConfig) -> FixedPoint {
    let tree = model.tree;
    let unit = model.unit();
    let accept = config.residual_tol * unit;
    let finish = |model: &Model<'_>, xi: BehaviourStrategy<f64>, iterations: usize, used_logit: bool| {
        let cv = model.values(&xi);
        let residual = model.residual(&xi, &cv, eps).max(0.0);
        FixedPoint { beliefs: beliefs_of(tree, &xi), strategy: xi, residual, iterations, converged: residual <= accept, used_logit }
    };

    let mut xi = match init {
        Some(s) => into_simplex(s, eps),
        None => BehaviourStrategy::uniform(tree),
    };

    let warm = xi.clone();

    // Damped best replies with cycle detection.
    let tie = 1e-11 * unit;
    let k = tree.n_trades();
    let mut history: VecDeque<Vec<bool>> = VecDeque::new();
    let mut iterations = 0;
    let mut settled = false;
    for _ in 0..config.max_iters {
        iterations += 1;
        let cv = model.values(&xi);
        let mut pattern = Vec::with_capacity(k * tree.n_nodes());
        let mut change: f64 = 0.0;
        for node in 0..tree.n_nodes() {
            let br = purify(cv.follow_row(node), &eps, tie);
            pattern.extend(br.iter().map(|p| *p > eps));
            let row = xi.row_mut(node);
            for (p, b) in row.iter_mut().zip(&br) {
                let next = (1.0 - config.damping) * *p + config.damping * b;
                change = change.max((next - *p).abs());
                *p = next;
            }
        }
        if change <= config.fixed_point_tol {
            settled = true;
            break;
        }
        let cycling = history.iter().rev().skip(1).any(|h| *h == pattern) && history.back() != Some(&pattern);
        if cycling {
            break;
        }
        history.push_back(pattern);
        if history.len() > config.oscillation_window {
            history.pop_front();
        }
    }
    if settled {
        let fp = finish(model, xi.clone(), iterations, false);
        if fp.converged || !config.polish {
            return fp;
        }
    }
    if config.polish && init.is_some() {
        if let Some(p) = polish(model, &warm, eps, support_of(&warm, eps, 1e-7)) {
            let fp = finish(model, p, iterations, false);
            if fp.converged {
                return fp;
            }
        }
        xi = warm.clone();
    }

    // Annealed logit smoothing; warm starts first try a short anneal from a
    // low temperature.
    let full = config.logit_temperature * unit;
    if init.is_some() && config.polish {
        let mut warm = xi.clone();
        if let Some(fp) = anneal(model, &mut warm, eps, full * WARM_TEMPERATURE, config, &mut iterations, &finish) {
            return fp;
        }
    }
    if let Some(fp) = anneal(model, &mut xi, eps, full, config, &mut iterations, &finish) {
        return fp;
    }
    let smoothed = finish(model, xi.clone(), iterations, true);
    if smoothed.converged || !config.polish {
        return smoothed;
    }

    let cv = model.values(&xi);
    let guesses = [support_of(&xi, eps, 1e-6), near_optimal(&cv, tree.n_nodes(), 1e-7 * unit), support_of(&xi, eps, 1e-3)];
    let mut best = smoothed;
    for guess in guesses {
        if let Some(p) = polish(model, &xi, eps, guess) {
            let fp = finish(model, p, iterations, true);
            if fp.converged {
                return fp;
            }
            if fp.residual < best.residual {
                best = fp;
            }
        }
    }
    best
}

/// Starting temperature of warm-started anneals, relative to the configured
/// one.
const WARM_TEMPERATURE: f64 = 1e-4;

/// Highest temperature, in payoff units, at which an anneal stage is
/// refined.
const POLISH_TEMPERATURE: f64 = 1e-2;

/// Logit annealing of `xi` from `start` down to `1e-9` payoff units. With
/// polishing on, settled stages below [`POLISH_TEMPERATURE`] end with a
/// refinement attempt and the first converged point is returned.
fn anneal(
    model: &mut Model<'_>,
    xi: &mut BehaviourStrategy<f64>,
    eps: f64,
    start: f64,
    config: &SolverConfig,
    iterations: &mut usize,
    finish: &dyn Fn(&Model<'_>, BehaviourStrategy<f64>, usize, bool) -> FixedPoint,
) -> Option<FixedPoint> {
    let tree = model.tree;
    let floor = 1e-9 * model.unit();
    let mut temperature = start;
    let mut step = config.damping;
    let mut tried: Vec<Vec<Vec<usize>>> = Vec::new();
    while temperature > floor {
        let mut last_change = f64::INFINITY;
        let mut settled = false;
        for _ in 0..config.logit_sweeps {
            *iterations += 1;
            let cv = model.values(xi);
            let mut change: f64 = 0.0;
            for node in 0..tree.n_nodes() {
                let target = logit(cv.follow_row(node), temperature, eps);
                let row = xi.row_mut(node);
                for (p, t) in row.iter_mut().zip(&target) {
                    let next = (1.0 - step) * *p + step * t;
                    change = change.max((next - *p).abs());
                    *p = next;
                }
            }
            if change < 1e-10 {
                settled = true;
                break;
            }
            if change > last_change {
                step = (step * 0.5).max(0.05);
            }
            last_change = change;
        }
        let support = support_of(xi, eps, 1e-6);
        if config.polish && settled && temperature <= POLISH_TEMPERATURE * model.unit() && !tried.contains(&support) {
            tried.push(support.clone());
            if let Some(p) = polish(model, xi, eps, support) {
                let fp = finish(model, p, *iterations, true);
                if fp.converged {
                    return Some(fp);
                }
            }
        }
        temperature *= 0.6;
    }
    None
}

/// Drops trades whose probability is at most `eps` (up to rounding) and
/// renormalises.
fn clamp(xi: &BehaviourStrategy<f64>, eps: f64) -> BehaviourStrategy<f64> {
    let mut out = xi.clone();
    let cut = eps * (1.0 + 1e-4) + 1e-10;
    for node in 0..xi.n_nodes() {
        let row = out.row_mut(node);
        let keep = argmax(row);
        for (x, p) in row.iter_mut().enumerate() {
            if *p <= cut && x != keep {
                *p = 0.0;
            }
        }
        let total: f64 = row.iter().sum();
        for p in row.iter_mut() {
            *p /= total;
        }
    }
    out
}

fn extrapolated_gain(tree: &GameTree, fp: &FixedPoint, eps: f64) -> f64 {
    let xi0 = clamp(&fp.strategy, eps);
    let mut model = Model::new(tree);
    model.fallback = Some(price_from_beliefs(tree, &fp.beliefs));
    model.gain(&xi0)
}

/// Sequential equilibrium by the ε-homotopy: fixed points along the schedule,
/// each warm-started from the previous, then extrapolated to ε = 0.
///
/// Beliefs on flows reached by the limit strategy are its Bayes conditionals;
/// elsewhere they are the beliefs of the last ε level.
pub fn sequential_equilibrium(tree: &GameTree, config: &SolverConfig) -> Result<EquilibriumCertificate, SolverError> {
    config.validate(tree.n_trades())?;
    let levels = config.epsilons(tree.n_trades())?;
    let mut model = Model::new(tree);
    let unit = model.unit();
    let mut trace: Vec<TracePoint> = Vec::with_capacity(levels.len());
    let mut prev: Option<BehaviourStrategy<f64>> = None;
    for &eps in &levels {
        let fp = solve_level(&mut model, eps, prev.as_ref(), config);
        let gain = extrapolated_gain(tree, &fp, eps);
        prev = Some(fp.strategy.clone());
        trace.push(TracePoint {
            eps,
            strategy: fp.strategy,
            beliefs: fp.beliefs,
            residual: fp.residual,
            iterations: fp.iterations,
            converged: fp.converged,
            extrapolated_gain: gain,
        });
    }
    let last = trace.last().expect("nonempty schedule");
    let mut flags = Vec::new();
    if !last.converged {
        flags.push(CertificateFlag::Unconverged);
    }
    let monotone_slack = 1e-6 * unit;
    if trace.windows(2).any(|w| w[1].extrapolated_gain > w[0].extrapolated_gain + monotone_slack) {
        flags.push(CertificateFlag::NonMonotoneTrace);
    }

    let mut limit = Model::new(tree);
    limit.fallback = Some(price_from_beliefs(tree, &last.beliefs));
    let clamped = clamp(&last.strategy, last.eps);
    let mut star = clamped.clone();
    if config.polish {
        let support = support_of(&clamped, 0.0, 0.0);
        match polish(&mut limit, &clamped, 0.0, support) {
            Some(p) => star = p,
            None => {
                if !flags.contains(&CertificateFlag::Unconverged) {
                    flags.push(CertificateFlag::Unconverged);
                }
            }
        }
    }

    // Beliefs: Bayes where the limit strategy reaches, trace beliefs elsewhere.
    let probs = FlowProbabilities::compute(tree, &star);
    let mut beliefs = last.beliefs.clone();
    for t in 1..=tree.horizon() {
        for flow in 0..probs.n_flows(t) {
            if let Some(b) = probs.conditional(t, flow) {
                beliefs.set(t, flow, b)?;
            }
        }
    }
    let prices = price_from_beliefs(tree, &beliefs);
    let cv = continuation_values(tree, &star, &prices, MissingPrice::Error)?;
    let final_gain = (0..tree.n_nodes()).map(|n| cv.gain(n)).fold(0.0, f64::max);
    if final_gain > 1e3 * config.residual_tol * unit && !flags.contains(&CertificateFlag::Unconverged) {
        flags.push(CertificateFlag::Unconverged);
    }

    let (strategy, beliefs) = exact_parts(tree, &star, &beliefs)?;
    Ok(EquilibriumCertificate {
        arithmetic: Arithmetic::Float,
        prices: price_from_beliefs(tree, &beliefs),
        strategy,
        beliefs,
        trace,
        flags,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtin;
    use crate::scalar::{rat, Rational};
    use alloc::vec;

    #[test]
    fn purification_examples() {
        let q = [rat(0, 1), rat(1, 2), rat(1, 1)];
        assert_eq!(purify(&q, &rat(1, 100), 0.0), vec![rat(1, 100), rat(1, 100), rat(98, 100)]);
        let q = vec![rat(1, 1); 3];
        assert_eq!(purify(&q, &rat(1, 100), 0.0), vec![rat(1, 3); 3]);
    }

    #[test]
    fn example_3_1_best_reply_waits_at_medium_value() {
        let tree = GameTree::build(&builtin::example_3_1()).unwrap();
        let xi: BehaviourStrategy = builtin::example_3_1_strategy(&tree);
        let prices = builtin::example_3_1_prices(&tree);
        let mut beliefs = BeliefSystem::<Rational>::empty(&tree);
        // Beliefs reproducing the equilibrium prices on all five flows.
        let probs = FlowProbabilities::compute(&tree, &xi);
        for f in 0..5 {
            beliefs.set(1, f, probs.conditional(1, f).unwrap()).unwrap();
        }
        assert_eq!(price_from_beliefs(&tree, &beliefs), prices);
        let br = best_reply_eps(&tree, &xi, &beliefs, 1, &rat(1, 100)).unwrap();
        assert_eq!(br, vec![rat(1, 100), rat(98, 100), rat(1, 100)]);
        assert!(best_reply_eps(&tree, &xi, &beliefs, 1, &rat(1, 2)).is_err());
    }

    #[test]
    fn trivial_game_converges_at_once() {
        let spec = crate::GameSpec::new(1, vec![rat(1, 1)], vec![vec![vec![0]]], vec![rat(1, 1)], vec![rat(-1, 1), rat(0, 1), rat(1, 1)], vec![rat(-1, 1), rat(1, 1)], vec![rat(1, 2); 2])
            .unwrap();
        let tree = GameTree::build(&spec).unwrap();
        let fp = fixed_point_eps(&tree, 0.01, None, &SolverConfig::default()).unwrap();
        assert!(fp.converged);
        assert_eq!(fp.iterations, 1);
        assert_eq!(fp.residual, 0.0);
    }

    #[test]
    fn example_3_1_fixed_point() {
        let tree = GameTree::build(&builtin::example_3_1()).unwrap();
        let eps = 1e-6;
        let fp = fixed_point_eps(&tree, eps, None, &SolverConfig::default()).unwrap();
        assert!(fp.converged, "residual {}", fp.residual);
        assert!(fp.residual <= 1e-8);
        let target: BehaviourStrategy<f64> = builtin::example_3_1_strategy(&tree);
        assert!(fp.strategy.distance(&target) <= 3.0 * eps);
    }

    #[test]
    fn example_2_1_fixed_point_mixes() {
        let tree = GameTree::build(&builtin::example_2_1(rat(1, 8))).unwrap();
        let fp = fixed_point_eps(&tree, 1e-6, None, &SolverConfig::default()).unwrap();
        assert!(fp.converged, "residual {}", fp.residual);
        let alpha = fp.strategy.row(0)[1];
        assert!((alpha - 0.77464).abs() < 1e-3, "alpha {alpha}");
    }

    #[test]
    fn example_2_1_sequential() {
        let tree = GameTree::build(&builtin::example_2_1(rat(1, 8))).unwrap();
        let cert = sequential_equilibrium(&tree, &SolverConfig::default()).unwrap();
        assert!(cert.is_converged(), "{:?}", cert.flags);
        let alpha = cert.strategy.to_f64().row(0)[1];
        assert!((alpha - 0.7746420901).abs() < 1e-4, "alpha {alpha}");
        assert!(cert.prices.is_complete());
        // S_2(0, 1): flows are (-1, 0, 1, 2), so (0, 1) is index 1 * 4 + 2.
        let s = cert.prices.get(2, 6).unwrap().to_f64();
        assert!(s > 0.0 && s < 1.0);
    }

    #[test]
    fn example_3_1_sequential() {
        let tree = GameTree::build(&builtin::example_3_1()).unwrap();
        let cert = sequential_equilibrium(&tree, &SolverConfig::default()).unwrap();
        assert!(cert.is_converged(), "{:?}", cert.flags);
        let target: BehaviourStrategy<f64> = builtin::example_3_1_strategy(&tree);
        assert!(cert.strategy.to_f64().distance(&target) <= 1e-9);
        let expected = builtin::example_3_1_prices(&tree);
        for f in 0..5 {
            let got = cert.prices.get(1, f).unwrap().to_f64();
            let want = expected.get(1, f).unwrap().to_f64();
            assert!((got - want).abs() < 1e-9, "flow {f}: {got} vs {want}");
        }
    }
}
