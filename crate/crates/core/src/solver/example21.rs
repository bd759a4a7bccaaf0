use alloc::vec::Vec;

use crate::builtin::{example_2_1, example_2_1_alpha};
use crate::game::{continuation_values, BehaviourStrategy, GameTree, MissingPrice};
use crate::pricing::rational_prices;
use crate::scalar::Rational;
use crate::verifier::verify_kyle;

use super::linalg::grid_roots;
use super::SolverError;

/// First-period profits after `v = 1` when following the mixing family with
/// parameter `alpha`, both continuing optimally.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProfitPoint {
    pub alpha: f64,
    /// Buying one unit now.
    pub profit_buy: f64,
    /// Not trading now.
    pub profit_wait: f64,
}

fn profit_at(tree: &GameTree, alpha: f64) -> ProfitPoint {
    let xi: BehaviourStrategy<f64> = example_2_1_alpha(tree, alpha);
    let prices = rational_prices(tree, &xi);
    let cv = continuation_values(tree, &xi, &prices, MissingPrice::Pessimistic).expect("shapes match");
    let q = cv.optimal_row(0);
    ProfitPoint { alpha, profit_buy: q[1], profit_wait: q[0] }
}

/// Profit curves of the two-period example over `alphas`, with prices
/// Bayes-rational for the mixing family at each parameter.
pub fn profit_curve(noise_eps: &Rational, alphas: &[f64]) -> Result<Vec<ProfitPoint>, SolverError> {
    let tree = tree_for(noise_eps)?;
    if let Some(a) = alphas.iter().find(|a| !(0.0..=1.0).contains(*a)) {
        return Err(SolverError::BadConfig(alloc::format!("mixing parameter {a} outside [0, 1]")));
    }
    Ok(alphas.iter().map(|&a| profit_at(&tree, a)).collect())
}

/// Interior parameters where buying and waiting earn the same, found on a
/// `1e-3` grid and refined to `1e-12`.
pub fn indifference_root(noise_eps: &Rational) -> Result<Vec<ProfitPoint>, SolverError> {
    let tree = tree_for(noise_eps)?;
    let gap = |a: f64| {
        let p = profit_at(&tree, a);
        p.profit_buy - p.profit_wait
    };
    Ok(grid_roots(gap, 1e-3, 1.0 - 1e-3, 1e-3, 1e-12).into_iter().map(|a| profit_at(&tree, a)).collect())
}

/// Coefficients of the degree-seven indifference polynomial for noise tails
/// of `1/8`, leading first.
pub const REFERENCE_POLYNOMIAL: [f64; 8] = [750000.0, -9485000.0, 36365625.0, -48108800.0, -25782575.0, 80831674.0, -21705040.0, -10602816.0];

/// The indifference polynomial at `alpha`, divided by its leading coefficient.
pub fn reference_polynomial(alpha: f64) -> f64 {
    REFERENCE_POLYNOMIAL.iter().fold(0.0, |acc, c| acc * alpha + c) / REFERENCE_POLYNOMIAL[0]
}

/// Outcome of checking every pure strategy of the two-period example.
#[derive(Debug, Clone, PartialEq)]
pub struct PureScan {
    pub strategies: usize,
    /// Strategies with a profitable deviation against their own prices.
    pub failing: usize,
    /// Smallest deviation gain among failing strategies.
    pub min_gain: Option<Rational>,
    /// Strategies that passed, by their choice bitmask over nodes.
    pub passing: Vec<u64>,
}

/// Verifies every pure strategy against its own rational prices, exactly.
pub fn pure_scan(noise_eps: &Rational) -> Result<PureScan, SolverError> {
    let tree = tree_for(noise_eps)?;
    let n = tree.n_nodes();
    let total = 1usize << n;
    let mut scan = PureScan { strategies: total, failing: 0, min_gain: None, passing: Vec::new() };
    let zero = Rational::default();
    for mask in 0..total as u64 {
        let xi: BehaviourStrategy = BehaviourStrategy::pure(&tree, |node| (mask >> node & 1) as usize);
        let prices = rational_prices(&tree, &xi);
        let report = verify_kyle(&tree, &xi, &prices, &zero)?;
        if report.passed {
            scan.passing.push(mask);
        } else {
            scan.failing += 1;
            let g = report.max_deviation_gain;
            if scan.min_gain.as_ref().map_or(true, |m| &g < m) {
                scan.min_gain = Some(g);
            }
        }
    }
    Ok(scan)
}

fn tree_for(noise_eps: &Rational) -> Result<GameTree, SolverError> {
    let half = Rational::new(1.into(), 2.into());
    if *noise_eps <= Rational::default() || *noise_eps >= half {
        return Err(SolverError::BadConfig(alloc::format!("noise tail {noise_eps} outside (0, 1/2)")));
    }
    Ok(GameTree::build(&example_2_1(noise_eps.clone())).expect("small tree"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::rat;

    #[test]
    fn crossing_matches_known_root() {
        let roots = indifference_root(&rat(1, 8)).unwrap();
        assert_eq!(roots.len(), 1);
        let p = roots[0];
        assert!((p.alpha - 0.774642090070273).abs() < 1e-9, "{}", p.alpha);
        assert!((p.profit_buy - 0.3350563687).abs() < 1e-9);
        assert!(reference_polynomial(p.alpha).abs() < 1e-3);
    }

    #[test]
    fn waiting_beats_buying_at_one() {
        let curve = profit_curve(&rat(1, 8), &[0.0, 1.0]).unwrap();
        assert!(curve[1].profit_wait > curve[1].profit_buy);
        assert!((curve[1].profit_wait - 0.4921875).abs() < 1e-12);
        for p in &curve {
            assert!(p.profit_buy.is_finite() && p.profit_wait.abs() <= 2.0);
        }
        assert!(profit_curve(&rat(1, 8), &[1.5]).is_err());
        assert!(profit_curve(&rat(1, 2), &[0.5]).is_err());
    }
}
