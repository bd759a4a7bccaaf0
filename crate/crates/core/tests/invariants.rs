use num_traits::{One, Zero};
use proptest::prelude::*;

use kyle_core::continuous::{discretize, ContinuousGame, DyadicDensity, ValueDistribution};
use kyle_core::game::{continuation_values, expected_utility, realisation_prob, MissingPrice};
use kyle_core::pricing::{beliefs_from_strategy, rational_prices};
use kyle_core::solver::best_reply_eps;
use kyle_core::verifier::verify_kyle;
use kyle_core::{rat, BehaviourStrategy, GameSpec, GameTree, PricingSystem, Rational};

fn normalize(weights: &[i64]) -> Vec<Rational> {
    let total: i64 = weights.iter().sum();
    weights.iter().map(|w| rat(*w, total)).collect()
}

fn support(pool: &[i64], mask: u32) -> Vec<Rational> {
    let picked: Vec<Rational> = pool.iter().enumerate().filter(|(i, _)| mask >> i & 1 == 1).map(|(_, x)| rat(*x, 1)).collect();
    if picked.is_empty() {
        vec![rat(pool[0], 1)]
    } else {
        picked
    }
}

prop_compose! {
    fn game()(
        horizon in 1usize..=2,
        n in 1usize..=3,
        value_mask in 1u32..32,
        split in any::<bool>(),
        prior in prop::collection::vec(1i64..=4, 3),
        trade_mask in 1u32..32,
        noise_mask in 1u32..32,
        noise_w in prop::collection::vec(1i64..=4, 5),
    ) -> GameSpec {
        let mut values: Vec<Rational> = (0..=4).filter(|i| value_mask >> i & 1 == 1).map(|i| rat(i, 4)).take(n).collect();
        values.reverse();
        let n = values.len();
        let first: Vec<Vec<usize>> = if split && n > 1 { vec![vec![0], (1..n).collect()] } else { vec![(0..n).collect()] };
        let mut partitions = vec![first];
        if horizon == 2 {
            partitions.push((0..n).map(|s| vec![s]).collect());
        }
        let trades = support(&[-2, -1, 0, 1, 2], trade_mask);
        let noise = support(&[-2, -1, 0, 1, 2], noise_mask);
        let m = noise.len();
        GameSpec::new(horizon, values, partitions, normalize(&prior[..n]), trades, noise, normalize(&noise_w[..m])).unwrap()
    }
}

fn mixed(tree: &GameTree, seed: &[i64]) -> BehaviourStrategy {
    let k = tree.n_trades();
    BehaviourStrategy::from_fn(tree, |node| normalize(&(0..k).map(|a| 1 + seed[(node * k + a) % seed.len()]).collect::<Vec<_>>())).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn outcome_probabilities_sum_to_one(spec in game(), seed in prop::collection::vec(0i64..5, 1..16)) {
        let tree = GameTree::build(&spec).unwrap();
        let xi = mixed(&tree, &seed);
        let total: Rational = tree.outcomes().map(|o| realisation_prob(&tree, &xi, &o)).sum();
        prop_assert!(total.is_one());
    }

    #[test]
    fn bayes_prices_have_zero_residual(spec in game(), seed in prop::collection::vec(0i64..5, 1..16)) {
        let tree = GameTree::build(&spec).unwrap();
        let xi = mixed(&tree, &seed);
        let prices = rational_prices(&tree, &xi);
        let report = verify_kyle(&tree, &xi, &prices, &Rational::zero()).unwrap();
        prop_assert!(report.pricing_residual.is_zero());
        let (lo, hi) = (spec.values().iter().min().unwrap(), spec.values().iter().max().unwrap());
        prop_assert!(prices.entries().all(|(_, _, p)| p >= lo && p <= hi));
    }

    #[test]
    fn best_replies_stay_in_the_perturbed_simplex(spec in game(), seed in prop::collection::vec(0i64..5, 1..16)) {
        let tree = GameTree::build(&spec).unwrap();
        let xi = mixed(&tree, &seed);
        let beliefs = beliefs_from_strategy(&tree, &xi).unwrap();
        let eps = rat(1, 4 * tree.n_trades() as i64);
        for node in 0..tree.n_nodes() {
            let row = best_reply_eps(&tree, &xi, &beliefs, node, &eps).unwrap();
            prop_assert!(row.iter().all(|p| *p >= eps));
            prop_assert!(row.iter().sum::<Rational>().is_one());
        }
    }

    #[test]
    fn best_continuation_dominates_the_strategy(spec in game(), seed in prop::collection::vec(0i64..5, 1..16), price in 0i64..=8) {
        let tree = GameTree::build(&spec).unwrap();
        let xi = mixed(&tree, &seed);
        let prices = PricingSystem::from_fn(&tree, |t, f| rat((price + (t + f) as i64) % 9, 8));
        let values = continuation_values(&tree, &xi, &prices, MissingPrice::Error).unwrap();
        prop_assert_eq!(&values.root_value, &expected_utility(&tree, &xi, &prices).unwrap());
        prop_assert!(values.root_best >= values.root_value);
    }

    #[test]
    fn discretization_preserves_mass(n in 1u32..=4, density in prop::collection::vec(1i64..=4, 4), bound in 1i64..=2) {
        let total: i64 = density.iter().sum();
        let noise = DyadicDensity::new(1, density.iter().map(|d| rat(2 * d, total)).collect()).unwrap();
        let game = ContinuousGame::new(ValueDistribution::uniform(), noise, (-bound).into(), bound.into()).unwrap();
        let level = discretize(&game, n).unwrap();
        prop_assert!(level.spec().prior().iter().sum::<Rational>().is_one());
        prop_assert!(level.spec().noise_probs().iter().sum::<Rational>().is_one());
    }
}
