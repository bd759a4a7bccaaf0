//! Named example games with their known strategies and prices.

use alloc::vec;
use alloc::vec::Vec;

use num_bigint::BigInt;
use num_traits::{One, Zero};

use crate::continuous::{ContinuousGame, DyadicDensity, ValueDistribution};
use crate::game::{BehaviourStrategy, GameSpec, GameTree};
use crate::pricing::PricingSystem;
use crate::scalar::{rat, Rational, Scalar};

fn ints(xs: &[i64]) -> Vec<Rational> {
    xs.iter().map(|&x| rat(x, 1)).collect()
}

/// Two periods, value 1 or 0 revealed at once, trades `{0, 1}`, noise
/// `{-1, 0, 1}` with tail mass `noise_eps` on each side.
///
/// Panics unless `0 < noise_eps < 1/2`.
pub fn example_2_1(noise_eps: Rational) -> GameSpec {
    let centre = Rational::one() - &noise_eps * rat(2, 1);
    GameSpec::new(
        2,
        ints(&[1, 0]),
        vec![vec![vec![0], vec![1]]; 2],
        vec![rat(1, 2); 2],
        ints(&[0, 1]),
        ints(&[-1, 0, 1]),
        vec![noise_eps.clone(), centre, noise_eps],
    )
    .expect("noise_eps must lie in (0, 1/2)")
}

/// The one-parameter family on [`example_2_1`]: after `v = 1` buy with
/// probability `alpha` in the first period and always in the second; after
/// `v = 0` never trade.
pub fn example_2_1_alpha<S: Scalar>(tree: &GameTree, alpha: S) -> BehaviourStrategy<S> {
    let mut xi = example_2_1_pure(tree);
    xi.row_mut(0).clone_from_slice(&[S::one() - alpha.clone(), alpha]);
    xi
}

/// [`example_2_1_alpha`] with `alpha = 1`.
pub fn example_2_1_pure<S: Scalar>(tree: &GameTree) -> BehaviourStrategy<S> {
    BehaviourStrategy::pure(tree, |node| if tree.cell_states(node)[0] == 0 { 1 } else { 0 })
}

/// One period, values `1, 1/2, 0` uniformly, trades and noise in
/// `{-1, 0, 1}`, noise skewed towards selling.
pub fn example_3_1() -> GameSpec {
    GameSpec::new(
        1,
        vec![rat(1, 1), rat(1, 2), rat(0, 1)],
        vec![vec![vec![0], vec![1], vec![2]]],
        vec![rat(1, 3); 3],
        ints(&[-1, 0, 1]),
        ints(&[-1, 0, 1]),
        vec![rat(6, 8), rat(1, 8), rat(1, 8)],
    )
    .expect("valid game")
}

/// Equilibrium strategy of [`example_3_1`]: trade `2v - 1`.
pub fn example_3_1_strategy<S: Scalar>(tree: &GameTree) -> BehaviourStrategy<S> {
    BehaviourStrategy::pure(tree, |node| 2 - tree.cell_states(node)[0])
}

/// Equilibrium prices of [`example_3_1`] on flows `-2..=2`.
pub fn example_3_1_prices(tree: &GameTree) -> PricingSystem {
    let table = [rat(0, 1), rat(3, 7), rat(13, 16), rat(3, 4), rat(1, 1)];
    PricingSystem::from_fn(tree, |_, flow| table[flow].clone())
}

/// One period, values `±1` and noise `±1` with equal odds, trades on the even
/// grid `-2n..=2n`.
pub fn theorem_example(n: u32) -> GameSpec {
    let n = i64::from(n.max(1));
    GameSpec::new(
        1,
        ints(&[1, -1]),
        vec![vec![vec![0], vec![1]]],
        vec![rat(1, 2); 2],
        (-n..=n).map(|k| rat(2 * k, 1)).collect(),
        ints(&[-1, 1]),
        vec![rat(1, 2); 2],
    )
    .expect("valid game")
}

/// Trade the largest size in the direction of the value.
pub fn theorem_example_strategy<S: Scalar>(tree: &GameTree) -> BehaviourStrategy<S> {
    let k = tree.n_trades();
    BehaviourStrategy::pure(tree, |node| if tree.cell_states(node)[0] == 0 { k - 1 } else { 0 })
}

/// Sign prices: `-1` below zero flow, `1` above, `0` at zero.
pub fn theorem_example_prices(tree: &GameTree) -> PricingSystem {
    PricingSystem::from_fn(tree, |_, flow| {
        let y = &tree.flows()[flow];
        if y.is_zero() {
            Rational::zero()
        } else if *y > Rational::zero() {
            Rational::one()
        } else {
            -Rational::one()
        }
    })
}

/// Uniform value on `[0, 1]`, uniform noise on `[-1, 1]`, trades in `[-1, 1]`.
pub fn uniform_continuum() -> ContinuousGame {
    ContinuousGame::new(
        ValueDistribution::uniform(),
        DyadicDensity::new(0, vec![rat(1, 2), rat(1, 2)]).expect("valid density"),
        BigInt::from(-1),
        BigInt::from(1),
    )
    .expect("valid game")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtins_are_valid() {
        let _ = example_2_1(rat(1, 8));
        let _ = example_3_1();
        let spec = theorem_example(3);
        assert_eq!(spec.trades().len(), 7);
        let tree = GameTree::build(&spec).unwrap();
        let xi: BehaviourStrategy = theorem_example_strategy(&tree);
        assert_eq!(xi.row(0)[6], rat(1, 1));
        assert_eq!(xi.row(1)[0], rat(1, 1));
    }
}
