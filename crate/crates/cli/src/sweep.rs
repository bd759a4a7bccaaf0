//! Seeded random games for solver and verifier sweeps.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use kyle_core::{rat, GameSpec, Rational};

/// Size limits of generated games.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SweepShape {
    pub max_horizon: usize,
    pub max_states: usize,
    pub max_trades: usize,
    pub max_noise: usize,
}

impl Default for SweepShape {
    fn default() -> Self {
        Self { max_horizon: 2, max_states: 3, max_trades: 3, max_noise: 3 }
    }
}

/// Weights in `1..=max` normalized to a distribution.
fn distribution(rng: &mut ChaCha8Rng, len: usize, max: i64) -> Vec<Rational> {
    let w: Vec<i64> = (0..len).map(|_| rng.gen_range(1..=max)).collect();
    let total: i64 = w.iter().sum();
    w.into_iter().map(|x| rat(x, total)).collect()
}

fn pick(rng: &mut ChaCha8Rng, pool: &[i64], len: usize) -> Vec<Rational> {
    let mut xs: Vec<i64> = pool.choose_multiple(rng, len).copied().collect();
    xs.sort_unstable();
    xs.into_iter().map(|x| rat(x, 1)).collect()
}

/// Random partition of `0..n` into contiguous blocks.
fn blocks(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![0]];
    for s in 1..n {
        if rng.gen_bool(0.5) {
            out.push(vec![s]);
        } else {
            out.last_mut().expect("nonempty").push(s);
        }
    }
    out
}

/// Splits each cell of `coarse` further at random.
fn refine(rng: &mut ChaCha8Rng, coarse: &[Vec<usize>]) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    for cell in coarse {
        out.push(vec![cell[0]]);
        for &s in &cell[1..] {
            if rng.gen_bool(0.5) {
                out.push(vec![s]);
            } else {
                out.last_mut().expect("nonempty").push(s);
            }
        }
    }
    out
}

/// One random game.
///
/// About two thirds of the games use integer trades containing `0` and noise
/// on `{-1, 0, 1}` with mass at least `1/9` on each point, so single-period
/// draws satisfy the grid condition of the structure checks.
pub fn random_game(rng: &mut ChaCha8Rng, shape: SweepShape) -> GameSpec {
    let horizon = rng.gen_range(1..=shape.max_horizon.max(1));
    let n = rng.gen_range(1..=shape.max_states.max(1));
    let mut values: Vec<i64> = (0..=4).collect::<Vec<_>>().choose_multiple(rng, n).copied().collect();
    values.sort_unstable_by(|a, b| b.cmp(a));
    let values = values.into_iter().map(|v| rat(v, 4)).collect();
    let prior = distribution(rng, n, 4);
    let mut partitions = vec![blocks(rng, n)];
    for _ in 1..horizon {
        let next = refine(rng, partitions.last().expect("nonempty"));
        partitions.push(next);
    }
    let structured = rng.gen_bool(2.0 / 3.0) && shape.max_noise >= 3;
    let (trades, noise, noise_probs) = if structured {
        let k = rng.gen_range(2..=shape.max_trades.max(2));
        let mut trades = pick(rng, &[-1, 1], k - 1);
        trades.push(rat(0, 1));
        trades.sort();
        (trades, pick(rng, &[-1, 0, 1], 3), distribution(rng, 3, 4))
    } else {
        let k = rng.gen_range(1..=shape.max_trades.max(1));
        let m = rng.gen_range(1..=shape.max_noise.max(1));
        (pick(rng, &[-2, -1, 0, 1, 2], k), pick(rng, &[-2, -1, 0, 1, 2], m), distribution(rng, m, 4))
    };
    GameSpec::new(horizon, values, partitions, prior, trades, noise, noise_probs).expect("generated games are valid")
}

/// `count` games from `seed`.
pub fn random_games(seed: u64, count: usize, shape: SweepShape) -> Vec<GameSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count).map(|_| random_game(&mut rng, shape)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use kyle_core::verifier::check_assumption_grid;

    #[test]
    fn deterministic_and_within_shape() {
        let a = random_games(7, 50, SweepShape::default());
        assert_eq!(a, random_games(7, 50, SweepShape::default()));
        for g in &a {
            assert!(g.horizon() <= 2 && g.n_states() <= 3 && g.trades().len() <= 3 && g.noise().len() <= 3);
        }
        let grid = a.iter().filter(|g| g.horizon() == 1 && check_assumption_grid(g).passed && g.noise().len() == 3).count();
        assert!(grid > 5);
    }
}
