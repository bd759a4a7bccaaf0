use alloc::format;
use alloc::string::ToString;
use alloc::vec;
use alloc::vec::Vec;

use num_traits::{One, Zero};

use crate::error::SpecError;
use crate::scalar::Rational;

/// A partition of the state indices `0..n` into nonempty cells.
///
/// Cells are stored sorted, and ordered by their smallest element.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    cells: Vec<Vec<usize>>,
    cell_of: Vec<usize>,
}

impl Partition {
    /// Validates and canonicalises `cells` as a partition of `0..n`.
    ///
    /// `period` is only used to label errors.
    pub fn new(mut cells: Vec<Vec<usize>>, n: usize, period: usize) -> Result<Self, SpecError> {
        let mut cell_of = vec![usize::MAX; n];
        for cell in cells.iter_mut() {
            if cell.is_empty() {
                return Err(SpecError::NotAPartition { period, reason: "empty cell".to_string() });
            }
            cell.sort_unstable();
        }
        cells.sort_by_key(|c| c[0]);
        for (ci, cell) in cells.iter().enumerate() {
            for &s in cell {
                if s >= n {
                    return Err(SpecError::NotAPartition { period, reason: format!("state {s} out of range 0..{n}") });
                }
                if cell_of[s] != usize::MAX {
                    return Err(SpecError::NotAPartition { period, reason: format!("state {s} appears twice") });
                }
                cell_of[s] = ci;
            }
        }
        if let Some(s) = cell_of.iter().position(|&c| c == usize::MAX) {
            return Err(SpecError::NotAPartition { period, reason: format!("state {s} is in no cell") });
        }
        Ok(Self { cells, cell_of })
    }

    pub fn singletons(n: usize) -> Self {
        Self { cells: (0..n).map(|i| vec![i]).collect(), cell_of: (0..n).collect() }
    }

    /// The single-cell partition (no private information).
    pub fn trivial(n: usize) -> Self {
        Self { cells: vec![(0..n).collect()], cell_of: vec![0; n] }
    }

    pub fn cells(&self) -> &[Vec<usize>] {
        &self.cells
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn cell_of(&self, state: usize) -> usize {
        self.cell_of[state]
    }
}

/// Declarative description of a discrete Kyle game.
///
/// State `0` carries the highest true value. Trade and noise grids are kept
/// in ascending order, so index order coincides with trade-size order.
#[derive(Debug, Clone, PartialEq)]
pub struct GameSpec {
    horizon: usize,
    values: Vec<Rational>,
    /// One partition per period plus the final singleton partition.
    partitions: Vec<Partition>,
    prior: Vec<Rational>,
    trades: Vec<Rational>,
    noise: Vec<Rational>,
    noise_probs: Vec<Rational>,
    /// `children[t][c]`: cells of period `t + 1` contained in cell `c` of period `t`.
    children: Vec<Vec<Vec<usize>>>,
    cell_mass: Vec<Vec<Rational>>,
    cell_mean: Vec<Vec<Rational>>,
}

impl GameSpec {
    /// Builds and validates a game.
    ///
    /// `partitions` lists the information partitions of periods `1..=horizon`
    /// (0-based state indices); the final all-singleton partition is added
    /// automatically. `trades` and `noise` may be given in any order.
    pub fn new(
        horizon: usize,
        values: Vec<Rational>,
        partitions: Vec<Vec<Vec<usize>>>,
        prior: Vec<Rational>,
        trades: Vec<Rational>,
        noise: Vec<Rational>,
        noise_probs: Vec<Rational>,
    ) -> Result<Self, SpecError> {
        if horizon == 0 {
            return Err(SpecError::ZeroHorizon);
        }
        let n = values.len();
        if n == 0 {
            return Err(SpecError::NoStates);
        }
        for i in 1..n {
            if values[i] > values[i - 1] {
                return Err(SpecError::ValuesNotSorted { index: i - 1 });
            }
        }
        check_distribution("prior", &prior, n)?;
        if noise.is_empty() {
            return Err(SpecError::Empty { what: "noise support" });
        }
        check_distribution("noise distribution", &noise_probs, noise.len())?;
        if trades.is_empty() {
            return Err(SpecError::Empty { what: "trade support" });
        }
        if partitions.len() != horizon {
            return Err(SpecError::LengthMismatch { what: "partitions", expected: horizon, found: partitions.len() });
        }

        let mut trades = trades;
        trades.sort();
        check_distinct("trade support", &trades)?;
        let mut noise_pairs: Vec<(Rational, Rational)> = noise.into_iter().zip(noise_probs).collect();
        noise_pairs.sort_by(|a, b| a.0.cmp(&b.0));
        let (noise, noise_probs): (Vec<_>, Vec<_>) = noise_pairs.into_iter().unzip();
        check_distinct("noise support", &noise)?;

        let mut parts = Vec::with_capacity(horizon + 1);
        for (t, cells) in partitions.into_iter().enumerate() {
            parts.push(Partition::new(cells, n, t + 1)?);
        }
        parts.push(Partition::singletons(n));

        let mut children = Vec::with_capacity(horizon);
        for t in 0..horizon {
            let (coarse, fine) = (&parts[t], &parts[t + 1]);
            let mut kids = vec![Vec::new(); coarse.len()];
            for (fi, cell) in fine.cells().iter().enumerate() {
                let owner = coarse.cell_of(cell[0]);
                if cell.iter().any(|&s| coarse.cell_of(s) != owner) {
                    return Err(SpecError::NotRefining {
                        period: t + 2,
                        cell: cell.clone(),
                        coarse: coarse.cells()[owner].clone(),
                    });
                }
                kids[owner].push(fi);
            }
            children.push(kids);
        }

        let mut cell_mass = Vec::with_capacity(horizon + 1);
        let mut cell_mean = Vec::with_capacity(horizon + 1);
        for p in &parts {
            let mut masses = Vec::with_capacity(p.len());
            let mut means = Vec::with_capacity(p.len());
            for cell in p.cells() {
                let mass = cell.iter().fold(Rational::zero(), |acc, &s| acc + &prior[s]);
                let weighted = cell.iter().fold(Rational::zero(), |acc, &s| acc + &prior[s] * &values[s]);
                means.push(weighted / &mass);
                masses.push(mass);
            }
            cell_mass.push(masses);
            cell_mean.push(means);
        }

        Ok(Self { horizon, values, partitions: parts, prior, trades, noise, noise_probs, children, cell_mass, cell_mean })
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn n_states(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[Rational] {
        &self.values
    }

    pub fn prior(&self) -> &[Rational] {
        &self.prior
    }

    /// Trade grid in ascending order.
    pub fn trades(&self) -> &[Rational] {
        &self.trades
    }

    /// Noise grid in ascending order.
    pub fn noise(&self) -> &[Rational] {
        &self.noise
    }

    pub fn noise_probs(&self) -> &[Rational] {
        &self.noise_probs
    }

    pub fn max_value(&self) -> &Rational {
        &self.values[0]
    }

    pub fn min_value(&self) -> &Rational {
        &self.values[self.values.len() - 1]
    }

    /// Information partition of `period` (1-based); `horizon + 1` is the
    /// singleton partition.
    pub fn partition(&self, period: usize) -> &Partition {
        &self.partitions[period - 1]
    }

    /// Cells of period `period + 1` refining `cell` of period `period`.
    pub fn child_cells(&self, period: usize, cell: usize) -> &[usize] {
        &self.children[period - 1][cell]
    }

    /// Prior mass of a cell of period `period`.
    pub fn cell_mass(&self, period: usize, cell: usize) -> &Rational {
        &self.cell_mass[period - 1][cell]
    }

    /// Prior mean of the true value over a cell of period `period`.
    pub fn cell_mean(&self, period: usize, cell: usize) -> &Rational {
        &self.cell_mean[period - 1][cell]
    }

    /// Information partitions of periods `1..=horizon` as 0-based index cells.
    pub fn partition_cells(&self) -> Vec<Vec<Vec<usize>>> {
        self.partitions[..self.horizon].iter().map(|p| p.cells().to_vec()).collect()
    }

    /// Index of `value` in the trade grid.
    pub fn trade_index(&self, value: &Rational) -> Option<usize> {
        self.trades.binary_search(value).ok()
    }

    pub fn noise_index(&self, value: &Rational) -> Option<usize> {
        self.noise.binary_search(value).ok()
    }

    /// Replaces the trade grid, keeping everything else.
    pub fn with_trades(&self, trades: Vec<Rational>) -> Result<Self, SpecError> {
        Self::new(
            self.horizon,
            self.values.clone(),
            self.partition_cells(),
            self.prior.clone(),
            trades,
            self.noise.clone(),
            self.noise_probs.clone(),
        )
    }
}

fn check_distribution(what: &'static str, probs: &[Rational], expected: usize) -> Result<(), SpecError> {
    if probs.len() != expected {
        return Err(SpecError::LengthMismatch { what, expected, found: probs.len() });
    }
    if let Some(index) = probs.iter().position(|p| *p <= Rational::zero()) {
        return Err(SpecError::NotPositive { what, index });
    }
    let total = probs.iter().fold(Rational::zero(), |acc, p| acc + p);
    if !total.is_one() {
        return Err(SpecError::NotNormalized { what, sum: total.to_string() });
    }
    Ok(())
}

fn check_distinct(what: &'static str, sorted: &[Rational]) -> Result<(), SpecError> {
    for w in sorted.windows(2) {
        if w[0] == w[1] {
            return Err(SpecError::Duplicate { what, value: w[0].to_string() });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::rat;

    fn ints(xs: &[i64]) -> Vec<Rational> {
        xs.iter().map(|&x| rat(x, 1)).collect()
    }

    fn base(partitions: Vec<Vec<Vec<usize>>>, horizon: usize) -> Result<GameSpec, SpecError> {
        GameSpec::new(
            horizon,
            ints(&[2, 1, 0]),
            partitions,
            vec![rat(1, 3); 3],
            ints(&[0, 1]),
            ints(&[-1, 1]),
            vec![rat(1, 2); 2],
        )
    }

    #[test]
    fn rejects_non_refining_partitions() {
        let err = base(vec![vec![vec![0, 1], vec![2]], vec![vec![0], vec![1, 2]]], 2).unwrap_err();
        assert_eq!(err, SpecError::NotRefining { period: 2, cell: vec![1, 2], coarse: vec![0, 1] });
    }

    #[test]
    fn rejects_bad_distributions() {
        let err = GameSpec::new(1, ints(&[1, 0]), vec![vec![vec![0, 1]]], vec![rat(1, 2), rat(1, 3)], ints(&[0]), ints(&[0]), vec![rat(1, 1)])
            .unwrap_err();
        assert!(matches!(err, SpecError::NotNormalized { .. }));
        let err = GameSpec::new(1, ints(&[1, 0]), vec![vec![vec![0, 1]]], vec![rat(1, 1), rat(0, 1)], ints(&[0]), ints(&[0]), vec![rat(1, 1)])
            .unwrap_err();
        assert_eq!(err, SpecError::NotPositive { what: "prior", index: 1 });
    }

    #[test]
    fn rejects_unsorted_values_and_duplicates() {
        let err = GameSpec::new(1, ints(&[0, 1]), vec![vec![vec![0, 1]]], vec![rat(1, 2); 2], ints(&[0]), ints(&[0]), vec![rat(1, 1)])
            .unwrap_err();
        assert_eq!(err, SpecError::ValuesNotSorted { index: 0 });
        let err = GameSpec::new(1, ints(&[1, 0]), vec![vec![vec![0, 1]]], vec![rat(1, 2); 2], ints(&[0, 0]), ints(&[0]), vec![rat(1, 1)])
            .unwrap_err();
        assert!(matches!(err, SpecError::Duplicate { .. }));
    }

    #[test]
    fn rejects_broken_partitions() {
        assert!(matches!(base(vec![vec![vec![0, 1]]], 1), Err(SpecError::NotAPartition { .. })));
        assert!(matches!(base(vec![vec![vec![0, 1], vec![1, 2]]], 1), Err(SpecError::NotAPartition { .. })));
        assert_eq!(base(vec![], 0).unwrap_err(), SpecError::ZeroHorizon);
    }

    #[test]
    fn canonicalises_grids_and_cells() {
        let g = GameSpec::new(
            1,
            ints(&[1, 0]),
            vec![vec![vec![1], vec![0]]],
            vec![rat(1, 4), rat(3, 4)],
            ints(&[1, -1, 0]),
            ints(&[1, -1]),
            vec![rat(1, 3), rat(2, 3)],
        )
        .unwrap();
        assert_eq!(g.trades(), &ints(&[-1, 0, 1])[..]);
        assert_eq!(g.noise(), &ints(&[-1, 1])[..]);
        assert_eq!(g.noise_probs(), &[rat(2, 3), rat(1, 3)][..]);
        assert_eq!(g.partition(1).cells(), &[vec![0], vec![1]][..]);
    }

    #[test]
    fn cell_statistics() {
        let g = base(vec![vec![vec![0, 1], vec![2]], vec![vec![0], vec![1], vec![2]]], 2).unwrap();
        assert_eq!(g.cell_mass(1, 0), &rat(2, 3));
        assert_eq!(g.cell_mean(1, 0), &rat(3, 2));
        assert_eq!(g.child_cells(1, 0), &[0, 1][..]);
        assert_eq!(g.child_cells(2, 2), &[2][..]);
    }
}
