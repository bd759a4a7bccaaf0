use alloc::vec;
use alloc::vec::Vec;

use num_traits::{One, Zero};

use crate::game::{BehaviourStrategy, GameSpec, GameTree};
use crate::pricing::PricingSystem;
use crate::scalar::Rational;

use super::{dyadic, floor_scaled, ContinuousError, ContinuousGame};

/// The level-`n` discrete game of a [`ContinuousGame`] with its embedding
/// data.
///
/// Values sit on `k 2^-n`, carrying the mass of the value cell they floor
/// from; noise atoms `c 2^-n` carry the noise mass of `[c 2^-n, (c+1) 2^-n)`;
/// trades are every `l 2^-n` between the trade bounds. Atoms without mass are
/// dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscretizationLevel {
    n: u32,
    spec: GameSpec,
    lower: i64,
    upper: i64,
    state_cells: Vec<i64>,
    noise_cells: Vec<i64>,
}

impl DiscretizationLevel {
    pub fn n(&self) -> u32 {
        self.n
    }

    pub fn spec(&self) -> &GameSpec {
        &self.spec
    }

    /// Value cell `k` (value `k 2^-n`) of each state, highest value first.
    pub fn state_cells(&self) -> &[i64] {
        &self.state_cells
    }

    /// Numerators `c` of the kept noise atoms `c 2^-n`.
    pub fn noise_cells(&self) -> &[i64] {
        &self.noise_cells
    }

    /// State carrying value cell `k`, if that cell has mass.
    pub fn state_of_cell(&self, k: i64) -> Option<usize> {
        self.state_cells.iter().position(|&c| c == k)
    }

    /// Number of value cells, the point `1` included.
    pub fn n_value_cells(&self) -> usize {
        (1usize << self.n) + 1
    }

    /// Index of the flow cell containing `y` in a price function on
    /// `[lower - 1, upper + 1)`.
    pub fn flow_cell(&self, y: &Rational) -> usize {
        (floor_scaled(y, self.n) - ((self.lower - 1) << self.n)) as usize
    }
}

/// Builds the level-`n` discrete game.
pub fn discretize(game: &ContinuousGame, n: u32) -> Result<DiscretizationLevel, ContinuousError> {
    if n == 0 {
        return Err(ContinuousError::ZeroLevel);
    }
    if game.noise().level() > n {
        return Err(ContinuousError::DensityTooFine { density: game.noise().level(), n });
    }
    let top = 1i64 << n;
    let mut values = Vec::new();
    let mut prior = Vec::new();
    let mut state_cells = Vec::new();
    for k in (0..=top).rev() {
        let (mass, _) = game.value().cell(n, k);
        if !mass.is_zero() {
            values.push(dyadic(k, n));
            prior.push(mass);
            state_cells.push(k);
        }
    }
    let mut noise = Vec::new();
    let mut noise_probs = Vec::new();
    let mut noise_cells = Vec::new();
    for c in -top..=top {
        let mass = game.noise().mass(&dyadic(c, n), &dyadic(c + 1, n));
        if !mass.is_zero() {
            noise.push(dyadic(c, n));
            noise_probs.push(mass);
            noise_cells.push(c);
        }
    }
    let trades: Vec<Rational> = ((game.lower() << n)..=(game.upper() << n)).map(|l| dyadic(l, n)).collect();
    let singletons = (0..values.len()).map(|i| vec![i]).collect();
    let spec = GameSpec::new(1, values, vec![singletons], prior, trades, noise, noise_probs)?;
    Ok(DiscretizationLevel { n, spec, lower: game.lower(), upper: game.upper(), state_cells, noise_cells })
}

/// Price function on `[lower - 1, upper + 1)`, constant on dyadic cells of
/// width `2^-level`.
#[derive(Debug, Clone, PartialEq)]
pub struct StepPriceFunction {
    level: u32,
    lo: i64,
    values: Vec<Rational>,
}

impl StepPriceFunction {
    /// `values` lists prices in `[0, 1]` on the cells from left to right.
    pub fn new(game: &ContinuousGame, level: u32, values: Vec<Rational>) -> Result<Self, ContinuousError> {
        let (lo, hi) = (game.lower() - 1, game.upper() + 1);
        let expected = ((hi - lo) as usize) << level;
        if values.len() != expected {
            return Err(ContinuousError::Shape(alloc::format!("{} price cells at level {level}, expected {expected}", values.len())));
        }
        if let Some(i) = values.iter().position(|p| *p < Rational::zero() || *p > Rational::one()) {
            return Err(ContinuousError::Shape(alloc::format!("price {} in cell {i} outside [0, 1]", values[i])));
        }
        Ok(Self { level, lo, values })
    }

    pub fn constant(game: &ContinuousGame, level: u32, price: Rational) -> Result<Self, ContinuousError> {
        let len = ((game.upper() - game.lower() + 2) as usize) << level;
        Self::new(game, level, vec![price; len])
    }

    pub(crate) fn from_parts(level: u32, lo: i64, values: Vec<Rational>) -> Self {
        Self { level, lo, values }
    }

    pub(crate) fn lo(&self) -> i64 {
        self.lo
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn values(&self) -> &[Rational] {
        &self.values
    }

    /// Price at the flow `y`; the right end point takes the last cell.
    pub fn eval(&self, y: &Rational) -> &Rational {
        let j = floor_scaled(y, self.level) - (self.lo << self.level);
        &self.values[(j.max(0) as usize).min(self.values.len() - 1)]
    }

    /// Price on the cell `y_num 2^-level_of` for a finer or equal level.
    pub(crate) fn at_fine(&self, y_num: i64, level_of: u32) -> &Rational {
        let j = (y_num >> (level_of - self.level)) - (self.lo << self.level);
        &self.values[j as usize]
    }

    /// The same function on the finer grid `level`.
    pub fn refine(&self, level: u32) -> Self {
        assert!(level >= self.level, "refine needs a finer level");
        let factor = 1usize << (level - self.level);
        Self { level, lo: self.lo, values: self.values.iter().flat_map(|p| core::iter::repeat(p.clone()).take(factor)).collect() }
    }

    /// Embeds the prices of the level's discrete game. Cells no flow of the
    /// tree reaches get price zero.
    pub fn from_pricing(level: &DiscretizationLevel, tree: &GameTree, prices: &PricingSystem) -> Result<Self, ContinuousError> {
        let len = ((level.upper - level.lower + 2) as usize) << level.n;
        let mut values = vec![Rational::zero(); len];
        for (f, y) in tree.flows().iter().enumerate() {
            let p = prices.get(1, f).ok_or_else(|| crate::error::EvalError::MissingPrice { period: 1, flow: vec![f] })?;
            values[level.flow_cell(y)] = p.clone();
        }
        Ok(Self { level: level.n, lo: level.lower - 1, values })
    }

    /// Prices of the level's discrete game, read off at each flow.
    pub fn to_pricing(&self, tree: &GameTree) -> PricingSystem {
        PricingSystem::from_fn(tree, |_, f| self.eval(&tree.flows()[f]).clone())
    }
}

/// Strategy on the value cells of level `level` (the point `1` last), with
/// finitely many trade atoms `t 2^-level` per cell.
#[derive(Debug, Clone, PartialEq)]
pub struct StepYoungMeasure {
    level: u32,
    lower: i64,
    upper: i64,
    cells: Vec<Vec<(i64, Rational)>>,
}

impl StepYoungMeasure {
    /// `cells[k]` lists `(t, weight)` for the trade `t 2^-level`; weights must
    /// be positive and sum to one in every cell.
    pub fn new(game: &ContinuousGame, level: u32, cells: Vec<Vec<(i64, Rational)>>) -> Result<Self, ContinuousError> {
        if cells.len() != (1usize << level) + 1 {
            return Err(ContinuousError::Shape(alloc::format!("{} value cells at level {level}, expected {}", cells.len(), (1usize << level) + 1)));
        }
        let (lo, hi) = (game.lower() << level, game.upper() << level);
        for (k, cell) in cells.iter().enumerate() {
            let mut total = Rational::zero();
            for (t, w) in cell {
                if *t < lo || *t > hi || *w <= Rational::zero() {
                    return Err(ContinuousError::Shape(alloc::format!("bad atom ({t}, {w}) in value cell {k}")));
                }
                total += w;
            }
            if !total.is_one() {
                return Err(ContinuousError::Shape(alloc::format!("weights of value cell {k} sum to {total}")));
            }
        }
        let mut cells = cells;
        for cell in &mut cells {
            cell.sort_by(|a, b| a.0.cmp(&b.0));
        }
        Ok(Self { level, lower: game.lower(), upper: game.upper(), cells })
    }

    /// One trade numerator per value cell.
    pub fn pure(game: &ContinuousGame, level: u32, choice: impl Fn(i64) -> i64) -> Result<Self, ContinuousError> {
        let cells = (0..=(1i64 << level)).map(|k| vec![(choice(k), Rational::one())]).collect();
        Self::new(game, level, cells)
    }

    pub(crate) fn from_parts(level: u32, game: &ContinuousGame, cells: Vec<Vec<(i64, Rational)>>) -> Self {
        Self { level, lower: game.lower(), upper: game.upper(), cells }
    }

    pub fn level(&self) -> u32 {
        self.level
    }

    pub fn cells(&self) -> &[Vec<(i64, Rational)>] {
        &self.cells
    }

    pub fn cell(&self, k: usize) -> &[(i64, Rational)] {
        &self.cells[k]
    }

    /// The behaviour strategy of the level's discrete game.
    pub fn to_strategy(&self, level: &DiscretizationLevel, tree: &GameTree) -> Result<BehaviourStrategy, ContinuousError> {
        if self.level != level.n {
            return Err(ContinuousError::Shape(alloc::format!("strategy at level {} for game level {}", self.level, level.n)));
        }
        let base = level.lower << level.n;
        let k = tree.n_trades();
        let rows = level
            .state_cells
            .iter()
            .map(|&c| {
                let mut row = vec![Rational::zero(); k];
                for (t, w) in &self.cells[c as usize] {
                    row[(t - base) as usize] = w.clone();
                }
                row
            })
            .collect();
        Ok(BehaviourStrategy::new(tree, rows)?)
    }

    /// Embeds a behaviour strategy of the level's discrete game; value cells
    /// without mass trade zero.
    pub fn from_strategy(level: &DiscretizationLevel, strategy: &BehaviourStrategy) -> Self {
        let base = level.lower << level.n;
        let mut cells = vec![vec![(0i64, Rational::one())]; level.n_value_cells()];
        for (state, &c) in level.state_cells.iter().enumerate() {
            cells[c as usize] =
                strategy.row(state).iter().enumerate().filter(|(_, w)| !w.is_zero()).map(|(x, w)| (base + x as i64, w.clone())).collect();
        }
        Self { level: level.n, lower: level.lower, upper: level.upper, cells }
    }
}

/// Expected execution price of the trade `t 2^-s` under the true noise
/// density, integrated cell by cell at the finest level involved.
fn average_price(game: &ContinuousGame, prices: &StepPriceFunction, t: i64, s: u32) -> Rational {
    let fine = s.max(prices.level).max(game.noise().level());
    let width = dyadic(1, fine);
    let x_num = t << (fine - s);
    let cells = 2usize << fine;
    let mut total = Rational::zero();
    for j in 0..cells {
        let g = game.noise().at_fine_cell(j, fine);
        if g.is_zero() {
            continue;
        }
        let y_num = x_num - (1i64 << fine) + j as i64;
        total += prices.at_fine(y_num, fine) * g;
    }
    total * width
}

fn check_shapes(game: &ContinuousGame, strategy: &StepYoungMeasure, prices: &StepPriceFunction) -> Result<(), ContinuousError> {
    if strategy.lower != game.lower() || strategy.upper != game.upper() || prices.lo != game.lower() - 1 {
        return Err(ContinuousError::Shape("strategy or prices belong to another trade range".into()));
    }
    let expected = ((game.upper() - game.lower() + 2) as usize) << prices.level;
    if prices.values.len() != expected {
        return Err(ContinuousError::Shape("price function length does not match its level".into()));
    }
    Ok(())
}

fn utility(game: &ContinuousGame, strategy: &StepYoungMeasure, prices: &StepPriceFunction, floor: bool) -> Result<Rational, ContinuousError> {
    check_shapes(game, strategy, prices)?;
    let s = strategy.level;
    let mut avg: alloc::collections::BTreeMap<i64, Rational> = alloc::collections::BTreeMap::new();
    let mut total = Rational::zero();
    for (k, cell) in strategy.cells.iter().enumerate() {
        let (mass, moment) = game.value().cell(s, k as i64);
        if mass.is_zero() {
            continue;
        }
        let value_term = if floor { &mass * dyadic(k as i64, s) } else { moment };
        for (t, w) in cell {
            if *t == 0 {
                continue;
            }
            let a = avg.entry(*t).or_insert_with(|| average_price(game, prices, *t, s));
            total += w * dyadic(*t, s) * (&value_term - &mass * &*a);
        }
    }
    Ok(total)
}

/// Expected utility in the level-`n` game (`n` the strategy's level): values
/// floored to the grid, execution prices integrated against the true noise
/// density.
pub fn discrete_utility(game: &ContinuousGame, strategy: &StepYoungMeasure, prices: &StepPriceFunction) -> Result<Rational, ContinuousError> {
    utility(game, strategy, prices, true)
}

/// Expected utility in the continuous game for step strategy and prices.
pub fn continuous_utility(game: &ContinuousGame, strategy: &StepYoungMeasure, prices: &StepPriceFunction) -> Result<Rational, ContinuousError> {
    utility(game, strategy, prices, false)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtin::uniform_continuum;
    use crate::game::expected_utility;
    use crate::scalar::rat;

    #[test]
    fn level_one_grids() {
        let game = uniform_continuum();
        let level = discretize(&game, 1).unwrap();
        let spec = level.spec();
        assert_eq!(spec.noise(), &[rat(-1, 1), rat(-1, 2), rat(0, 1), rat(1, 2)]);
        assert!(spec.noise_probs().iter().all(|p| *p == rat(1, 4)));
        assert_eq!(spec.values(), &[rat(1, 2), rat(0, 1)]);
        assert_eq!(spec.prior(), &[rat(1, 2), rat(1, 2)]);
        assert_eq!(spec.trades().len(), 5);
        assert!(matches!(discretize(&game, 0), Err(ContinuousError::ZeroLevel)));

        let point = ContinuousGame::new(
            super::super::ValueDistribution::point(rat(1, 1)).unwrap(),
            super::super::DyadicDensity::uniform(),
            (-1).into(),
            1.into(),
        )
        .unwrap();
        let level = discretize(&point, 3).unwrap();
        assert_eq!(level.spec().values(), &[rat(1, 1)]);
        assert_eq!(level.state_cells(), &[8]);
    }

    #[test]
    fn fine_density_needs_fine_grid() {
        let g = super::super::DyadicDensity::new(2, vec![rat(1, 2); 8]).unwrap();
        let game = ContinuousGame::new(super::super::ValueDistribution::uniform(), g, (-1).into(), 1.into()).unwrap();
        assert!(matches!(discretize(&game, 1), Err(ContinuousError::DensityTooFine { density: 2, n: 1 })));
        assert!(discretize(&game, 2).is_ok());
    }

    #[test]
    fn buy_one_against_half() {
        let game = uniform_continuum();
        let xi = StepYoungMeasure::pure(&game, 1, |_| 2).unwrap();
        let s = StepPriceFunction::constant(&game, 1, rat(1, 2)).unwrap();
        assert_eq!(discrete_utility(&game, &xi, &s).unwrap(), rat(-1, 4));
        assert_eq!(continuous_utility(&game, &xi, &s).unwrap(), rat(0, 1));
        let zero = StepYoungMeasure::pure(&game, 1, |_| 0).unwrap();
        assert_eq!(discrete_utility(&game, &zero, &s).unwrap(), rat(0, 1));
    }

    #[test]
    fn matches_tree_utility() {
        let game = uniform_continuum();
        let level = discretize(&game, 2).unwrap();
        let tree = GameTree::build(level.spec()).unwrap();
        let xi = StepYoungMeasure::pure(&game, 2, |k| k - 2).unwrap();
        let values: Vec<Rational> = (0..16).map(|j| rat((j * 7 % 16) as i64, 16)).collect();
        let s = StepPriceFunction::new(&game, 2, values).unwrap();
        let strategy = xi.to_strategy(&level, &tree).unwrap();
        let tree_u = expected_utility(&tree, &strategy, &s.to_pricing(&tree)).unwrap();
        assert_eq!(discrete_utility(&game, &xi, &s).unwrap(), tree_u);
        let back = StepYoungMeasure::from_strategy(&level, &strategy);
        assert_eq!(back.cells()[..4], xi.cells()[..4]);
        let pricing = s.to_pricing(&tree);
        assert_eq!(StepPriceFunction::from_pricing(&level, &tree, &pricing).unwrap(), s);
    }
}
