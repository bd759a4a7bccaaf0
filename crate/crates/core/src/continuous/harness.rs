use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::SpecError;
use crate::game::{BehaviourStrategy, GameTree, TreeLimits};
use crate::pricing::{rational_prices, FlowProbabilities};
use crate::scalar::{snap_dyadic, Rational};
use crate::solver::{sequential_equilibrium, support_enumeration_single_period, Arithmetic, EpsilonSchedule, EquilibriumCertificate, SolveMode, SolverConfig};
use crate::verifier::{verify_kyle, VerificationReport};

use super::discretize::{continuous_utility, discrete_utility, discretize, DiscretizationLevel, StepPriceFunction, StepYoungMeasure};
use super::{dyadic, floor_scaled, ContinuousError, ContinuousGame};

/// Bits kept when snapping floating strategy weights onto dyadic rationals.
const SNAP_BITS: u32 = 30;

/// Tolerance of the per-level deviation check.
pub const LEVEL_TOLERANCE: f64 = 1e-6;

/// Solver settings sized for the larger discretized games: a short ε
/// schedule, bounded sweep budgets and no Newton polish.
pub fn continuum_config() -> SolverConfig {
    SolverConfig {
        schedule: EpsilonSchedule::Geometric { ratio: 0.25, levels: 10 },
        max_iters: 100,
        logit_temperature: 1e-2,
        logit_sweeps: 5,
        polish: false,
        ..SolverConfig::default()
    }
}

/// One solved level of the discretized sequence.
///
/// The strategy is the solver's, snapped to short dyadic weights; prices are
/// its exact Bayes prices on reached flows and the certificate's prices
/// elsewhere.
#[derive(Debug, Clone)]
pub struct LevelSolution {
    pub level: DiscretizationLevel,
    pub tree: GameTree,
    pub certificate: EquilibriumCertificate,
    pub strategy: StepYoungMeasure,
    pub prices: StepPriceFunction,
    pub verification: VerificationReport<f64>,
}

#[derive(Debug, Clone)]
pub struct SequenceOutcome {
    pub solutions: Vec<LevelSolution>,
    /// First level skipped because its tree exceeded the size limits.
    pub truncated: Option<u32>,
}

/// Solves the discretized game at each of `levels`, stopping at the first
/// level whose tree exceeds `limits`.
pub fn solve_sequence(
    game: &ContinuousGame,
    levels: &[u32],
    config: &SolverConfig,
    limits: TreeLimits,
) -> Result<SequenceOutcome, ContinuousError> {
    let mut solutions = Vec::with_capacity(levels.len());
    for &n in levels {
        let level = discretize(game, n)?;
        let tree = match GameTree::build_with(level.spec(), limits) {
            Ok(tree) => tree,
            Err(SpecError::TooLarge { .. }) => return Ok(SequenceOutcome { solutions, truncated: Some(n) }),
            Err(e) => return Err(e.into()),
        };
        let certificate = solve_level(&tree, config)?;
        solutions.push(finish_level(level, tree, certificate)?);
    }
    Ok(SequenceOutcome { solutions, truncated: None })
}

fn solve_level(tree: &GameTree, config: &SolverConfig) -> Result<EquilibriumCertificate, ContinuousError> {
    let by_support = |tree: &GameTree| support_enumeration_single_period(tree, config).map(|certs| certs.into_iter().next());
    let found = match config.mode {
        SolveMode::Homotopy => None,
        SolveMode::SupportEnumeration => by_support(tree)?,
        SolveMode::Both => by_support(tree).ok().flatten(),
    };
    match found {
        Some(cert) => Ok(cert),
        None => Ok(sequential_equilibrium(tree, config)?),
    }
}

/// Snaps a row to multiples of `2^-SNAP_BITS`, putting the rounding slack on
/// its largest entry.
fn snap_row(row: &[Rational]) -> Vec<Rational> {
    let mut out: Vec<Rational> = row.iter().map(|w| snap_dyadic(w.to_f64().unwrap_or(0.0), SNAP_BITS).max(Rational::zero())).collect();
    let top = (0..row.len()).fold(0, |best, i| if row[i] > row[best] { i } else { best });
    let rest: Rational = out.iter().enumerate().filter(|(i, _)| *i != top).map(|(_, w)| w).sum();
    out[top] = Rational::one() - rest;
    out
}

fn finish_level(
    level: DiscretizationLevel,
    tree: GameTree,
    mut certificate: EquilibriumCertificate,
) -> Result<LevelSolution, ContinuousError> {
    if certificate.arithmetic == Arithmetic::Float {
        let rows = certificate.strategy.rows().map(snap_row).collect();
        certificate.strategy = BehaviourStrategy::new(&tree, rows)?;
    }
    let bayes = rational_prices(&tree, &certificate.strategy);
    let mut prices = certificate.prices.clone();
    for (t, flow, p) in bayes.entries() {
        prices.set(t, flow, p.clone());
    }
    certificate.prices = prices;
    let strategy_f = certificate.strategy.to_f64();
    let prices_f = certificate.prices.map(|p| p.to_f64().unwrap_or(f64::NAN));
    let verification = verify_kyle(&tree, &strategy_f, &prices_f, &(LEVEL_TOLERANCE * crate::solver::payoff_scale(&tree).max(1.0)))?;
    let strategy = StepYoungMeasure::from_strategy(&level, &certificate.strategy);
    let step_prices = StepPriceFunction::from_pricing(&level, &tree, &certificate.prices)?;
    Ok(LevelSolution { level, tree, certificate, strategy, prices: step_prices, verification })
}

/// Rational-pricing residuals of a solved level: for each `m` from `0` to the
/// level, the largest `|E[1_A(y) (v - S(y))]|` over dyadic flow cells `A` of
/// width `2^-m`, in the level's discrete game.
pub fn pricing_residuals(solution: &LevelSolution) -> Vec<Rational> {
    let tree = &solution.tree;
    let probs = FlowProbabilities::compute(tree, &solution.certificate.strategy);
    let values = tree.spec().values();
    let per_flow: Vec<Rational> = (0..tree.n_flows())
        .map(|f| {
            let price = solution.certificate.prices.get(1, f).cloned().unwrap_or_default();
            probs.joint_row(1, f).iter().zip(values).map(|(p, v)| p * (v - &price)).sum()
        })
        .collect();
    (0..=solution.level.n())
        .map(|m| {
            let mut cells: BTreeMap<i64, Rational> = BTreeMap::new();
            for (f, r) in per_flow.iter().enumerate() {
                *cells.entry(floor_scaled(&tree.flows()[f], m)).or_default() += r;
            }
            cells.values().map(Signed::abs).max().unwrap_or_default()
        })
        .collect()
}

/// How forward convex combinations weight the sequence.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum WindowRule {
    /// Running mean of all terms so far.
    #[default]
    Growing,
    /// Mean of the next `w` terms, starting at each index.
    Fixed(usize),
}

impl WindowRule {
    /// Index ranges averaged for a sequence of `len` terms.
    fn windows(self, len: usize) -> Vec<core::ops::Range<usize>> {
        match self {
            Self::Growing => (1..=len).map(|e| 0..e).collect(),
            Self::Fixed(w) => {
                let w = w.max(1);
                (0..len.saturating_sub(w - 1)).map(|s| s..s + w).collect()
            }
        }
    }
}

/// Averaged price functions on the finest common grid, with cellwise
/// oscillation diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct CesaroSequence {
    pub level: u32,
    pub averages: Vec<StepPriceFunction>,
    /// Sup-norm change between successive averages.
    pub sup_increments: Vec<Rational>,
    /// Mean absolute cellwise change between successive averages.
    pub l1_increments: Vec<Rational>,
    /// Sup-norm change between successive raw price functions.
    pub raw_sup_increments: Vec<Rational>,
}

impl CesaroSequence {
    /// Last sup-norm increment of the averages, zero for a single average.
    pub fn oscillation(&self) -> Rational {
        self.sup_increments.last().cloned().unwrap_or_default()
    }

    /// Largest sup-norm increment of the raw sequence.
    pub fn raw_oscillation(&self) -> Rational {
        self.raw_sup_increments.iter().max().cloned().unwrap_or_default()
    }
}

fn increments(fs: &[StepPriceFunction]) -> (Vec<Rational>, Vec<Rational>) {
    fs.windows(2)
        .map(|w| {
            let diffs: Vec<Rational> = w[0].values().iter().zip(w[1].values()).map(|(a, b)| (a - b).abs()).collect();
            let sup = diffs.iter().max().cloned().unwrap_or_default();
            let mean = diffs.iter().sum::<Rational>() / Rational::from_integer(diffs.len().max(1).into());
            (sup, mean)
        })
        .unzip()
}

/// Forward convex combinations of `prices` under `rule`, on the finest grid
/// among them.
pub fn cesaro_prices(prices: &[StepPriceFunction], rule: WindowRule) -> Result<CesaroSequence, ContinuousError> {
    if prices.len() < 2 {
        return Err(ContinuousError::Shape("averaging needs at least two price functions".into()));
    }
    let lo = prices[0].lo();
    if prices.iter().any(|p| p.lo() != lo) {
        return Err(ContinuousError::Shape("price functions live on different flow ranges".into()));
    }
    let level = prices.iter().map(StepPriceFunction::level).max().unwrap_or(0);
    let fine: Vec<StepPriceFunction> = prices.iter().map(|p| p.refine(level)).collect();
    let cells = fine[0].values().len();
    let averages: Vec<StepPriceFunction> = rule
        .windows(fine.len())
        .into_iter()
        .map(|range| {
            let weight = Rational::new(1.into(), (range.len() as i64).into());
            let values = (0..cells).map(|j| fine[range.clone()].iter().map(|p| &p.values()[j]).sum::<Rational>() * &weight).collect();
            StepPriceFunction::from_parts(level, lo, values)
        })
        .collect();
    let (sup_increments, l1_increments) = increments(&averages);
    let (raw_sup_increments, _) = increments(&fine);
    Ok(CesaroSequence { level, averages, sup_increments, l1_increments, raw_sup_increments })
}

/// Lemma-style diagnostics for one level.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub n: u32,
    /// Utility of the level's solution in its own discrete game.
    pub utility: Rational,
    /// Utility of the same strategy and prices in the continuous game.
    pub continuous_utility: Rational,
    /// Forward average of the utilities under the window rule, where defined.
    pub cesaro_utility: Option<Rational>,
    /// Largest rational-pricing residual over dyadic cells of width at
    /// least `2^-n`.
    pub pricing_residual: Rational,
    /// Narrow proxy distance to the previous level's strategy.
    pub narrow_proxy: Option<f64>,
    /// Sup-norm increment of the averaged prices arriving at this level.
    pub price_oscillation: Option<Rational>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceReport {
    pub rows: Vec<ConvergenceRow>,
    pub cesaro: Option<CesaroSequence>,
}

/// Trade powers used by the narrow proxy in [`convergence_report`].
pub const PROXY_POWERS: [u32; 4] = [0, 1, 2, 3];

/// Utilities, pricing residuals, narrow proxies and price oscillation along
/// a solved sequence.
pub fn convergence_report(game: &ContinuousGame, solutions: &[LevelSolution], rule: WindowRule) -> Result<ConvergenceReport, ContinuousError> {
    let mut utilities = Vec::with_capacity(solutions.len());
    for s in solutions {
        utilities.push(discrete_utility(game, &s.strategy, &s.prices)?);
    }
    let windows = rule.windows(utilities.len());
    let cesaro = if solutions.len() >= 2 {
        Some(cesaro_prices(&solutions.iter().map(|s| s.prices.clone()).collect::<Vec<_>>(), rule)?)
    } else {
        None
    };
    let mut rows = Vec::with_capacity(solutions.len());
    for (i, s) in solutions.iter().enumerate() {
        let cesaro_utility = window_ending_or_starting(rule, &windows, i).map(|r| {
            utilities[r.clone()].iter().sum::<Rational>() / Rational::from_integer((r.len() as i64).into())
        });
        let narrow_proxy = match i {
            0 => None,
            _ => {
                let prev = &solutions[i - 1];
                let set_level = prev.level.n().min(s.level.n());
                Some(narrow_distance(game, &prev.strategy, &s.strategy, set_level, &PROXY_POWERS)?)
            }
        };
        let price_oscillation = cesaro.as_ref().and_then(|c| c.sup_increments.get(i.checked_sub(1)?).cloned());
        rows.push(ConvergenceRow {
            n: s.level.n(),
            utility: utilities[i].clone(),
            continuous_utility: continuous_utility(game, &s.strategy, &s.prices)?,
            cesaro_utility,
            pricing_residual: pricing_residuals(s).into_iter().max().unwrap_or_default(),
            narrow_proxy,
            price_oscillation,
        });
    }
    Ok(ConvergenceReport { rows, cesaro })
}

/// The averaging window attached to row `i`: the running mean ending at `i`
/// for growing windows, the forward window starting at `i` otherwise.
fn window_ending_or_starting(rule: WindowRule, windows: &[core::ops::Range<usize>], i: usize) -> Option<core::ops::Range<usize>> {
    match rule {
        WindowRule::Growing => windows.get(i).cloned(),
        WindowRule::Fixed(_) => windows.iter().find(|r| r.start == i).cloned(),
    }
}

/// Cell-conditional approximation of `target` at level `n`: each value cell
/// of width `2^-n` trades the `nu`-weighted mixture of the target's trades
/// on it, floored to the `n`-grid; `nu`-null cells trade zero.
pub fn approximate_strategy(game: &ContinuousGame, target: &StepYoungMeasure, n: u32) -> Result<StepYoungMeasure, ContinuousError> {
    if n == 0 {
        return Err(ContinuousError::ZeroLevel);
    }
    let m = target.level();
    let top = 1i64 << n;
    let floor_trade = |t: i64| if m >= n { t >> (m - n) } else { t << (n - m) };
    let mut cells = Vec::with_capacity(top as usize + 1);
    for k in 0..=top {
        let (mass, _) = game.value().cell(n, k);
        if mass.is_zero() {
            cells.push(vec![(0, Rational::one())]);
            continue;
        }
        let mut mix: BTreeMap<i64, Rational> = BTreeMap::new();
        for (c, overlap) in overlapping_cells(game, n, k, m) {
            for (t, w) in target.cell(c as usize) {
                *mix.entry(floor_trade(*t)).or_default() += w * &overlap;
            }
        }
        cells.push(mix.into_iter().filter(|(_, w)| !w.is_zero()).map(|(t, w)| (t, w / &mass)).collect());
    }
    Ok(StepYoungMeasure::from_parts(n, game, cells))
}

/// Value cells of level `m` meeting cell `k` of level `n`, with the value mass
/// of the overlap.
fn overlapping_cells(game: &ContinuousGame, n: u32, k: i64, m: u32) -> Vec<(i64, Rational)> {
    if m <= n {
        vec![(k >> (n - m), game.value().cell(n, k).0)]
    } else {
        let top = 1i64 << m;
        ((k << (m - n))..((k + 1) << (m - n)))
            .filter(|&c| c <= top)
            .map(|c| (c, game.value().cell(m, c).0))
            .filter(|(_, mass)| !mass.is_zero())
            .collect()
    }
}

/// Test integrals `∫∫ 1_D(v) 1_E(x) x^p dξ(v)(x) dν(v)` for all dyadic cells
/// `D` of values and `E` of trades at level `m`, keyed by `(D, E)`.
fn cell_integrals(game: &ContinuousGame, xi: &StepYoungMeasure, m: u32, power: u32) -> BTreeMap<(i64, i64), Rational> {
    let s = xi.level();
    let mut out: BTreeMap<(i64, i64), Rational> = BTreeMap::new();
    for (k, cell) in xi.cells().iter().enumerate() {
        let parts: Vec<(i64, Rational)> = if m >= s {
            overlapping_cells(game, s, k as i64, m)
        } else {
            vec![(k as i64 >> (s - m), game.value().cell(s, k as i64).0)]
        };
        for (t, w) in cell {
            let x = dyadic(*t, s);
            let e = floor_scaled(&x, m);
            let f = num_traits::pow(x, power as usize);
            for (d, mass) in &parts {
                if !mass.is_zero() {
                    *out.entry((*d, e)).or_default() += w * mass * &f;
                }
            }
        }
    }
    out
}

/// Narrow proxy distance between two step strategies: the largest difference
/// of the test integrals over dyadic value and trade cells of levels
/// `0..=set_level` and trade powers `powers`.
pub fn narrow_distance(
    game: &ContinuousGame,
    a: &StepYoungMeasure,
    b: &StepYoungMeasure,
    set_level: u32,
    powers: &[u32],
) -> Result<f64, ContinuousError> {
    let mut worst = Rational::zero();
    for m in 0..=set_level {
        for &p in powers {
            let ia = cell_integrals(game, a, m, p);
            let ib = cell_integrals(game, b, m, p);
            for key in ia.keys().chain(ib.keys()) {
                let zero = Rational::zero();
                let gap = (ia.get(key).unwrap_or(&zero) - ib.get(key).unwrap_or(&zero)).abs();
                if gap > worst {
                    worst = gap;
                }
            }
        }
    }
    Ok(worst.to_f64().unwrap_or(f64::INFINITY))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::builtin::uniform_continuum;
    use crate::scalar::rat;
    use crate::solver::CertificateFlag;

    fn rademacher(game: &ContinuousGame, level: u32, phase: bool) -> StepPriceFunction {
        let len = ((game.upper() - game.lower() + 2) as usize) << level;
        let values = (0..len).map(|j| if (j % 2 == 0) == phase { rat(1, 1) } else { rat(0, 1) }).collect();
        StepPriceFunction::new(game, level, values).unwrap()
    }

    #[test]
    fn constant_prices_do_not_oscillate() {
        let game = uniform_continuum();
        let s = StepPriceFunction::constant(&game, 2, rat(1, 3)).unwrap();
        let seq = cesaro_prices(&[s.clone(), s.clone(), s.clone()], WindowRule::Growing).unwrap();
        assert!(seq.averages.iter().all(|a| a == &s));
        assert_eq!(seq.oscillation(), rat(0, 1));
        assert!(cesaro_prices(&[s], WindowRule::Growing).is_err());
    }

    #[test]
    fn averaging_damps_alternation() {
        let game = uniform_continuum();
        let raw: Vec<_> = (0..8).map(|i| rademacher(&game, 2, i % 2 == 0)).collect();
        let seq = cesaro_prices(&raw, WindowRule::Growing).unwrap();
        assert_eq!(seq.raw_oscillation(), rat(1, 1));
        assert!(seq.sup_increments.windows(2).all(|w| w[1] <= w[0]));
        assert_eq!(seq.averages.last().unwrap().values()[0], rat(1, 2));
        let fixed = cesaro_prices(&raw, WindowRule::Fixed(2)).unwrap();
        assert_eq!(fixed.averages.len(), 7);
        assert_eq!(fixed.oscillation(), rat(0, 1));
    }

    #[test]
    fn approximation_is_idempotent_and_converges() {
        let game = uniform_continuum();
        let target = StepYoungMeasure::pure(&game, 3, |k| if k == 8 { 0 } else { k - 4 }).unwrap();
        assert_eq!(approximate_strategy(&game, &target, 3).unwrap(), target);
        let mut last = f64::INFINITY;
        for n in 1..=3 {
            let approx = approximate_strategy(&game, &target, n).unwrap();
            let d = narrow_distance(&game, &approx, &target, n, &[1]).unwrap();
            assert!(d < last || d == 0.0, "n = {n}: {d} after {last}");
            last = d;
        }
        assert_eq!(last, 0.0);
        let coarse = approximate_strategy(&game, &target, 1).unwrap();
        assert_eq!(coarse.cell(2), &[(0, rat(1, 1))]);
    }

    #[test]
    fn level_pricing_is_exact() {
        let game = uniform_continuum();
        let out = solve_sequence(&game, &[1, 2], &SolverConfig::default(), TreeLimits::default()).unwrap();
        assert_eq!(out.solutions.len(), 2);
        for s in &out.solutions {
            assert!(pricing_residuals(s).iter().all(Zero::is_zero));
            let flagged = s.certificate.has_flag(CertificateFlag::Unconverged);
            assert!(s.verification.passed || flagged, "level {}: gain {}", s.level.n(), s.verification.max_deviation_gain);
        }
        let report = convergence_report(&game, &out.solutions, WindowRule::Growing).unwrap();
        assert_eq!(report.rows.len(), 2);
        assert!(report.rows[1].narrow_proxy.is_some());
        let capped = solve_sequence(&game, &[1, 3], &SolverConfig::default(), TreeLimits { max_outcomes: 1000 }).unwrap();
        assert_eq!(capped.truncated, Some(3));
    }
}
