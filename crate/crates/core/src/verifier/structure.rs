use alloc::string::String;
use alloc::vec::Vec;

use num_traits::{One, Signed, Zero};

use crate::game::{BehaviourStrategy, GameSpec, GameTree, NodeId};
use crate::pricing::PricingSystem;
use crate::scalar::{Rational, Scalar};

/// Outcome of [`check_assumption_grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct GridCheck {
    pub passed: bool,
    /// `(x1, z1, x2)` with `x1 + z1 - x2` inside the noise hull but not on
    /// the noise grid.
    pub witness: Option<(Rational, Rational, Rational)>,
}

/// Checks that every flow `x1 + z1` reachable from another trade `x2` by
/// noise within the hull of the noise grid is reachable by noise on the grid.
pub fn check_assumption_grid(spec: &GameSpec) -> GridCheck {
    let noise = spec.noise();
    let (lo, hi) = (&noise[0], &noise[noise.len() - 1]);
    for x1 in spec.trades() {
        for z1 in noise {
            for x2 in spec.trades() {
                let d = x1 + z1 - x2;
                if &d >= lo && &d <= hi && noise.binary_search(&d).is_err() {
                    return GridCheck { passed: false, witness: Some((x1.clone(), z1.clone(), x2.clone())) };
                }
            }
        }
    }
    GridCheck { passed: true, witness: None }
}

/// Tolerances for the structure checks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StructureOptions {
    /// A trade is in the support when its probability exceeds this; zero
    /// means strictly positive.
    pub support_threshold: f64,
    /// Slack for price comparisons; zero means exact.
    pub tol: f64,
}

impl StructureOptions {
    pub const EXACT: Self = Self { support_threshold: 0.0, tol: 0.0 };
    /// Defaults for floating solver output.
    pub const FLOAT: Self = Self { support_threshold: 1e-8, tol: 1e-6 };
}

/// A failed property with a description of the instance that breaks it.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub message: String,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LemmaCheck {
    Pass,
    Fail(Violation),
}

impl LemmaCheck {
    pub fn passed(&self) -> bool {
        matches!(self, Self::Pass)
    }
}

/// Outcome of [`check_structure_lemma`].
#[derive(Debug, Clone, PartialEq)]
pub struct StructureReport {
    /// Demand is nondecreasing in the value.
    pub monotone_demand: LemmaCheck,
    /// Order sizes separated by a gap wider than the noise range trade at
    /// their value on average.
    pub gap_pricing: LemmaCheck,
    /// Prices are ordered on reached flows at least two apart.
    pub price_order: LemmaCheck,
    /// Prices at the extreme values propagate along reached flows.
    pub price_pinning: LemmaCheck,
    /// The grid condition fails, so the checks carry no guarantee.
    pub grid_condition_fails: bool,
}

impl StructureReport {
    pub fn all_passed(&self) -> bool {
        self.monotone_demand.passed() && self.gap_pricing.passed() && self.price_order.passed() && self.price_pinning.passed()
    }
}

fn fail(message: String) -> LemmaCheck {
    LemmaCheck::Fail(Violation { message })
}

/// Single-period view of a strategy and prices: the expected value at each
/// decision node, its support, and reached flows.
struct View<'a, S> {
    tree: &'a GameTree,
    values: Vec<S>,
    support: Vec<Vec<bool>>,
    reached: Vec<bool>,
    prices: &'a PricingSystem<S>,
    tol: S,
}

impl<'a, S: Scalar> View<'a, S> {
    fn new(tree: &'a GameTree, strategy: &BehaviourStrategy<S>, prices: &'a PricingSystem<S>, options: StructureOptions) -> Self {
        let spec = tree.spec();
        let nodes: Vec<NodeId> = tree.period_nodes(1).collect();
        let values = nodes.iter().map(|&n| S::from_rational(spec.cell_mean(1, tree.node(n).cell))).collect();
        let support: Vec<Vec<bool>> = nodes
            .iter()
            .map(|&n| {
                strategy
                    .row(n)
                    .iter()
                    .map(|p| if options.support_threshold == 0.0 { *p > S::zero() } else { p.to_f64() > options.support_threshold })
                    .collect()
            })
            .collect();
        let mut reached = alloc::vec![false; tree.n_flows()];
        for row in &support {
            for (x, _) in row.iter().enumerate().filter(|(_, s)| **s) {
                for z in 0..tree.n_noise() {
                    reached[tree.flow_index(x, z)] = true;
                }
            }
        }
        let tol = S::from_rational(&options.tol.to_rational());
        Self { tree, values, support, reached, prices, tol }
    }

    fn trades(&self) -> &[Rational] {
        self.tree.spec().trades()
    }

    fn price(&self, flow: usize) -> Option<&S> {
        self.prices.get(1, flow)
    }

    fn eq(&self, a: &S, b: &S) -> bool {
        (a.clone() - b.clone()).abs_val() <= self.tol
    }

    fn le(&self, a: &S, b: &S) -> bool {
        *a <= b.clone() + self.tol.clone()
    }

    /// Average execution price of trade `x`, if every flow it can produce
    /// has a price.
    fn average_price(&self, x: usize) -> Option<S> {
        let spec = self.tree.spec();
        let mut total = S::zero();
        for z in 0..self.tree.n_noise() {
            let p = self.price(self.tree.flow_index(x, z))?;
            total = total + S::from_rational(&spec.noise_probs()[z]) * p.clone();
        }
        Some(total)
    }

    fn any_support(&self, x: usize) -> bool {
        self.support.iter().any(|row| row[x])
    }
}

/// Runs the single-period structure checks on a claimed equilibrium.
///
/// The expected value of each information cell plays the role of the true
/// value, so coarse first-period partitions are handled as the equivalent
/// game on cell means.
pub fn check_structure_lemma<S: Scalar>(
    tree: &GameTree,
    strategy: &BehaviourStrategy<S>,
    prices: &PricingSystem<S>,
    options: StructureOptions,
) -> Result<StructureReport, crate::error::EvalError> {
    if tree.horizon() != 1 {
        return Err(crate::error::EvalError::BadFlow("structure checks need a single-period game".into()));
    }
    strategy.check_shape(tree)?;
    let view = View::new(tree, strategy, prices, options);
    Ok(StructureReport {
        monotone_demand: monotone_demand(&view),
        gap_pricing: gap_pricing(&view),
        price_order: price_order(&view),
        price_pinning: price_pinning(&view),
        grid_condition_fails: !check_assumption_grid(tree.spec()).passed,
    })
}

fn monotone_demand<S: Scalar>(view: &View<'_, S>) -> LemmaCheck {
    let trades = view.trades();
    for (a, row_a) in view.support.iter().enumerate() {
        for (b, row_b) in view.support.iter().enumerate() {
            if !(view.values[a] < view.values[b]) {
                continue;
            }
            for x in (0..trades.len()).filter(|&x| row_a[x]) {
                if let Some(y) = (0..x).find(|&y| row_b[y]) {
                    return fail(alloc::format!(
                        "value {} trades {} while the higher value {} trades {}",
                        view.values[a],
                        trades[x],
                        view.values[b],
                        trades[y]
                    ));
                }
            }
        }
    }
    LemmaCheck::Pass
}

fn gap_pricing<S: Scalar>(view: &View<'_, S>) -> LemmaCheck {
    let trades = view.trades();
    let two = Rational::from_integer(2.into());
    for (i, x) in trades.iter().enumerate() {
        if x.is_zero() {
            continue;
        }
        let buy = x.is_positive();
        // No supported trade strictly within two units on the near side.
        let clear = (0..trades.len()).all(|j| {
            let inside = if buy { trades[j] >= x - &two && trades[j] < *x } else { trades[j] <= x + &two && trades[j] > *x };
            !inside || !view.any_support(j)
        });
        if !clear {
            continue;
        }
        for j in (0..trades.len()).filter(|&j| if buy { j >= i } else { j <= i }) {
            for (node, row) in view.support.iter().enumerate() {
                if !row[j] {
                    continue;
                }
                let Some(avg) = view.average_price(j) else { continue };
                if !view.eq(&avg, &view.values[node]) {
                    return fail(alloc::format!(
                        "trade {} at value {} has average price {} although no order lies within two units below {}",
                        trades[j],
                        view.values[node],
                        avg,
                        x
                    ));
                }
            }
        }
    }
    LemmaCheck::Pass
}

fn reached_prices<'v, S: Scalar>(view: &'v View<'_, S>) -> Vec<(usize, &'v S)> {
    (0..view.tree.n_flows()).filter(|&f| view.reached[f]).filter_map(|f| view.price(f).map(|p| (f, p))).collect()
}

fn price_order<S: Scalar>(view: &View<'_, S>) -> LemmaCheck {
    let flows = view.tree.flows();
    let two = Rational::from_integer(2.into());
    let reached = reached_prices(view);
    for &(f1, p1) in &reached {
        for &(f2, p2) in &reached {
            if flows[f2] >= &flows[f1] + &two && !view.le(p1, p2) {
                return fail(alloc::format!("S({}) = {} exceeds S({}) = {}", flows[f1], p1, flows[f2], p2));
            }
        }
    }
    LemmaCheck::Pass
}

fn price_pinning<S: Scalar>(view: &View<'_, S>) -> LemmaCheck {
    let flows = view.tree.flows();
    let top = view.values.iter().cloned().fold(view.values[0].clone(), |a, b| a.max_val(b));
    let bottom = view.values.iter().cloned().fold(view.values[0].clone(), |a, b| if b < a { b } else { a });
    let reached = reached_prices(view);
    for &(f1, p1) in &reached {
        for &(f2, p2) in &reached {
            if flows[f2] < flows[f1] {
                continue;
            }
            if view.eq(p1, &top) && !view.eq(p2, &top) {
                return fail(alloc::format!("S({}) is the top value {} but S({}) = {}", flows[f1], top, flows[f2], p2));
            }
            if view.eq(p2, &bottom) && !view.eq(p1, &bottom) {
                return fail(alloc::format!("S({}) is the bottom value {} but S({}) = {}", flows[f2], bottom, flows[f1], p1));
            }
        }
    }
    LemmaCheck::Pass
}

/// Which side of the order-size dichotomy holds.
#[derive(Debug, Clone, PartialEq)]
pub enum OrderBound {
    /// Every order on this side executes at the extreme value.
    Pinned,
    /// All supported orders on this side stay below the bound.
    Bounded,
    /// A supported order reaches the bound while prices are not pinned.
    Violated { order: Rational },
}

#[derive(Debug, Clone, PartialEq)]
pub enum OrderBoundReport {
    NotApplicable { reason: String },
    Checked { buy_bound: Rational, buy: OrderBound, sell_bound: Rational, sell: OrderBound },
}

impl OrderBoundReport {
    /// `true` unless a side is violated.
    pub fn holds(&self) -> bool {
        match self {
            Self::NotApplicable { .. } => true,
            Self::Checked { buy, sell, .. } => !matches!(buy, OrderBound::Violated { .. }) && !matches!(sell, OrderBound::Violated { .. }),
        }
    }
}

/// Checks the order-size dichotomy: on each side, either all orders execute
/// at the extreme value or supported orders stay below `6 + 6 / ζ(±1)`.
pub fn check_order_bound<S: Scalar>(
    tree: &GameTree,
    strategy: &BehaviourStrategy<S>,
    prices: &PricingSystem<S>,
    options: StructureOptions,
) -> OrderBoundReport {
    let spec = tree.spec();
    let not = |reason: &str| OrderBoundReport::NotApplicable { reason: reason.into() };
    if tree.horizon() != 1 {
        return not("the game has more than one period");
    }
    let one = Rational::one();
    let noise = spec.noise();
    if noise.iter().any(|z| z.abs() > one) {
        return not("noise leaves [-1, 1]");
    }
    let (Some(up), Some(down)) = (spec.noise_index(&one), spec.noise_index(&-one.clone())) else {
        return not("noise grid lacks -1 or 1");
    };
    if spec.trade_index(&Rational::zero()).is_none() {
        return not("trade grid lacks 0");
    }
    if strategy.check_shape(tree).is_err() {
        return not("strategy does not match the tree");
    }
    let view = View::new(tree, strategy, prices, options);
    let six = Rational::from_integer(6.into());
    let buy_bound = &six + &six / &spec.noise_probs()[up];
    let sell_bound = &six + &six / &spec.noise_probs()[down];
    let top = view.values.iter().cloned().fold(view.values[0].clone(), |a, b| a.max_val(b));
    let bottom = view.values.iter().cloned().fold(view.values[0].clone(), |a, b| if b < a { b } else { a });
    let side = |buy: bool, bound: &Rational, extreme: &S| {
        let trades = view.trades();
        let on_side: Vec<usize> = (0..trades.len()).filter(|&x| if buy { trades[x].is_positive() } else { trades[x].is_negative() }).collect();
        let pinned = on_side.iter().all(|&x| {
            (0..tree.n_noise()).all(|z| view.price(tree.flow_index(x, z)).is_some_and(|p| view.eq(p, extreme)))
        });
        if pinned {
            return OrderBound::Pinned;
        }
        match on_side.iter().find(|&&x| view.any_support(x) && trades[x].abs() >= *bound) {
            Some(&x) => OrderBound::Violated { order: trades[x].clone() },
            None => OrderBound::Bounded,
        }
    };
    OrderBoundReport::Checked {
        buy: side(true, &buy_bound, &top),
        sell: side(false, &sell_bound, &bottom),
        buy_bound,
        sell_bound,
    }
}
