//! Equilibrium computation.
//!
//! [`sequential_equilibrium`] follows fixed points of the ε-perturbed game
//! down a decreasing ε schedule and extrapolates to ε = 0.
//! [`support_enumeration_single_period`] enumerates supports of small
//! single-period games and solves their indifference systems.
//! [`profit_curve`] and [`indifference_root`] specialise to the two-period
//! example with one mixing parameter.

mod example21;
mod homotopy;
mod linalg;
mod model;
mod support;

use alloc::string::String;
use alloc::vec::Vec;

use crate::error::EvalError;
use crate::game::BehaviourStrategy;
use crate::pricing::{BeliefSystem, PricingSystem};
use crate::scalar::Rational;

pub use example21::{indifference_root, reference_polynomial, profit_curve, pure_scan, ProfitPoint, PureScan, REFERENCE_POLYNOMIAL};
pub use homotopy::{best_reply_eps, fixed_point_eps, sequential_equilibrium, FixedPoint};
pub use support::support_enumeration_single_period;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SolverError {
    #[error("ε = {eps} is outside (0, 1/{n_trades})")]
    EpsilonOutOfRange { eps: f64, n_trades: usize },
    #[error("invalid solver configuration: {0}")]
    BadConfig(String),
    #[error("support enumeration needs a single-period game; use homotopy mode")]
    NotSinglePeriod,
    #[error("support enumeration would visit {count} support profiles, more than the cap of {cap}; use homotopy mode")]
    SupportCapExceeded { count: u128, cap: u128 },
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// Which solvers to run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SolveMode {
    #[default]
    Homotopy,
    SupportEnumeration,
    Both,
}

/// The ε levels visited by the homotopy.
#[derive(Debug, Clone, PartialEq, Default)]
pub enum EpsilonSchedule {
    /// `min(1 / (2K), 2^(-k-2))` for `k = 0..=20`, `K` the number of trades.
    #[default]
    Default,
    Explicit(Vec<Rational>),
    /// `levels` values starting at `1 / (2 |E_X|)`, each `ratio` times the
    /// previous.
    Geometric { ratio: f64, levels: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub schedule: EpsilonSchedule,
    /// Weight of the new best reply in each damped sweep, in `(0, 1]`.
    pub damping: f64,
    /// Sweep budget per ε level.
    pub max_iters: usize,
    /// Sup-norm strategy change that ends the damped iteration.
    pub fixed_point_tol: f64,
    /// Local optimality residual (relative to the payoff scale) that counts
    /// as converged.
    pub residual_tol: f64,
    pub mode: SolveMode,
    /// Sweeps of best-reply history searched for cycles.
    pub oscillation_window: usize,
    /// Initial logit temperature, relative to the payoff scale.
    pub logit_temperature: f64,
    /// Sweep budget per logit temperature.
    pub logit_sweeps: usize,
    /// Refine fixed points by Newton steps on the indifference conditions.
    pub polish: bool,
    /// Largest number of support profiles support enumeration may visit.
    pub support_cap: u128,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            schedule: EpsilonSchedule::Default,
            damping: 0.5,
            max_iters: 2000,
            fixed_point_tol: 1e-12,
            residual_tol: 1e-10,
            mode: SolveMode::Homotopy,
            oscillation_window: 8,
            logit_temperature: 1.0,
            logit_sweeps: 200,
            polish: true,
            support_cap: 200_000,
        }
    }
}

impl SolverConfig {
    /// The ε levels for a game with `n_trades` trades, largest first.
    pub fn epsilons(&self, n_trades: usize) -> Result<Vec<f64>, SolverError> {
        let eps: Vec<f64> = match &self.schedule {
            EpsilonSchedule::Default => {
                let cap = 1.0 / (2.0 * n_trades as f64);
                (0..=20).map(|k| cap.min(num_traits::Float::powi(0.5f64, k + 2))).collect()
            }
            EpsilonSchedule::Explicit(list) => list.iter().map(|e| num_traits::ToPrimitive::to_f64(e).unwrap_or(f64::NAN)).collect(),
            EpsilonSchedule::Geometric { ratio, levels } => {
                if !(*ratio > 0.0 && *ratio < 1.0) {
                    return Err(SolverError::BadConfig("geometric ε ratio must lie in (0, 1)".into()));
                }
                let start = 1.0 / (2.0 * n_trades as f64);
                (0..*levels).map(|k| start * num_traits::Float::powi(*ratio, k as i32)).collect()
            }
        };
        if eps.is_empty() {
            return Err(SolverError::BadConfig("empty ε schedule".into()));
        }
        let mut out: Vec<f64> = Vec::with_capacity(eps.len());
        for e in eps {
            if !(e > 0.0) || e * n_trades as f64 >= 1.0 {
                return Err(SolverError::EpsilonOutOfRange { eps: e, n_trades });
            }
            match out.last() {
                Some(&prev) if e > prev => return Err(SolverError::BadConfig("ε schedule must be decreasing".into())),
                Some(&prev) if e == prev && !matches!(self.schedule, EpsilonSchedule::Default) => {
                    return Err(SolverError::BadConfig("ε schedule must be strictly decreasing".into()))
                }
                Some(&prev) if e == prev => continue,
                _ => out.push(e),
            }
        }
        Ok(out)
    }

    pub fn validate(&self, n_trades: usize) -> Result<(), SolverError> {
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return Err(SolverError::BadConfig("damping must lie in (0, 1]".into()));
        }
        if !(self.fixed_point_tol > 0.0) || !(self.residual_tol > 0.0) {
            return Err(SolverError::BadConfig("tolerances must be positive".into()));
        }
        if self.max_iters == 0 || self.oscillation_window < 2 {
            return Err(SolverError::BadConfig("max_iters must be positive and the window at least 2".into()));
        }
        if !(self.logit_temperature > 0.0) {
            return Err(SolverError::BadConfig("logit temperature must be positive".into()));
        }
        self.epsilons(n_trades).map(|_| ())
    }
}

/// How a certificate's numbers were produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Arithmetic {
    /// Exact rationals; verify with tolerance zero.
    Exact,
    /// Exact images of floating-point values; verify with a tolerance.
    Float,
}

/// Diagnostics attached to a certificate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CertificateFlag {
    /// Some fixed point or the final polish missed its tolerance.
    Unconverged,
    /// The deviation gain of the extrapolated strategy grew along the trace.
    NonMonotoneTrace,
    /// Prices on flows unreached by the strategy were filled by a rule
    /// rather than derived from a trace.
    CompletedPrices,
}

/// One ε level of the homotopy.
#[derive(Debug, Clone, PartialEq)]
pub struct TracePoint {
    pub eps: f64,
    pub strategy: BehaviourStrategy<f64>,
    pub beliefs: BeliefSystem<f64>,
    /// Local optimality residual of the fixed point.
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Largest one-shot deviation gain of the strategy extrapolated to ε = 0.
    pub extrapolated_gain: f64,
}

/// A strategy, beliefs and induced prices, with the homotopy trace that
/// witnesses consistency.
#[derive(Debug, Clone, PartialEq)]
pub struct EquilibriumCertificate {
    pub arithmetic: Arithmetic,
    pub strategy: BehaviourStrategy<Rational>,
    pub beliefs: BeliefSystem<Rational>,
    pub prices: PricingSystem<Rational>,
    pub trace: Vec<TracePoint>,
    pub flags: Vec<CertificateFlag>,
}

impl EquilibriumCertificate {
    pub fn has_flag(&self, flag: CertificateFlag) -> bool {
        self.flags.contains(&flag)
    }

    pub fn is_converged(&self) -> bool {
        !self.has_flag(CertificateFlag::Unconverged)
    }
}

/// Exact image of a floating probability vector, with the largest entry
/// adjusted so the sum is exactly one.
pub(crate) fn exact_distribution(row: &[f64]) -> Vec<Rational> {
    use crate::scalar::Scalar;
    let mut out: Vec<Rational> = row.iter().map(|x| x.max(0.0).to_rational()).collect();
    let top = (0..row.len()).fold(0, |best, i| if row[i] > row[best] { i } else { best });
    let rest: Rational = out.iter().enumerate().filter(|(i, _)| *i != top).map(|(_, x)| x).sum();
    out[top] = <Rational as num_traits::One>::one() - rest;
    out
}

/// Exact strategy and beliefs from floating ones, each row summing to one.
pub(crate) fn exact_parts(
    tree: &crate::game::GameTree,
    strategy: &BehaviourStrategy<f64>,
    beliefs: &BeliefSystem<f64>,
) -> Result<(BehaviourStrategy<Rational>, BeliefSystem<Rational>), EvalError> {
    let rows = strategy.rows().map(exact_distribution).collect();
    let exact = BehaviourStrategy::new(tree, rows)?;
    let mut out = BeliefSystem::empty(tree);
    for (t, flow, b) in beliefs.entries() {
        out.set(t, flow, exact_distribution(b))?;
    }
    Ok((exact, out))
}

pub(crate) fn payoff_scale(tree: &crate::game::GameTree) -> f64 {
    let spec = tree.spec();
    let spread = num_traits::ToPrimitive::to_f64(&(spec.max_value() - spec.min_value())).unwrap_or(0.0);
    let size = spec.trades().iter().map(|x| num_traits::ToPrimitive::to_f64(x).unwrap_or(0.0).abs()).fold(0.0, f64::max);
    spread * size * spec.horizon() as f64
}
