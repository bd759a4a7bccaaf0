//! Single-period games with a continuum of values, noise and trades,
//! approximated on dyadic grids.
//!
//! A [`ContinuousGame`] has a value distribution on `[0, 1]`, a noise density
//! on `[-1, 1]` that is piecewise constant on a dyadic grid, and integer trade
//! bounds. [`discretize`] builds the level-`n` discrete game; step functions
//! embed discrete strategies and prices back into the continuum, and the
//! harness functions solve level sequences and report convergence
//! diagnostics.

mod discretize;
mod harness;

use alloc::string::String;
use alloc::vec::Vec;

use num_bigint::BigInt;
use num_traits::{One, ToPrimitive, Zero};

use crate::error::{EvalError, SpecError};
use crate::scalar::Rational;
use crate::solver::SolverError;

pub use discretize::{continuous_utility, discrete_utility, discretize, DiscretizationLevel, StepPriceFunction, StepYoungMeasure};
pub use harness::{
    approximate_strategy, cesaro_prices, continuum_config, convergence_report, narrow_distance, pricing_residuals, solve_sequence, CesaroSequence,
    ConvergenceReport, ConvergenceRow, LevelSolution, SequenceOutcome, WindowRule, LEVEL_TOLERANCE, PROXY_POWERS,
};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ContinuousError {
    #[error("invalid density: {0}")]
    Density(String),
    #[error("invalid value distribution: {0}")]
    Distribution(String),
    #[error("trade bounds must be integers with lower < 0 < upper, got [{lo}, {hi}]")]
    TradeBounds { lo: BigInt, hi: BigInt },
    #[error("grid level must be at least 1")]
    ZeroLevel,
    #[error("noise density is piecewise constant at level {density}, finer than grid level {n}")]
    DensityTooFine { density: u32, n: u32 },
    #[error("step function shape mismatch: {0}")]
    Shape(String),
    #[error(transparent)]
    Spec(#[from] SpecError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error(transparent)]
    Solver(#[from] SolverError),
}

/// `k / 2^n`.
pub(crate) fn dyadic(k: i64, n: u32) -> Rational {
    Rational::new(BigInt::from(k), BigInt::from(1u64) << n)
}

/// `floor(2^n x)` for a rational `x`.
pub(crate) fn floor_scaled(x: &Rational, n: u32) -> i64 {
    let scaled = x * Rational::from_integer(BigInt::from(1u64) << n);
    scaled.floor().to_integer().to_i64().expect("grid index fits in i64")
}

/// Density on `[lo, lo + len * 2^-level)`, constant on cells of width
/// `2^-level`.
#[derive(Debug, Clone, PartialEq)]
struct Piecewise {
    level: u32,
    lo: i64,
    values: Vec<Rational>,
}

impl Piecewise {
    fn check(level: u32, lo: i64, hi: i64, values: Vec<Rational>) -> Result<Self, ContinuousError> {
        let expected = ((hi - lo) as usize) << level;
        if values.len() != expected {
            return Err(ContinuousError::Density(alloc::format!("{} cells for level {level} on [{lo}, {hi}], expected {expected}", values.len())));
        }
        if let Some(i) = values.iter().position(|d| *d < Rational::zero()) {
            return Err(ContinuousError::Density(alloc::format!("negative value in cell {i}")));
        }
        let total: Rational = values.iter().sum::<Rational>() / Rational::from_integer(BigInt::from(1u64) << level);
        if !total.is_one() {
            return Err(ContinuousError::Density(alloc::format!("integrates to {total}, not 1")));
        }
        Ok(Self { level, lo, values })
    }

    fn cell_bounds(&self, j: usize) -> (Rational, Rational) {
        let base = self.lo << self.level;
        (dyadic(base + j as i64, self.level), dyadic(base + j as i64 + 1, self.level))
    }

    /// `(mass, first moment)` of `[a, b)`.
    fn integrate(&self, a: &Rational, b: &Rational) -> (Rational, Rational) {
        let two = Rational::from_integer(2.into());
        let (mut mass, mut moment) = (Rational::zero(), Rational::zero());
        for (j, d) in self.values.iter().enumerate() {
            if d.is_zero() {
                continue;
            }
            let (lo, hi) = self.cell_bounds(j);
            let l = if &lo > a { lo } else { a.clone() };
            let h = if &hi < b { hi } else { b.clone() };
            if l < h {
                mass += d * (&h - &l);
                moment += d * (&h * &h - &l * &l) / &two;
            }
        }
        (mass, moment)
    }
}

/// Noise density on `[-1, 1]`, constant on dyadic cells of width `2^-level`.
#[derive(Debug, Clone, PartialEq)]
pub struct DyadicDensity {
    inner: Piecewise,
}

impl DyadicDensity {
    /// `values` lists the density on the `2^(level + 1)` cells from left to
    /// right; it must be nonnegative and integrate to one.
    pub fn new(level: u32, values: Vec<Rational>) -> Result<Self, ContinuousError> {
        Ok(Self { inner: Piecewise::check(level, -1, 1, values)? })
    }

    /// Uniform noise on `[-1, 1]`.
    pub fn uniform() -> Self {
        Self::new(0, alloc::vec![Rational::new(1.into(), 2.into()); 2]).expect("valid density")
    }

    pub fn level(&self) -> u32 {
        self.inner.level
    }

    pub fn values(&self) -> &[Rational] {
        &self.inner.values
    }

    /// Noise mass of `[a, b)`.
    pub fn mass(&self, a: &Rational, b: &Rational) -> Rational {
        self.inner.integrate(a, b).0
    }

    /// Density on the cell of width `2^-level` starting at `-1 + j 2^-level`,
    /// for `level` at least the density's own level.
    pub(crate) fn at_fine_cell(&self, j: usize, level: u32) -> &Rational {
        &self.inner.values[j >> (level - self.inner.level)]
    }
}

/// Distribution of the true value on `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub enum ValueDistribution {
    /// Density constant on dyadic cells of `[0, 1]`.
    Density(DensityOnUnit),
    /// Finitely many atoms `(point, mass)`.
    Atoms(Vec<(Rational, Rational)>),
}

/// Density on `[0, 1]`, constant on the `2^level` dyadic cells.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityOnUnit {
    inner: Piecewise,
}

impl ValueDistribution {
    pub fn uniform() -> Self {
        Self::Density(DensityOnUnit { inner: Piecewise::check(0, 0, 1, alloc::vec![Rational::one()]).expect("valid density") })
    }

    pub fn density(level: u32, values: Vec<Rational>) -> Result<Self, ContinuousError> {
        Ok(Self::Density(DensityOnUnit { inner: Piecewise::check(level, 0, 1, values)? }))
    }

    /// Atoms in `[0, 1]` with positive masses summing to one.
    pub fn atoms(mut atoms: Vec<(Rational, Rational)>) -> Result<Self, ContinuousError> {
        if atoms.is_empty() {
            return Err(ContinuousError::Distribution("no atoms".into()));
        }
        for (p, m) in &atoms {
            if *p < Rational::zero() || *p > Rational::one() {
                return Err(ContinuousError::Distribution(alloc::format!("atom {p} outside [0, 1]")));
            }
            if *m <= Rational::zero() {
                return Err(ContinuousError::Distribution(alloc::format!("atom {p} has mass {m}")));
            }
        }
        let total: Rational = atoms.iter().map(|(_, m)| m).sum();
        if !total.is_one() {
            return Err(ContinuousError::Distribution(alloc::format!("masses sum to {total}")));
        }
        atoms.sort();
        Ok(Self::Atoms(atoms))
    }

    /// Point mass at `v`.
    pub fn point(v: Rational) -> Result<Self, ContinuousError> {
        Self::atoms(alloc::vec![(v, Rational::one())])
    }

    /// `(mass, first moment)` of `[a, b)`.
    pub fn integrate(&self, a: &Rational, b: &Rational) -> (Rational, Rational) {
        match self {
            Self::Density(d) => d.inner.integrate(a, b),
            Self::Atoms(atoms) => atoms
                .iter()
                .filter(|(p, _)| p >= a && p < b)
                .fold((Rational::zero(), Rational::zero()), |(m, s), (p, w)| (m + w, s + p * w)),
        }
    }

    /// `(mass, first moment)` of the value cell `k` at level `n`: the
    /// half-open cell `[k 2^-n, (k + 1) 2^-n)` for `k < 2^n`, and the point
    /// `1` for `k = 2^n`.
    pub fn cell(&self, n: u32, k: i64) -> (Rational, Rational) {
        self.integrate(&dyadic(k, n), &dyadic(k + 1, n))
    }
}

/// Single-period game with value distribution on `[0, 1]`, noise density on
/// `[-1, 1]` and trades in `[lower, upper]`.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuousGame {
    value: ValueDistribution,
    noise: DyadicDensity,
    lower: i64,
    upper: i64,
}

impl ContinuousGame {
    pub fn new(value: ValueDistribution, noise: DyadicDensity, lower: BigInt, upper: BigInt) -> Result<Self, ContinuousError> {
        let bad = || ContinuousError::TradeBounds { lo: lower.clone(), hi: upper.clone() };
        let (lo, hi) = (lower.to_i64().ok_or_else(bad)?, upper.to_i64().ok_or_else(bad)?);
        if !(lo < 0 && hi > 0) || hi - lo > 1 << 20 {
            return Err(bad());
        }
        Ok(Self { value, noise, lower: lo, upper: hi })
    }

    pub fn value(&self) -> &ValueDistribution {
        &self.value
    }

    pub fn noise(&self) -> &DyadicDensity {
        &self.noise
    }

    pub fn lower(&self) -> i64 {
        self.lower
    }

    pub fn upper(&self) -> i64 {
        self.upper
    }

    /// `max(|lower|, |upper|)`.
    pub fn max_trade(&self) -> i64 {
        self.upper.max(-self.lower)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::rat;

    #[test]
    fn densities_validate() {
        assert!(DyadicDensity::new(0, alloc::vec![rat(1, 2), rat(1, 2)]).is_ok());
        assert!(DyadicDensity::new(0, alloc::vec![rat(1, 2)]).is_err());
        assert!(DyadicDensity::new(0, alloc::vec![rat(1, 1), rat(1, 2)]).is_err());
        assert!(DyadicDensity::new(1, alloc::vec![rat(1, 1), rat(-1, 2), rat(1, 2), rat(1, 1)]).is_err());
        assert!(ValueDistribution::atoms(alloc::vec![(rat(3, 2), rat(1, 1))]).is_err());
        assert!(ContinuousGame::new(ValueDistribution::uniform(), DyadicDensity::uniform(), 0.into(), 1.into()).is_err());
    }

    #[test]
    fn cell_integrals() {
        let nu = ValueDistribution::uniform();
        assert_eq!(nu.cell(1, 0), (rat(1, 2), rat(1, 8)));
        assert_eq!(nu.cell(1, 2), (rat(0, 1), rat(0, 1)));
        let one = ValueDistribution::point(rat(1, 1)).unwrap();
        assert_eq!(one.cell(3, 8), (rat(1, 1), rat(1, 1)));
        let g = DyadicDensity::uniform();
        assert_eq!(g.mass(&rat(-1, 2), &rat(0, 1)), rat(1, 4));
        assert_eq!(floor_scaled(&rat(-3, 8), 2), -2);
    }
}
