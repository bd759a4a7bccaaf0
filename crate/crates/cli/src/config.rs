//! Run configuration documents: which game, which solver settings, and the
//! continuum game for `limit`.

use std::path::Path;

use num_bigint::BigInt;
use serde::{Deserialize, Serialize};

use kyle_core::continuous::{ContinuousGame, DyadicDensity, ValueDistribution};
use kyle_core::solver::{EpsilonSchedule, SolveMode, SolverConfig};
use kyle_core::{builtin, rat, GameSpec, Rational};

use crate::error::CliError;
use crate::format::{check_version, parse_rational, GameDoc};

pub const BUILTINS: [&str; 4] = ["example-2-1", "example-3-1", "theorem-3-example", "uniform-continuum"];

/// A whole configuration file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "current_version")]
    pub format_version: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub game: Option<GameBlock>,
    #[serde(default)]
    pub solver: SolverDoc,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub continuum: Option<ContinuumDoc>,
}

fn current_version() -> u32 {
    crate::format::FORMAT_VERSION
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io { path: path.into(), source })?;
        let config: Self =
            serde_json::from_str(&text).map_err(|source| CliError::Json { context: path.display().to_string(), source })?;
        check_version(config.format_version)?;
        Ok(config)
    }
}

/// Either a named game or one written out in full.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GameBlock {
    Builtin(BuiltinDoc),
    Explicit(GameDoc),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BuiltinDoc {
    pub builtin: String,
    /// Noise tail mass of `example-2-1`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_eps: Option<String>,
    /// Trade grid half-width of `theorem-3-example`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<u32>,
}

impl GameBlock {
    pub fn to_spec(&self) -> Result<GameSpec, CliError> {
        match self {
            Self::Explicit(doc) => doc.to_spec(),
            Self::Builtin(doc) => builtin_spec(&doc.builtin, doc.noise_eps.as_deref(), doc.n),
        }
    }
}

/// Noise tail of the two-period example, checked to lie in `(0, 1/2)`.
pub fn noise_eps(text: Option<&str>) -> Result<Rational, CliError> {
    let eps = match text {
        Some(t) => parse_rational("noise_eps", t)?,
        None => rat(1, 8),
    };
    if eps <= rat(0, 1) || eps >= rat(1, 2) {
        return Err(CliError::parse("noise_eps", format!("{eps} is outside (0, 1/2)")));
    }
    Ok(eps)
}

pub fn builtin_spec(name: &str, eps: Option<&str>, n: Option<u32>) -> Result<GameSpec, CliError> {
    match name {
        "example-2-1" => Ok(builtin::example_2_1(noise_eps(eps)?)),
        "example-3-1" => Ok(builtin::example_3_1()),
        "theorem-3-example" => match n.unwrap_or(1) {
            0 => Err(CliError::parse("n", "must be at least 1")),
            n => Ok(builtin::theorem_example(n)),
        },
        "uniform-continuum" => Err(CliError::Usage("uniform-continuum is a continuum game; use the limit command".into())),
        other => Err(unknown_builtin(other)),
    }
}

pub fn unknown_builtin(name: &str) -> CliError {
    CliError::parse("builtin", format!("unknown game {name:?}; known: {}", BUILTINS.join(", ")))
}

/// Solver settings; omitted fields keep their defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverDoc {
    /// `"auto"`, `"homotopy"`, `"support"` or `"both"`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mode: Option<String>,
    /// Explicit ε levels as rational strings, largest first.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub geometric: Option<GeometricDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub damping: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_iters: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fixed_point_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residual_tol: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub oscillation_window: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub logit_temperature: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub logit_sweeps: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub polish: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub support_cap: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometricDoc {
    pub ratio: f64,
    pub levels: usize,
}

/// Solver choice for `solve`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ModeChoice {
    /// Support enumeration for single-period games within the cap, the
    /// homotopy otherwise.
    #[default]
    Auto,
    Fixed(SolveMode),
}

pub fn parse_mode(text: &str) -> Result<ModeChoice, CliError> {
    match text {
        "auto" => Ok(ModeChoice::Auto),
        "homotopy" => Ok(ModeChoice::Fixed(SolveMode::Homotopy)),
        "support" => Ok(ModeChoice::Fixed(SolveMode::SupportEnumeration)),
        "both" => Ok(ModeChoice::Fixed(SolveMode::Both)),
        other => Err(CliError::parse("mode", format!("expected auto, homotopy, support or both, got {other:?}"))),
    }
}

impl SolverDoc {
    /// Applies the document on top of `base`.
    pub fn apply(&self, mut base: SolverConfig) -> Result<(SolverConfig, ModeChoice), CliError> {
        let mode = self.mode.as_deref().map(parse_mode).transpose()?.unwrap_or_default();
        if let ModeChoice::Fixed(m) = mode {
            base.mode = m;
        }
        match (&self.schedule, self.geometric) {
            (Some(_), Some(_)) => return Err(CliError::parse("solver", "give either schedule or geometric, not both")),
            (Some(list), None) => {
                let eps = list.iter().enumerate().map(|(i, e)| parse_rational(&format!("solver.schedule[{i}]"), e)).collect::<Result<_, _>>()?;
                base.schedule = EpsilonSchedule::Explicit(eps);
            }
            (None, Some(g)) => base.schedule = EpsilonSchedule::Geometric { ratio: g.ratio, levels: g.levels },
            (None, None) => {}
        }
        macro_rules! set {
            ($($field:ident),*) => {$(if let Some(v) = self.$field { base.$field = v.into(); })*};
        }
        set!(damping, max_iters, fixed_point_tol, residual_tol, oscillation_window, logit_temperature, logit_sweeps, polish, support_cap);
        Ok((base, mode))
    }
}

/// A continuum game for `limit`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContinuumDoc {
    pub value: ValueDoc,
    pub noise: DensityDoc,
    pub lower: String,
    pub upper: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ValueDoc {
    Uniform,
    Density(DensityDoc),
    /// `(point, mass)` pairs.
    Atoms(Vec<(String, String)>),
}

/// Step density with `values` on dyadic cells of width `2^-level`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DensityDoc {
    pub level: u32,
    pub values: Vec<String>,
}

impl DensityDoc {
    fn values(&self, field: &str) -> Result<Vec<Rational>, CliError> {
        self.values.iter().enumerate().map(|(i, v)| parse_rational(&format!("{field}.values[{i}]"), v)).collect()
    }
}

fn integer(field: &str, text: &str) -> Result<BigInt, CliError> {
    let r = parse_rational(field, text)?;
    if !r.is_integer() {
        return Err(CliError::parse(field, format!("{r} is not an integer")));
    }
    Ok(r.to_integer())
}

impl ContinuumDoc {
    pub fn to_game(&self) -> Result<ContinuousGame, CliError> {
        let value = match &self.value {
            ValueDoc::Uniform => ValueDistribution::uniform(),
            ValueDoc::Density(d) => ValueDistribution::density(d.level, d.values("continuum.value.density")?)?,
            ValueDoc::Atoms(atoms) => ValueDistribution::atoms(
                atoms
                    .iter()
                    .enumerate()
                    .map(|(i, (p, m))| {
                        let f = format!("continuum.value.atoms[{i}]");
                        Ok((parse_rational(&f, p)?, parse_rational(&f, m)?))
                    })
                    .collect::<Result<_, CliError>>()?,
            )?,
        };
        let noise = DyadicDensity::new(self.noise.level, self.noise.values("continuum.noise")?)?;
        Ok(ContinuousGame::new(value, noise, integer("continuum.lower", &self.lower)?, integer("continuum.upper", &self.upper)?)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_and_explicit_games() {
        let json = r#"{"game": {"builtin": "example-2-1", "noise_eps": "0.15"}}"#;
        let config: RunConfig = serde_json::from_str(json).unwrap();
        assert_eq!(config.game.unwrap().to_spec().unwrap(), builtin::example_2_1(rat(3, 20)));
        let doc = GameDoc::from_spec(&builtin::example_3_1());
        let config = RunConfig { game: Some(GameBlock::Explicit(doc)), ..Default::default() };
        let back: RunConfig = serde_json::from_str(&serde_json::to_string(&config).unwrap()).unwrap();
        assert_eq!(back.game.unwrap().to_spec().unwrap(), builtin::example_3_1());
    }

    #[test]
    fn bad_noise_is_named() {
        let err = builtin_spec("example-2-1", Some("1/0"), None).unwrap_err();
        assert!(err.to_string().contains("noise_eps"));
        assert!(builtin_spec("example-2-1", Some("1/2"), None).is_err());
        assert!(builtin_spec("nope", None, None).unwrap_err().to_string().contains("example-3-1"));
    }

    #[test]
    fn solver_overrides() {
        let doc: SolverDoc = serde_json::from_str(r#"{"mode": "support", "schedule": ["1/4", "1/8"], "damping": 0.25}"#).unwrap();
        let (config, mode) = doc.apply(SolverConfig::default()).unwrap();
        assert_eq!(mode, ModeChoice::Fixed(SolveMode::SupportEnumeration));
        assert_eq!(config.schedule, EpsilonSchedule::Explicit(vec![rat(1, 4), rat(1, 8)]));
        assert_eq!(config.damping, 0.25);
        assert!(parse_mode("fast").is_err());
    }

    #[test]
    fn continuum_documents() {
        let json = r#"{"value": "uniform", "noise": {"level": 0, "values": ["1/2", "1/2"]}, "lower": "-1", "upper": "1"}"#;
        let doc: ContinuumDoc = serde_json::from_str(json).unwrap();
        assert_eq!(doc.to_game().unwrap(), builtin::uniform_continuum());
        let json = r#"{"value": {"atoms": [["1/4", "1"]]}, "noise": {"level": 0, "values": ["1/2", "1/2"]}, "lower": "-1", "upper": "1/2"}"#;
        let doc: ContinuumDoc = serde_json::from_str(json).unwrap();
        assert!(doc.to_game().unwrap_err().to_string().contains("continuum.upper"));
    }
}
