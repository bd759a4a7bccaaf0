//! JSON documents for games, certificates and verification reports.
//!
//! Rationals travel as strings in lowest terms (`"3/7"`, `"-1"`); floating
//! values that only diagnose the solver (the ε-trace) stay numbers.

use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use kyle_core::solver::{Arithmetic, CertificateFlag, EquilibriumCertificate, TracePoint};
use kyle_core::verifier::{Consistency, ConsistencyGap, SequentialReport, VerificationReport};
use kyle_core::{BehaviourStrategy, BeliefSystem, FlowHistory, GameSpec, GameTree, NodeId, PricingSystem, Rational, Scalar};

use crate::error::CliError;

pub const FORMAT_VERSION: u32 = 1;

/// Parses `"p/q"`, an integer, or a finite decimal such as `"0.15"`.
pub fn parse_rational(field: &str, text: &str) -> Result<Rational, CliError> {
    let s = text.trim();
    let bad = |message: &str| CliError::parse(field, format!("{message} in {text:?}"));
    let int = |t: &str| t.parse::<num_bigint::BigInt>().map_err(|_| bad("not a rational"));
    if let Some((p, q)) = s.split_once('/') {
        let (p, q) = (int(p.trim())?, int(q.trim())?);
        if q.is_zero() {
            return Err(bad("zero denominator"));
        }
        return Ok(Rational::new(p, q));
    }
    if let Some((whole, frac)) = s.split_once('.') {
        if frac.is_empty() || !frac.bytes().all(|b| b.is_ascii_digit()) {
            return Err(bad("not a rational"));
        }
        let negative = whole.starts_with('-');
        let digits = format!("{}{}", whole.trim_start_matches(['-', '+']), frac);
        let scale = num_bigint::BigInt::from(10u32).pow(frac.len() as u32);
        let magnitude = Rational::new(int(&digits)?, scale);
        return Ok(if negative { -magnitude } else { magnitude });
    }
    Ok(Rational::from_integer(int(s)?))
}

pub fn rational_string(r: &Rational) -> String {
    r.to_string()
}

fn strings(xs: &[Rational]) -> Vec<String> {
    xs.iter().map(rational_string).collect()
}

fn parse_list(field: &str, xs: &[String]) -> Result<Vec<Rational>, CliError> {
    xs.iter().enumerate().map(|(i, x)| parse_rational(&format!("{field}[{i}]"), x)).collect()
}

/// Numbers in reports: exact strings for rational results, decimal strings
/// for floating ones.
pub fn scalar_string<S: Scalar>(x: &S) -> String {
    if S::EXACT {
        rational_string(&x.to_rational())
    } else {
        format!("{:e}", x.to_f64())
    }
}

/// A game with every rational written out.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GameDoc {
    pub horizon: usize,
    /// True values, highest first.
    pub values: Vec<String>,
    /// Information partitions of periods `1..=horizon` as 0-based state cells.
    pub partitions: Vec<Vec<Vec<usize>>>,
    pub prior: Vec<String>,
    pub trades: Vec<String>,
    pub noise: Vec<String>,
    pub noise_probs: Vec<String>,
}

impl GameDoc {
    pub fn from_spec(spec: &GameSpec) -> Self {
        Self {
            horizon: spec.horizon(),
            values: strings(spec.values()),
            partitions: spec.partition_cells(),
            prior: strings(spec.prior()),
            trades: strings(spec.trades()),
            noise: strings(spec.noise()),
            noise_probs: strings(spec.noise_probs()),
        }
    }

    pub fn to_spec(&self) -> Result<GameSpec, CliError> {
        Ok(GameSpec::new(
            self.horizon,
            parse_list("values", &self.values)?,
            self.partitions.clone(),
            parse_list("prior", &self.prior)?,
            parse_list("trades", &self.trades)?,
            parse_list("noise", &self.noise)?,
            parse_list("noise_probs", &self.noise_probs)?,
        )?)
    }
}

/// Strategy at one decision node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeRowDoc {
    pub node: NodeId,
    pub period: usize,
    /// States the insider cannot tell apart at this node.
    pub states: Vec<usize>,
    /// `(trade, noise)` values of the earlier periods.
    pub history: Vec<(String, String)>,
    pub probs: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceDoc {
    /// Flow values `y_1, ..., y_t`.
    pub flow: Vec<String>,
    pub price: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeliefDoc {
    pub flow: Vec<String>,
    pub belief: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceBeliefDoc {
    pub flow: Vec<String>,
    pub belief: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceDoc {
    pub eps: f64,
    pub residual: f64,
    pub iterations: usize,
    pub converged: bool,
    pub extrapolated_gain: f64,
    pub strategy: Vec<Vec<f64>>,
    pub beliefs: Vec<TraceBeliefDoc>,
}

/// An equilibrium certificate with the game it belongs to.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificateDoc {
    pub format_version: u32,
    pub game: GameDoc,
    /// `"exact"` or `"float"`.
    pub arithmetic: String,
    pub flags: Vec<String>,
    /// Number of equilibria support enumeration found, when it ran.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub equilibria_found: Option<usize>,
    pub strategy: Vec<NodeRowDoc>,
    pub prices: Vec<PriceDoc>,
    pub beliefs: Vec<BeliefDoc>,
    #[serde(default)]
    pub trace: Vec<TraceDoc>,
}

fn flag_name(flag: CertificateFlag) -> &'static str {
    match flag {
        CertificateFlag::Unconverged => "unconverged",
        CertificateFlag::NonMonotoneTrace => "non_monotone_trace",
        CertificateFlag::CompletedPrices => "completed_prices",
    }
}

fn parse_flag(name: &str) -> Result<CertificateFlag, CliError> {
    match name {
        "unconverged" => Ok(CertificateFlag::Unconverged),
        "non_monotone_trace" => Ok(CertificateFlag::NonMonotoneTrace),
        "completed_prices" => Ok(CertificateFlag::CompletedPrices),
        other => Err(CliError::parse("flags", format!("unknown flag {other:?}"))),
    }
}

fn flow_strings(tree: &GameTree, t: usize, flow: usize) -> Vec<String> {
    strings(&FlowHistory { period: t, index: flow }.values(tree))
}

fn flow_index(tree: &GameTree, field: &str, flow: &[String]) -> Result<FlowHistory, CliError> {
    let ys = parse_list(field, flow)?;
    FlowHistory::from_values(tree, &ys)
        .map_err(|e| CliError::parse(field, e.to_string()))?
        .ok_or_else(|| CliError::parse(field, format!("{flow:?} is not an attainable flow")))
}

/// `(trade, noise)` values along the path into `node`.
pub fn node_history(tree: &GameTree, node: NodeId) -> Vec<(String, String)> {
    let spec = tree.spec();
    let mut out = Vec::new();
    let mut current = node;
    while let Some(edge) = tree.node(current).parent {
        out.push((rational_string(&spec.trades()[edge.trade]), rational_string(&spec.noise()[edge.noise])));
        current = edge.node;
    }
    out.reverse();
    out
}

impl CertificateDoc {
    pub fn from_certificate(tree: &GameTree, cert: &EquilibriumCertificate) -> Self {
        let strategy = (0..tree.n_nodes())
            .map(|node| NodeRowDoc {
                node,
                period: tree.node(node).period,
                states: tree.cell_states(node).to_vec(),
                history: node_history(tree, node),
                probs: strings(cert.strategy.row(node)),
            })
            .collect();
        let prices = cert.prices.entries().map(|(t, f, p)| PriceDoc { flow: flow_strings(tree, t, f), price: rational_string(p) }).collect();
        let beliefs = cert.beliefs.entries().map(|(t, f, b)| BeliefDoc { flow: flow_strings(tree, t, f), belief: strings(b) }).collect();
        let trace = cert
            .trace
            .iter()
            .map(|p| TraceDoc {
                eps: p.eps,
                residual: p.residual,
                iterations: p.iterations,
                converged: p.converged,
                extrapolated_gain: p.extrapolated_gain,
                strategy: p.strategy.rows().map(<[f64]>::to_vec).collect(),
                beliefs: p.beliefs.entries().map(|(t, f, b)| TraceBeliefDoc { flow: flow_strings(tree, t, f), belief: b.to_vec() }).collect(),
            })
            .collect();
        Self {
            format_version: FORMAT_VERSION,
            game: GameDoc::from_spec(tree.spec()),
            arithmetic: match cert.arithmetic {
                Arithmetic::Exact => "exact".into(),
                Arithmetic::Float => "float".into(),
            },
            flags: cert.flags.iter().map(|f| flag_name(*f).to_string()).collect(),
            equilibria_found: None,
            strategy,
            prices,
            beliefs,
            trace,
        }
    }

    /// Rebuilds the game tree and certificate, validating every entry.
    pub fn to_certificate(&self) -> Result<(GameTree, EquilibriumCertificate), CliError> {
        check_version(self.format_version)?;
        let spec = self.game.to_spec()?;
        let tree = GameTree::build(&spec)?;
        let arithmetic = match self.arithmetic.as_str() {
            "exact" => Arithmetic::Exact,
            "float" => Arithmetic::Float,
            other => return Err(CliError::parse("arithmetic", format!("expected \"exact\" or \"float\", got {other:?}"))),
        };
        if self.strategy.len() != tree.n_nodes() {
            return Err(CliError::parse("strategy", format!("{} rows for {} decision nodes", self.strategy.len(), tree.n_nodes())));
        }
        let mut rows = vec![Vec::new(); tree.n_nodes()];
        for (i, row) in self.strategy.iter().enumerate() {
            let field = format!("strategy[{i}]");
            if row.node >= tree.n_nodes() || tree.node(row.node).period != row.period || tree.cell_states(row.node) != row.states.as_slice() {
                return Err(CliError::parse(&field, format!("node {} does not match the game tree", row.node)));
            }
            rows[row.node] = parse_list(&format!("{field}.probs"), &row.probs)?;
        }
        let strategy = BehaviourStrategy::new(&tree, rows).map_err(|e| CliError::parse("strategy", e.to_string()))?;
        let mut prices = PricingSystem::empty(&tree);
        for (i, p) in self.prices.iter().enumerate() {
            let h = flow_index(&tree, &format!("prices[{i}].flow"), &p.flow)?;
            prices.set(h.period, h.index, parse_rational(&format!("prices[{i}].price"), &p.price)?);
        }
        let mut beliefs = BeliefSystem::empty(&tree);
        for (i, b) in self.beliefs.iter().enumerate() {
            let field = format!("beliefs[{i}]");
            let h = flow_index(&tree, &format!("{field}.flow"), &b.flow)?;
            let belief = parse_list(&format!("{field}.belief"), &b.belief)?;
            beliefs.set(h.period, h.index, belief).map_err(|e| CliError::parse(&field, e.to_string()))?;
        }
        let mut trace = Vec::with_capacity(self.trace.len());
        for (i, p) in self.trace.iter().enumerate() {
            let field = format!("trace[{i}]");
            let strategy = BehaviourStrategy::new(&tree, p.strategy.clone()).map_err(|e| CliError::parse(&field, e.to_string()))?;
            let mut beliefs = BeliefSystem::empty(&tree);
            for (j, b) in p.beliefs.iter().enumerate() {
                let h = flow_index(&tree, &format!("{field}.beliefs[{j}].flow"), &b.flow)?;
                beliefs.set(h.period, h.index, b.belief.clone()).map_err(|e| CliError::parse(&field, e.to_string()))?;
            }
            trace.push(TracePoint {
                eps: p.eps,
                strategy,
                beliefs,
                residual: p.residual,
                iterations: p.iterations,
                converged: p.converged,
                extrapolated_gain: p.extrapolated_gain,
            });
        }
        let flags = self.flags.iter().map(|f| parse_flag(f)).collect::<Result<_, _>>()?;
        Ok((tree, EquilibriumCertificate { arithmetic, strategy, beliefs, prices, trace, flags }))
    }
}

pub fn check_version(found: u32) -> Result<(), CliError> {
    if found != FORMAT_VERSION {
        return Err(CliError::parse("format_version", format!("expected {FORMAT_VERSION}, found {found}")));
    }
    Ok(())
}

/// A decision node named by its period, information cell and history.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeWitnessDoc {
    pub node: NodeId,
    pub period: usize,
    pub states: Vec<usize>,
    pub history: Vec<(String, String)>,
}

impl NodeWitnessDoc {
    pub fn new(tree: &GameTree, node: NodeId) -> Self {
        Self { node, period: tree.node(node).period, states: tree.cell_states(node).to_vec(), history: node_history(tree, node) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SequentialDoc {
    pub max_subgame_gain: String,
    pub subgame_witness: Option<NodeWitnessDoc>,
    pub belief_price_gap: String,
    pub belief_price_witness: Option<Vec<String>>,
    /// `"verified"` or `"unverifiable"`.
    pub consistency: String,
    pub consistency_detail: String,
    pub optimal: bool,
}

/// Verification outcome of a certificate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDoc {
    pub format_version: u32,
    pub passed: bool,
    /// Arithmetic the checks ran in.
    pub arithmetic: String,
    pub tolerance: String,
    pub max_deviation_gain: String,
    pub deviation_witness: Option<NodeWitnessDoc>,
    pub pricing_residual: String,
    pub pricing_witness: Option<Vec<String>>,
    pub filled_prices: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sequential: Option<SequentialDoc>,
}

fn arithmetic_name<S: Scalar>() -> String {
    if S::EXACT { "exact" } else { "float" }.into()
}

impl ReportDoc {
    pub fn kyle<S: Scalar>(tree: &GameTree, report: &VerificationReport<S>) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            passed: report.passed,
            arithmetic: arithmetic_name::<S>(),
            tolerance: scalar_string(&report.tolerance),
            max_deviation_gain: scalar_string(&report.max_deviation_gain),
            deviation_witness: report.deviation_witness.map(|n| NodeWitnessDoc::new(tree, n)),
            pricing_residual: scalar_string(&report.pricing_residual),
            pricing_witness: report.pricing_witness.map(|h| strings(&h.values(tree))),
            filled_prices: report.filled_prices,
            sequential: None,
        }
    }

    pub fn sequential<S: Scalar>(tree: &GameTree, report: &SequentialReport<S>) -> Self {
        let mut doc = Self::kyle(tree, &report.kyle);
        doc.passed = report.passed();
        let (consistency, detail) = match &report.consistency {
            Consistency::Verified { distance } => ("verified", format!("last ε level within {distance:e} of the certificate")),
            Consistency::Unverifiable(gap) => ("unverifiable", describe_gap(tree, gap)),
        };
        doc.sequential = Some(SequentialDoc {
            max_subgame_gain: scalar_string(&report.max_subgame_gain),
            subgame_witness: report.subgame_witness.map(|n| NodeWitnessDoc::new(tree, n)),
            belief_price_gap: scalar_string(&report.belief_price_gap),
            belief_price_witness: report.belief_price_witness.map(|h| strings(&h.values(tree))),
            consistency: consistency.into(),
            consistency_detail: detail,
            optimal: report.optimal,
        });
        doc
    }
}

fn describe_gap(tree: &GameTree, gap: &ConsistencyGap) -> String {
    let flow = |h: &FlowHistory| strings(&h.values(tree)).join(", ");
    match gap {
        ConsistencyGap::TraceNotBayes { level, flow: h, gap } => {
            format!("trace level {level}: beliefs at flow ({}) are {gap:e} from Bayes", flow(h))
        }
        ConsistencyGap::TraceNotMixed { level, node } => format!("trace level {level}: node {node} is not completely mixed"),
        ConsistencyGap::Strategy { distance } => format!("last trace strategy is {distance:e} from the certificate"),
        ConsistencyGap::Beliefs { flow: h, gap } => format!("last trace beliefs at flow ({}) are {gap:e} from the certificate", flow(h)),
    }
}

/// Lossy decimal rendering of a rational, for CSV columns.
pub fn decimal(r: &Rational) -> f64 {
    ToPrimitive::to_f64(r).unwrap_or(f64::NAN)
}

#[cfg(test)]
mod tests {
    use super::*;
    use kyle_core::builtin;
    use kyle_core::rat;

    #[test]
    fn parses_rationals() {
        assert_eq!(parse_rational("x", "3/7").unwrap(), rat(3, 7));
        assert_eq!(parse_rational("x", "-2").unwrap(), rat(-2, 1));
        assert_eq!(parse_rational("x", "0.15").unwrap(), rat(3, 20));
        assert_eq!(parse_rational("x", "-1.5").unwrap(), rat(-3, 2));
        assert_eq!(parse_rational("x", "6/8").unwrap().to_string(), "3/4");
        let err = parse_rational("noise_eps", "1/0").unwrap_err();
        assert!(err.to_string().contains("noise_eps") && err.to_string().contains("zero denominator"));
        assert!(parse_rational("x", "abc").is_err());
        assert!(parse_rational("x", "1.").is_err());
    }

    #[test]
    fn game_round_trip() {
        for spec in [builtin::example_2_1(rat(1, 8)), builtin::example_3_1(), builtin::theorem_example(3)] {
            let doc = GameDoc::from_spec(&spec);
            let json = serde_json::to_string(&doc).unwrap();
            let back: GameDoc = serde_json::from_str(&json).unwrap();
            assert_eq!(back.to_spec().unwrap(), spec);
            assert_eq!(GameDoc::from_spec(&back.to_spec().unwrap()), doc);
        }
    }

    #[test]
    fn certificate_round_trip() {
        let tree = GameTree::build(&builtin::example_2_1(rat(1, 8))).unwrap();
        let cert = kyle_core::solver::sequential_equilibrium(&tree, &Default::default()).unwrap();
        let doc = CertificateDoc::from_certificate(&tree, &cert);
        let json = serde_json::to_string(&doc).unwrap();
        let back: CertificateDoc = serde_json::from_str(&json).unwrap();
        let (_, restored) = back.to_certificate().unwrap();
        assert_eq!(restored, cert);
    }
}
