//! Subcommands of the `kyle` binary.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use num_traits::Zero;
use serde::Serialize;

use kyle_core::continuous::{self, continuum_config, solve_sequence, ContinuousGame, WindowRule};
use kyle_core::solver::{self, Arithmetic, CertificateFlag, EquilibriumCertificate, SolveMode, SolverConfig, SolverError};
use kyle_core::verifier::{self, check_assumption_grid, check_order_bound, check_structure_lemma, OrderBound, OrderBoundReport, StructureOptions, VerifyError};
use kyle_core::{builtin, rat, BehaviourStrategy, FlowHistory, GameSpec, GameTree, PricingSystem, Rational, Scalar, TreeLimits};

use crate::config::{self, builtin_spec, noise_eps, unknown_builtin, ModeChoice, RunConfig};
use crate::error::{CliError, Exit};
use crate::format::{decimal, parse_rational, rational_string, CertificateDoc, ReportDoc};
use crate::sweep::{random_games, SweepShape};

/// Absolute tolerance for certificates produced in floating point.
pub const FLOAT_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Parser)]
#[command(name = "kyle", version, about = "Discrete Kyle insider-trading games: solve, verify, reproduce")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Compute an equilibrium certificate and verify it.
    Solve(SolveArgs),
    /// Check a certificate file.
    Verify(VerifyArgs),
    /// Regenerate the tables and curves of the worked examples.
    Reproduce(ReproduceArgs),
    /// Solve dyadic discretizations of a continuum game and report convergence diagnostics.
    Limit(LimitArgs),
    /// Solve and verify seeded random games.
    Sweep(SweepArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct GameArgs {
    /// Named game: example-2-1, example-3-1, theorem-3-example or uniform-continuum.
    #[arg(long)]
    pub builtin: Option<String>,
    /// Configuration file with a game, solver or continuum block.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Noise tail mass of example-2-1, as "p/q" or a decimal.
    #[arg(long)]
    pub noise_eps: Option<String>,
    /// Trade grid half-width of theorem-3-example.
    #[arg(long)]
    pub n: Option<u32>,
    /// Refuse games with more terminal outcomes than this.
    #[arg(long)]
    pub max_outcomes: Option<u128>,
}

impl GameArgs {
    fn load(&self) -> Result<RunConfig, CliError> {
        match &self.config {
            Some(path) => RunConfig::load(path),
            None => Ok(RunConfig::default()),
        }
    }

    fn limits(&self) -> TreeLimits {
        self.max_outcomes.map_or_else(TreeLimits::default, |max_outcomes| TreeLimits { max_outcomes })
    }

    /// The discrete game named on the command line or in the config.
    fn spec(&self, run: &RunConfig) -> Result<GameSpec, CliError> {
        match (&self.builtin, &run.game) {
            (Some(name), _) => builtin_spec(name, self.noise_eps.as_deref(), self.n),
            (None, Some(block)) => block.to_spec(),
            (None, None) => Err(CliError::Usage("no game given; use --builtin or --config".into())),
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub game: GameArgs,
    /// auto, homotopy, support or both.
    #[arg(long)]
    pub mode: Option<String>,
    /// Write the certificate here instead of standard output.
    #[arg(long)]
    pub certificate: Option<PathBuf>,
    /// Write the verification report here.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct VerifyArgs {
    /// Certificate produced by `solve`.
    pub certificate: PathBuf,
    /// Also check subgame optimality and belief consistency on the ε-trace.
    #[arg(long)]
    pub sequential: bool,
    /// Tolerance; defaults to 0 for exact certificates and 1e-6 for floating ones.
    #[arg(long)]
    pub tol: Option<String>,
    /// Largest distance between the last ε level and the certificate.
    #[arg(long, default_value_t = verifier::DEFAULT_CONSISTENCY_TOL)]
    pub consistency_tol: f64,
    /// Write the report here instead of standard output.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Target {
    /// Profit curves of the two-period example over a grid of mixing probabilities.
    #[value(name = "example-2-1-curve")]
    Example21Curve,
    /// The indifference root, its profit and the polynomial check.
    #[value(name = "example-2-1-root")]
    Example21Root,
    /// Every pure strategy of the two-period example against its own prices.
    #[value(name = "example-2-1-pure-scan")]
    Example21PureScan,
    /// Exact equilibrium price table of the three-state example.
    #[value(name = "example-3-1")]
    Example31,
    /// Order-bound dichotomy on the sign-price family over growing trade grids.
    #[value(name = "theorem-bound")]
    TheoremBound,
}

#[derive(Debug, Clone, Args)]
pub struct ReproduceArgs {
    pub target: Target,
    #[arg(long)]
    pub noise_eps: Option<String>,
    /// Spacing of the mixing-probability grid.
    #[arg(long, default_value_t = 1e-3)]
    pub grid: f64,
    /// Largest trade grid half-width for theorem-bound.
    #[arg(long, default_value_t = 6)]
    pub n_max: u32,
    /// Write the output here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct LimitArgs {
    #[command(flatten)]
    pub game: GameArgs,
    /// Grid levels, as a range "2..5" (inclusive) or a list "2,3,5".
    #[arg(long, default_value = "2..5")]
    pub levels: String,
    /// Price averaging: "growing" or a fixed window length.
    #[arg(long, default_value = "growing")]
    pub window: String,
    /// Write the CSV here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 200)]
    pub count: usize,
    /// Write the CSV here instead of standard output.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(cli: &Cli, out: &mut dyn Write) -> Result<Exit, CliError> {
    match &cli.command {
        Command::Solve(args) => cmd_solve(args, out),
        Command::Verify(args) => cmd_verify(args, out),
        Command::Reproduce(args) => cmd_reproduce(args, out),
        Command::Limit(args) => cmd_limit(args, out),
        Command::Sweep(args) => cmd_sweep(args, out),
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io { path: path.into(), source }
}

fn stdout_err(source: std::io::Error) -> CliError {
    CliError::Io { path: "<stdout>".into(), source }
}

/// Writes `text` to `path`, or to `out` when no path is given.
fn emit(path: Option<&Path>, out: &mut dyn Write, text: &str) -> Result<(), CliError> {
    match path {
        Some(p) => std::fs::write(p, text).map_err(io_err(p)),
        None => out.write_all(text.as_bytes()).map_err(stdout_err),
    }
}

fn to_json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("documents serialize");
    s.push('\n');
    s
}

fn csv_text(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<String, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    let bytes = w.into_inner().map_err(|e| CliError::Io { path: "<csv>".into(), source: e.into_error() })?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// A solver run with its provenance.
#[derive(Debug, Clone)]
pub struct Solved {
    pub certificate: EquilibriumCertificate,
    pub method: &'static str,
    pub equilibria_found: Option<usize>,
}

/// Runs the solvers picked by `mode`. `Auto` enumerates supports of
/// single-period games and falls back to the homotopy when that finds
/// nothing or exceeds its cap.
pub fn solve_game(tree: &GameTree, config: &SolverConfig, mode: ModeChoice) -> Result<Solved, CliError> {
    let homotopy = || -> Result<Solved, CliError> {
        Ok(Solved { certificate: solver::sequential_equilibrium(tree, config)?, method: "homotopy", equilibria_found: None })
    };
    let support = || solver::support_enumeration_single_period(tree, config);
    let pick = |certs: Vec<EquilibriumCertificate>| {
        let found = certs.len();
        certs.into_iter().next().map(|certificate| Solved { certificate, method: "support", equilibria_found: Some(found) })
    };
    match mode {
        ModeChoice::Fixed(SolveMode::Homotopy) => homotopy(),
        ModeChoice::Fixed(SolveMode::SupportEnumeration) => {
            pick(support()?).ok_or_else(|| CliError::Usage("support enumeration found no equilibrium".into()))
        }
        ModeChoice::Fixed(SolveMode::Both) | ModeChoice::Auto => {
            if tree.horizon() != 1 {
                return homotopy();
            }
            match support() {
                Ok(certs) => pick(certs).map_or_else(homotopy, Ok),
                Err(SolverError::SupportCapExceeded { .. }) if mode == ModeChoice::Auto => homotopy(),
                Err(e) => Err(e.into()),
            }
        }
    }
}

/// Verifies the Kyle conditions in the certificate's own arithmetic: exactly
/// with tolerance `tol` (default 0) for exact certificates, in `f64` with
/// `tol` (default [`FLOAT_TOLERANCE`]) for floating ones.
pub fn verify_certificate(tree: &GameTree, cert: &EquilibriumCertificate, tol: Option<&Rational>) -> Result<ReportDoc, CliError> {
    Ok(match cert.arithmetic {
        Arithmetic::Exact => {
            let tol = tol.cloned().unwrap_or_default();
            ReportDoc::kyle(tree, &verifier::verify_kyle(tree, &cert.strategy, &cert.prices, &tol)?)
        }
        Arithmetic::Float => {
            let tol = tol.map_or(FLOAT_TOLERANCE, decimal);
            let prices = cert.prices.map(Scalar::to_f64);
            ReportDoc::kyle(tree, &verifier::verify_kyle(tree, &cert.strategy.to_f64(), &prices, &tol)?)
        }
    })
}

fn solver_settings(run: &RunConfig, base: SolverConfig, mode: Option<&str>) -> Result<(SolverConfig, ModeChoice), CliError> {
    let (config, mut choice) = run.solver.apply(base)?;
    if let Some(m) = mode {
        choice = config::parse_mode(m)?;
    }
    let mut config = config;
    if let ModeChoice::Fixed(m) = choice {
        config.mode = m;
    }
    Ok((config, choice))
}

/// One line per decision node and flow, for terminal output.
fn summary(tree: &GameTree, solved: &Solved, report: &ReportDoc) -> String {
    let cert = &solved.certificate;
    let trades: Vec<String> = tree.spec().trades().iter().map(rational_string).collect();
    let mut s = format!("method: {}", solved.method);
    if let Some(k) = solved.equilibria_found {
        s += &format!(" ({k} equilibria found)");
    }
    let flags: Vec<String> = cert.flags.iter().map(|f| format!("{f:?}")).collect();
    s += &format!("\narithmetic: {:?}\nflags: [{}]\ntrades: [{}]\n", cert.arithmetic, flags.join(", "), trades.join(", "));
    for node in 0..tree.n_nodes() {
        let row: Vec<String> = cert.strategy.row(node).iter().map(|p| format!("{:.8}", decimal(p))).collect();
        let history: Vec<String> = crate::format::node_history(tree, node).iter().map(|(x, z)| format!("({x}, {z})")).collect();
        s += &format!(
            "node {node} period {} states {:?} history [{}]: {}\n",
            tree.node(node).period,
            tree.cell_states(node),
            history.join(" "),
            row.join(" ")
        );
    }
    for (t, flow, p) in cert.prices.entries() {
        let ys: Vec<String> = FlowHistory { period: t, index: flow }.values(tree).iter().map(rational_string).collect();
        s += &format!("price [{}] = {}\n", ys.join(", "), rational_string(p));
    }
    s += &format!(
        "verification: {} (gain {}, residual {}, tolerance {})\n",
        if report.passed { "pass" } else { "FAIL" },
        report.max_deviation_gain,
        report.pricing_residual,
        report.tolerance
    );
    s
}

pub fn cmd_solve(args: &SolveArgs, out: &mut dyn Write) -> Result<Exit, CliError> {
    let run = args.game.load()?;
    let spec = args.game.spec(&run)?;
    let (config, mode) = solver_settings(&run, SolverConfig::default(), args.mode.as_deref())?;
    let tree = GameTree::build_with(&spec, args.game.limits())?;
    config.validate(tree.n_trades())?;
    let solved = solve_game(&tree, &config, mode)?;
    let report = verify_certificate(&tree, &solved.certificate, None)?;
    let mut doc = CertificateDoc::from_certificate(&tree, &solved.certificate);
    doc.equilibria_found = solved.equilibria_found;
    let text = summary(&tree, &solved, &report);
    match &args.certificate {
        Some(path) => {
            std::fs::write(path, to_json(&doc)).map_err(io_err(path))?;
            out.write_all(text.as_bytes()).map_err(stdout_err)?;
        }
        None => emit(None, out, &to_json(&doc))?,
    }
    if let Some(path) = &args.report {
        std::fs::write(path, to_json(&report)).map_err(io_err(path))?;
    }
    Ok(if report.passed { Exit::Pass } else { Exit::Fail })
}

pub fn load_certificate(path: &Path) -> Result<(GameTree, EquilibriumCertificate), CliError> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let doc: CertificateDoc = serde_json::from_str(&text).map_err(|source| CliError::Json { context: path.display().to_string(), source })?;
    doc.to_certificate()
}

pub fn cmd_verify(args: &VerifyArgs, out: &mut dyn Write) -> Result<Exit, CliError> {
    let (tree, cert) = load_certificate(&args.certificate)?;
    let tol = args.tol.as_deref().map(|t| parse_rational("tol", t)).transpose()?;
    if tol.as_ref().is_some_and(|t| *t < Rational::zero()) {
        return Err(CliError::parse("tol", "must be nonnegative"));
    }
    let (report, exit) = if args.sequential {
        let result = match cert.arithmetic {
            Arithmetic::Exact => verifier::verify_sequential(&tree, &cert, &tol.clone().unwrap_or_default(), args.consistency_tol)
                .map(|r| (r.optimal, r.passed(), ReportDoc::sequential(&tree, &r))),
            Arithmetic::Float => {
                let t = tol.as_ref().map_or(FLOAT_TOLERANCE, decimal);
                verifier::verify_sequential(&tree, &cert, &t, args.consistency_tol).map(|r| (r.optimal, r.passed(), ReportDoc::sequential(&tree, &r)))
            }
        };
        match result {
            Ok((optimal, passed, doc)) => {
                let exit = match (optimal, passed) {
                    (false, _) => Exit::Fail,
                    (true, false) => Exit::Unverifiable,
                    (true, true) => Exit::Pass,
                };
                (doc, exit)
            }
            Err(VerifyError::MissingTrace) => {
                return Err(CliError::Verify(VerifyError::MissingTrace));
            }
            Err(e) => return Err(e.into()),
        }
    } else {
        let doc = verify_certificate(&tree, &cert, tol.as_ref())?;
        let exit = if doc.passed { Exit::Pass } else { Exit::Fail };
        (doc, exit)
    };
    emit(args.report.as_deref(), out, &to_json(&report))?;
    Ok(exit)
}

/// `0, step, 2 step, ...` up to and including 1.
fn alpha_grid(step: f64) -> Result<Vec<f64>, CliError> {
    if !(step > 0.0 && step <= 1.0) {
        return Err(CliError::parse("grid", format!("{step} is outside (0, 1]")));
    }
    let k = (1.0 / step).round() as usize;
    let mut grid: Vec<f64> = (0..=k).map(|i| (i as f64 * step).min(1.0)).collect();
    if *grid.last().expect("nonempty") < 1.0 {
        grid.push(1.0);
    }
    Ok(grid)
}

fn f(x: f64) -> String {
    format!("{x:.12}")
}

pub fn cmd_reproduce(args: &ReproduceArgs, out: &mut dyn Write) -> Result<Exit, CliError> {
    let path = args.out.as_deref();
    match args.target {
        Target::Example21Curve => {
            let eps = noise_eps(args.noise_eps.as_deref())?;
            let curve = solver::profit_curve(&eps, &alpha_grid(args.grid)?)?;
            let rows = curve.iter().map(|p| vec![f(p.alpha), f(p.profit_buy), f(p.profit_wait), f(p.profit_buy - p.profit_wait)]);
            emit(path, out, &csv_text(&["alpha", "profit_buy", "profit_wait", "gap"], rows)?)?;
        }
        Target::Example21Root => {
            let eps = noise_eps(args.noise_eps.as_deref())?;
            let roots = solver::indifference_root(&eps)?;
            let check = eps == rat(1, 8);
            let rows = roots.iter().map(|p| {
                let poly = if check { format!("{:e}", solver::reference_polynomial(p.alpha)) } else { String::new() };
                vec![f(p.alpha), f(p.profit_buy), poly]
            });
            emit(path, out, &csv_text(&["alpha", "profit", "polynomial_relative"], rows)?)?;
        }
        Target::Example21PureScan => {
            let eps = noise_eps(args.noise_eps.as_deref())?;
            let scan = solver::pure_scan(&eps)?;
            let min_gain = scan.min_gain.as_ref().map(rational_string).unwrap_or_default();
            let text = format!(
                "noise_eps: {}\nstrategies: {}\nfailing: {}\npassing: {}\nmin_gain: {}\n",
                rational_string(&eps),
                scan.strategies,
                scan.failing,
                scan.passing.len(),
                min_gain
            );
            emit(path, out, &text)?;
        }
        Target::Example31 => {
            let tree = GameTree::build(&builtin::example_3_1())?;
            let config = SolverConfig { mode: SolveMode::SupportEnumeration, ..Default::default() };
            let solved = solve_game(&tree, &config, ModeChoice::Fixed(SolveMode::SupportEnumeration))?;
            let report = verify_certificate(&tree, &solved.certificate, None)?;
            let cert = &solved.certificate;
            let rows = cert.prices.entries().map(|(_, flow, p)| vec![rational_string(&tree.flows()[flow]), rational_string(p)]);
            emit(path, out, &csv_text(&["flow", "price"], rows)?)?;
            if !report.passed || solved.equilibria_found != Some(1) {
                return Ok(Exit::Fail);
            }
        }
        Target::TheoremBound => {
            let mut rows = Vec::new();
            let mut ok = true;
            for n in 1..=args.n_max.max(1) {
                let tree = GameTree::build(&builtin::theorem_example(n))?;
                let xi: BehaviourStrategy = builtin::theorem_example_strategy(&tree);
                let prices = builtin::theorem_example_prices(&tree);
                let report = verifier::verify_kyle(&tree, &xi, &prices, &Rational::zero())?;
                let bound = check_order_bound(&tree, &xi, &prices, StructureOptions::EXACT);
                ok &= report.passed && bound.holds();
                let (buy_bound, buy, sell) = match &bound {
                    OrderBoundReport::Checked { buy_bound, buy, sell, .. } => (rational_string(buy_bound), bound_name(buy), bound_name(sell)),
                    OrderBoundReport::NotApplicable { reason } => (String::new(), reason.clone(), String::new()),
                };
                let max_trade = rational_string(tree.spec().trades().last().expect("nonempty"));
                rows.push(vec![n.to_string(), max_trade, report.passed.to_string(), buy_bound, buy, sell]);
            }
            emit(path, out, &csv_text(&["n", "max_trade", "verified", "bound", "buy", "sell"], rows)?)?;
            if !ok {
                return Ok(Exit::Fail);
            }
        }
    }
    Ok(Exit::Pass)
}

fn bound_name(b: &OrderBound) -> String {
    match b {
        OrderBound::Pinned => "pinned".into(),
        OrderBound::Bounded => "bounded".into(),
        OrderBound::Violated { order } => format!("violated at {order}"),
    }
}

/// `"2..5"` (inclusive) or `"2,3,5"`.
pub fn parse_levels(text: &str) -> Result<Vec<u32>, CliError> {
    let num = |s: &str| s.trim().parse::<u32>().map_err(|_| CliError::parse("levels", format!("{s:?} is not a level")));
    let levels: Vec<u32> = if let Some((a, b)) = text.split_once("..") {
        let (a, b) = (num(a)?, num(b.trim_start_matches('='))?);
        (a..=b).collect()
    } else if text.trim().is_empty() {
        Vec::new()
    } else {
        text.split(',').map(num).collect::<Result<_, _>>()?
    };
    if levels.is_empty() {
        return Err(CliError::Usage(format!("no grid levels in {text:?}")));
    }
    if levels.windows(2).any(|w| w[0] >= w[1]) {
        return Err(CliError::parse("levels", "must be strictly increasing"));
    }
    Ok(levels)
}

pub fn parse_window(text: &str) -> Result<WindowRule, CliError> {
    match text {
        "growing" => Ok(WindowRule::Growing),
        n => match n.parse::<usize>() {
            Ok(w) if w >= 1 => Ok(WindowRule::Fixed(w)),
            _ => Err(CliError::parse("window", format!("expected \"growing\" or a positive length, got {n:?}"))),
        },
    }
}

fn continuum_game(args: &GameArgs, run: &RunConfig) -> Result<ContinuousGame, CliError> {
    match (&args.builtin, &run.continuum) {
        (Some(name), _) if name == "uniform-continuum" => Ok(builtin::uniform_continuum()),
        (Some(name), _) if config::BUILTINS.contains(&name.as_str()) => {
            Err(CliError::Usage(format!("{name} is a discrete game; limit needs uniform-continuum or a continuum block")))
        }
        (Some(name), _) => Err(unknown_builtin(name)),
        (None, Some(doc)) => doc.to_game(),
        (None, None) => Ok(builtin::uniform_continuum()),
    }
}

pub const LIMIT_HEADER: [&str; 7] =
    ["n", "utility", "continuous_utility", "cesaro_utility", "pricing_residual", "narrow_proxy", "price_oscillation"];

pub fn cmd_limit(args: &LimitArgs, out: &mut dyn Write) -> Result<Exit, CliError> {
    let levels = parse_levels(&args.levels)?;
    let window = parse_window(&args.window)?;
    let run = args.game.load()?;
    let game = continuum_game(&args.game, &run)?;
    let (config, _) = solver_settings(&run, continuum_config(), None)?;
    let outcome = solve_sequence(&game, &levels, &config, args.game.limits())?;
    let report = continuous::convergence_report(&game, &outcome.solutions, window)?;
    let opt = |x: &Option<Rational>| x.as_ref().map(|r| f(decimal(r))).unwrap_or_default();
    let rows = report.rows.iter().map(|r| {
        vec![
            r.n.to_string(),
            f(decimal(&r.utility)),
            f(decimal(&r.continuous_utility)),
            opt(&r.cesaro_utility),
            rational_string(&r.pricing_residual),
            r.narrow_proxy.map(|x| format!("{x:e}")).unwrap_or_default(),
            opt(&r.price_oscillation),
        ]
    });
    emit(args.out.as_deref(), out, &csv_text(&LIMIT_HEADER, rows)?)?;
    if let Some(n) = outcome.truncated {
        eprintln!("level {n} exceeds the outcome cap; stopped after {} levels", outcome.solutions.len());
        return Ok(Exit::Cap);
    }
    Ok(Exit::Pass)
}

/// Result of solving and checking one random game.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub index: usize,
    pub spec: GameSpec,
    pub verified: bool,
    pub flags: Vec<CertificateFlag>,
    pub max_gain: f64,
    pub seconds: f64,
    /// Structure checks, when the game qualifies for them.
    pub structure: Option<StructureOutcome>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StructureOutcome {
    pub lemma: bool,
    pub order_bound: bool,
    pub detail: String,
}

/// Single-period games on the grid with a zero trade, noise in `[-1, 1]` and
/// noise mass at least `1/10` at `±1`.
pub fn structure_qualifies(spec: &GameSpec) -> bool {
    let tail = |z: i64| spec.noise_index(&rat(z, 1)).is_some_and(|i| spec.noise_probs()[i] >= rat(1, 10));
    let bounded = spec.noise().iter().all(|z| *z >= rat(-1, 1) && *z <= rat(1, 1));
    spec.horizon() == 1
        && spec.trades().contains(&rat(0, 1))
        && bounded
        && tail(-1)
        && tail(1)
        && check_assumption_grid(spec).passed
}

fn structure_checks(tree: &GameTree, cert: &EquilibriumCertificate) -> Result<StructureOutcome, CliError> {
    let (lemma, bound) = match cert.arithmetic {
        Arithmetic::Exact => (
            check_structure_lemma(tree, &cert.strategy, &cert.prices, StructureOptions::EXACT)?,
            check_order_bound(tree, &cert.strategy, &cert.prices, StructureOptions::EXACT),
        ),
        Arithmetic::Float => {
            let (xi, prices): (BehaviourStrategy<f64>, PricingSystem<f64>) = (cert.strategy.to_f64(), cert.prices.map(Scalar::to_f64));
            (
                check_structure_lemma(tree, &xi, &prices, StructureOptions::FLOAT)?,
                check_order_bound(tree, &xi, &prices, StructureOptions::FLOAT),
            )
        }
    };
    let detail = [&lemma.monotone_demand, &lemma.gap_pricing, &lemma.price_order, &lemma.price_pinning]
        .iter()
        .filter_map(|c| match c {
            verifier::LemmaCheck::Fail(v) => Some(v.message.clone()),
            verifier::LemmaCheck::Pass => None,
        })
        .chain((!bound.holds()).then(|| format!("{bound:?}")))
        .collect::<Vec<_>>()
        .join("; ");
    Ok(StructureOutcome { lemma: lemma.all_passed(), order_bound: bound.holds(), detail })
}

/// Solves each game with the homotopy and verifies the certificate in `f64`
/// at [`FLOAT_TOLERANCE`] (exactly for exact certificates).
pub fn run_sweep(seed: u64, count: usize, config: &SolverConfig) -> Result<Vec<SweepRow>, CliError> {
    let mut rows = Vec::with_capacity(count);
    for (index, spec) in random_games(seed, count, SweepShape::default()).into_iter().enumerate() {
        let tree = GameTree::build(&spec)?;
        let start = Instant::now();
        let cert = solver::sequential_equilibrium(&tree, config)?;
        let seconds = start.elapsed().as_secs_f64();
        let report = verify_certificate(&tree, &cert, None)?;
        let max_gain = report.max_deviation_gain.parse::<f64>().ok().or_else(|| parse_rational("gain", &report.max_deviation_gain).ok().map(|r| decimal(&r))).unwrap_or(f64::NAN);
        let structure = if report.passed && structure_qualifies(&spec) { Some(structure_checks(&tree, &cert)?) } else { None };
        rows.push(SweepRow { index, spec, verified: report.passed, flags: cert.flags.clone(), max_gain, seconds, structure });
    }
    Ok(rows)
}

pub fn cmd_sweep(args: &SweepArgs, out: &mut dyn Write) -> Result<Exit, CliError> {
    let rows = run_sweep(args.seed, args.count, &SolverConfig::default())?;
    let silent = rows.iter().any(|r| !r.verified && !r.flags.contains(&CertificateFlag::Unconverged));
    let structure_fail = rows.iter().any(|r| r.structure.as_ref().is_some_and(|s| !s.lemma || !s.order_bound));
    let cells = rows.iter().map(|r| {
        let spec = &r.spec;
        let flags: Vec<String> = r.flags.iter().map(|f| format!("{f:?}")).collect();
        let structure = match &r.structure {
            None => String::new(),
            Some(s) if s.lemma && s.order_bound => "pass".into(),
            Some(s) => format!("fail: {}", s.detail),
        };
        vec![
            r.index.to_string(),
            spec.horizon().to_string(),
            spec.n_states().to_string(),
            spec.trades().iter().map(rational_string).collect::<Vec<_>>().join(" "),
            spec.noise().iter().map(rational_string).collect::<Vec<_>>().join(" "),
            r.verified.to_string(),
            format!("{:e}", r.max_gain),
            flags.join(" "),
            format!("{:.4}", r.seconds),
            structure,
        ]
    });
    let header = ["index", "horizon", "states", "trades", "noise", "verified", "max_gain", "flags", "seconds", "structure"];
    emit(args.out.as_deref(), out, &csv_text(&header, cells)?)?;
    Ok(if silent || structure_fail { Exit::Fail } else { Exit::Pass })
}

/// `kyle solve` on the three-state example followed by an exact price check,
/// for callers that want the table without going through files.
pub fn example_3_1_prices() -> Result<Vec<(Rational, Rational)>, CliError> {
    let tree = GameTree::build(&builtin::example_3_1())?;
    let solved = solve_game(&tree, &SolverConfig::default(), ModeChoice::Auto)?;
    Ok(solved.certificate.prices.entries().map(|(_, flow, p)| (tree.flows()[flow].clone(), p.clone())).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn levels_and_windows() {
        assert_eq!(parse_levels("2..5").unwrap(), vec![2, 3, 4, 5]);
        assert_eq!(parse_levels("2,4").unwrap(), vec![2, 4]);
        assert_eq!(parse_levels("").unwrap_err().exit(), Exit::Parse);
        assert!(parse_levels("3..2").is_err());
        assert!(parse_levels("4,2").is_err());
        assert_eq!(parse_window("3").unwrap(), WindowRule::Fixed(3));
        assert!(parse_window("0").is_err());
    }

    #[test]
    fn alpha_grid_ends_at_one() {
        let g = alpha_grid(1e-3).unwrap();
        assert_eq!(g.len(), 1001);
        assert_eq!(*g.last().unwrap(), 1.0);
        assert_eq!(alpha_grid(0.3).unwrap().last().copied(), Some(1.0));
        assert!(alpha_grid(0.0).is_err());
    }

    #[test]
    fn example_3_1_table() {
        let table = example_3_1_prices().unwrap();
        let expected = [(-2, rat(0, 1)), (-1, rat(3, 7)), (0, rat(13, 16)), (1, rat(3, 4)), (2, rat(1, 1))];
        assert_eq!(table, expected.iter().map(|(y, p)| (rat(*y, 1), p.clone())).collect::<Vec<_>>());
    }
}
