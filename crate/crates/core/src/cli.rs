//! The `qnar` command line: `score`, `simulate`, `auction-replay`, `validate`.
//!
//! Exit codes are a stable contract: 0 success, 2 input error, 3 numerical
//! failure, 4 protocol violation, 130 interrupted.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::AtomicBool;

use clap::{Parser, Subcommand};

use crate::config::{ConfigError, RunConfig, Source};
use crate::credrank::{score_all_periods, scores_to_csv, CredRankError, CredRankParams, MintMode};
use crate::graph::{
    build_epoch_sequence, ingest_events, parse_jsonl, ContributionGraph, EpochConfig, GraphError, Kind, WeightConfig,
};
use crate::ledger::{qnar_gains, ConversionRate, Ledger, PayoutPolicy, Strategy};
use crate::numfmt::sig12;
use crate::opr::{journal, InflationMode};
use crate::rank::{AnchorKinds, PageRankParams, RankError, TransitionOperator};
use crate::sim::{
    bootstrap_ci, median, run_simulation_until, InitialDistribution, OutcomeMode, SimError, SimulationConfig,
    SimulationReport, REPORT_HEADER,
};
use crate::snapshot::Snapshot;
use crate::token::TokenAmount;

pub const EXIT_OK: i32 = 0;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_PROTOCOL: i32 = 4;
pub const EXIT_INTERRUPTED: i32 = 130;

/// Transition diagnostics printed by `score` before eliding the rest.
const MAX_TRANSITIONS: usize = 20;

#[derive(Debug, Parser)]
#[command(name = "qnar", version, about = "Contribution reputation, token payouts and review auctions")]
pub struct Cli {
    /// TOML config file; tables nest keys (`[sim] n = [5, 10]`).
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Master seed (`sim.seed`).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory for `score`, output file for `simulate`.
    #[arg(long, global = true, value_name = "PATH")]
    pub out: Option<PathBuf>,
    /// Weight overrides in `edge.<src>.<dst> = w` / `mint.<kind> = w` form.
    #[arg(long, global = true, value_name = "FILE")]
    pub weights: Option<PathBuf>,
    /// Number of scoring periods, or `auto` to cover every event (`epoch.count`).
    #[arg(long, global = true, value_name = "N|auto")]
    pub epochs: Option<String>,
    /// Worker threads; 0 picks one per core.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Any config key, highest precedence.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Score a JSONL event log into per-period reputation and payouts.
    Score { events: PathBuf },
    /// Run the staker simulation grid from `sim.*` settings.
    Simulate,
    /// Re-execute an auction journal and print its settlement.
    AuctionReplay { journal: PathBuf },
    /// Check event logs, weight files, journals, configs and snapshots.
    Validate {
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn input(message: impl Into<String>) -> Self {
        CliError { code: EXIT_INPUT, message: message.into() }
    }
    fn numerical(message: impl Into<String>) -> Self {
        CliError { code: EXIT_NUMERICAL, message: message.into() }
    }
    fn protocol(message: impl Into<String>) -> Self {
        CliError { code: EXIT_PROTOCOL, message: message.into() }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::input(e.to_string())
    }
}

/// Streams a command writes to.
pub struct Io<'a> {
    pub stdout: &'a mut dyn Write,
    pub stderr: &'a mut dyn Write,
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, env: impl IntoIterator<Item = (String, String)>, stop: &AtomicBool, io: &mut Io) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().to_string();
            let sink: &mut dyn Write = if e.use_stderr() { io.stderr } else { io.stdout };
            let _ = sink.write_all(text.as_bytes());
            return e.exit_code();
        }
    };
    match execute(&cli, env, stop, io) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(io.stderr, "error: {}", e.message);
            e.code
        }
    }
}

fn execute(
    cli: &Cli,
    env: impl IntoIterator<Item = (String, String)>,
    stop: &AtomicBool,
    io: &mut Io,
) -> Result<i32, CliError> {
    let config = resolve_config(cli, env)?;
    let _ = writeln!(io.stderr, "# resolved config");
    for line in config.render().lines() {
        let _ = writeln!(io.stderr, "#   {line}");
    }
    let threads: usize = config.get("threads")?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| CliError::input(format!("thread pool: {e}")))?;
    match &cli.command {
        Command::Score { events } => cmd_score(&config, &pool, events, cli.weights.as_deref(), cli.out.as_deref(), io),
        Command::Simulate => cmd_simulate(&config, &pool, cli.out.as_deref(), stop, io),
        Command::AuctionReplay { journal } => cmd_auction_replay(journal, io),
        Command::Validate { files } => cmd_validate(files, io),
    }
}

pub fn resolve_config(cli: &Cli, env: impl IntoIterator<Item = (String, String)>) -> Result<RunConfig, CliError> {
    let mut config = RunConfig::default();
    if let Some(path) = &cli.config {
        let text = read_text(path)?;
        config.merge_toml(&text).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    }
    config.merge_env(env)?;
    if let Some(seed) = cli.seed {
        config.set("sim.seed", seed.to_string(), Source::Flag)?;
    }
    if let Some(epochs) = &cli.epochs {
        config.set("epoch.count", epochs.clone(), Source::Flag)?;
    }
    if let Some(threads) = cli.threads {
        config.set("threads", threads.to_string(), Source::Flag)?;
    }
    for kv in &cli.set {
        let (k, v) = kv.split_once('=').ok_or_else(|| CliError::input(format!("--set {kv:?}: expected KEY=VALUE")))?;
        config.set(k.trim(), v.trim(), Source::Flag)?;
    }
    Ok(config)
}

fn read_bytes(path: &Path) -> Result<Vec<u8>, CliError> {
    std::fs::read(path).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

fn read_text(path: &Path) -> Result<String, CliError> {
    String::from_utf8(read_bytes(path)?).map_err(|_| CliError::input(format!("{}: not UTF-8 text", path.display())))
}

/// Writes through a temporary file in the target directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> std::io::Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| e.error)?;
    Ok(())
}

fn write_out(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    write_atomic(path, bytes).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}

// ---- score ----

fn graph_err(path: &Path, e: GraphError) -> CliError {
    CliError::input(format!("{}: {e}", path.display()))
}

fn credrank_err(e: CredRankError) -> CliError {
    match &e {
        CredRankError::Rank {
            source: RankError::NoConvergence { .. } | RankError::Singular | RankError::ZeroAnchorMass, ..
        }
        | CredRankError::ZeroTotalScore(_) => CliError::numerical(e.to_string()),
        _ => CliError::input(e.to_string()),
    }
}

fn credrank_params(config: &RunConfig) -> Result<CredRankParams, CliError> {
    let anchors: Vec<Kind> = config.get_list("score.anchors")?;
    let mint_mode = match config.raw("score.mint_mode").trim() {
        "cumulative" => MintMode::Cumulative,
        "period" => MintMode::Period,
        _ => return Err(config.invalid("score.mint_mode", "expected cumulative or period").into()),
    };
    let params = CredRankParams {
        pagerank: PageRankParams {
            alpha: config.get("score.alpha")?,
            tol: config.get("score.tol")?,
            max_iter: config.get("score.max_iter")?,
        },
        anchors: AnchorKinds(anchors.into_iter().collect()),
        decay: config.get("score.decay")?,
        base: config.get("score.base")?,
        mint_mode,
    };
    params.pagerank.validate().map_err(|e| CliError::input(e.to_string()))?;
    if !(0.0..=1.0).contains(&params.decay) {
        return Err(config.invalid("score.decay", "must lie in [0, 1]").into());
    }
    if !(params.base.is_finite() && params.base >= 0.0) {
        return Err(config.invalid("score.base", "must be finite and non-negative").into());
    }
    Ok(params)
}

fn payout_policy(config: &RunConfig) -> Result<PayoutPolicy, CliError> {
    let strategy = match config.raw("payout.strategy").trim() {
        "immediate" => Strategy::Immediate,
        "balanced" => Strategy::Balanced,
        "recent" => {
            let decay: f64 = config.get("payout.decay")?;
            if !(decay > 0.0 && decay <= 1.0) {
                return Err(config.invalid("payout.decay", "must lie in (0, 1]").into());
            }
            Strategy::Recent { decay }
        }
        _ => return Err(config.invalid("payout.strategy", "expected immediate, balanced or recent").into()),
    };
    let rate_raw = config.raw("payout.rate").trim().to_string();
    let (qlet, qnar) = rate_raw.split_once('/').unwrap_or((&rate_raw, "1"));
    let rate = match (qlet.trim().parse::<u64>(), qnar.trim().parse::<u64>()) {
        (Ok(qlet), Ok(qnar)) if qnar > 0 => ConversionRate { qlet, qnar },
        _ => return Err(config.invalid("payout.rate", "expected QLET/QNAR with positive integers").into()),
    };
    Ok(PayoutPolicy { strategy, budget: config.get::<TokenAmount>("payout.budget")?, rate })
}

/// `courselet -> user` transition probabilities of the merged graph.
fn transition_diagnostics(graph: &ContributionGraph) -> Vec<String> {
    let op = TransitionOperator::from_graph(graph);
    let mut out = Vec::new();
    for (i, node) in graph.nodes().iter().enumerate() {
        if node.id.kind() != &Kind::Courselet {
            continue;
        }
        for (j, _) in graph.out_edges(i) {
            let target = &graph.node(j).id;
            if target.kind() == &Kind::User {
                let p = op.prob(i, j);
                out.push(format!("transition {} -> {target}: {p:.2} ({})", node.id, sig12(p)));
            }
        }
    }
    out
}

fn cmd_score(
    config: &RunConfig,
    pool: &rayon::ThreadPool,
    events_path: &Path,
    weights_path: Option<&Path>,
    out_dir: Option<&Path>,
    io: &mut Io,
) -> Result<i32, CliError> {
    let text = read_text(events_path)?;
    let events = parse_jsonl(&text).map_err(|e| graph_err(events_path, e))?;
    if events.is_empty() {
        return Err(CliError::input(format!("{}: no events", events_path.display())));
    }
    let weights = match weights_path {
        Some(p) => WeightConfig::from_kv_str(&read_text(p)?).map_err(|e| graph_err(p, e))?,
        None => WeightConfig::default(),
    };
    let graph = ingest_events(&events, &weights).map_err(|e| graph_err(events_path, e))?;

    let period: i64 = config.get("epoch.period")?;
    let first = events.iter().map(|e| e.ts).min().expect("non-empty");
    let origin = config.get_auto::<i64>("epoch.origin")?.unwrap_or(first);
    let mut epochs = match config.get_auto::<u32>("epoch.count")? {
        Some(count) => EpochConfig::new(origin, period, count),
        None => EpochConfig::covering(&events, origin, period),
    }
    .map_err(|e| CliError::input(e.to_string()))?;
    epochs.webbing = config.get("epoch.webbing")?;
    let seq = build_epoch_sequence(&events, &epochs, &weights).map_err(|e| graph_err(events_path, e))?;

    let params = credrank_params(config)?;
    let (_, scores) = pool.install(|| score_all_periods(&seq, &weights, &params)).map_err(credrank_err)?;

    let diagnostics = transition_diagnostics(&graph);
    for line in diagnostics.iter().take(MAX_TRANSITIONS) {
        let _ = writeln!(io.stderr, "{line}");
    }
    if diagnostics.len() > MAX_TRANSITIONS {
        let _ = writeln!(io.stderr, "... {} more transitions", diagnostics.len() - MAX_TRANSITIONS);
    }

    let policy = payout_policy(config)?;
    let mut ledger = Ledger::new();
    for s in &scores {
        let levels: Vec<_> = s.contributors.iter().map(|c| (c.user.clone(), c.score)).collect();
        let gains = qnar_gains(&levels, &ledger.lifetime_qnar()).map_err(|e| CliError::numerical(e.to_string()))?;
        ledger.settle_period(s.period, &gains, &policy).map_err(|e| CliError::numerical(e.to_string()))?;
    }

    let csv = scores_to_csv(&scores);
    match out_dir {
        None => {
            io.stdout.write_all(csv.as_bytes()).map_err(|e| CliError::input(e.to_string()))?;
        }
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(|e| CliError::input(format!("{}: {e}", dir.display())))?;
            let snapshot = Snapshot { graph, epochs: seq, scores, ledger };
            write_out(&dir.join("scores.csv"), csv.as_bytes())?;
            write_out(&dir.join("ledger.csv"), snapshot.ledger.snapshot_csv().as_bytes())?;
            write_out(&dir.join("ledger.jsonl"), snapshot.ledger.journal_jsonl().as_bytes())?;
            write_out(&dir.join("snapshot.qnar"), &snapshot.to_bytes())?;
            let _ = writeln!(io.stderr, "wrote scores.csv, ledger.csv, ledger.jsonl, snapshot.qnar to {}", dir.display());
        }
    }
    Ok(EXIT_OK)
}

// ---- simulate ----

fn sim_err(e: SimError) -> CliError {
    match e {
        SimError::InvalidConfig(_) | SimError::InvalidDistributionParams(_) => CliError::input(e.to_string()),
        SimError::Auction(_) => CliError::protocol(e.to_string()),
        _ => CliError::numerical(e.to_string()),
    }
}

/// One `SimulationConfig` per `(dist, n)` cell of the configured grid.
pub fn simulation_grid(config: &RunConfig) -> Result<Vec<SimulationConfig>, CliError> {
    let ns: Vec<usize> = config.get_list("sim.n")?;
    let rounds: Vec<u32> = config.get_list("sim.rounds")?;
    let dists = config
        .raw("sim.dist")
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(|d| match d {
            "uniform" => Ok(InitialDistribution::UNIFORM),
            "pareto" => Ok(InitialDistribution::PARETO),
            _ => Err(config.invalid("sim.dist", "expected uniform or pareto")),
        })
        .collect::<Result<Vec<_>, _>>()?;
    if ns.is_empty() || rounds.is_empty() || dists.is_empty() {
        return Err(CliError::input("sim.n, sim.rounds and sim.dist need at least one value"));
    }
    let inflation_mode = match config.raw("sim.inflation_mode").trim() {
        "per-participant" => InflationMode::PerParticipant,
        "total-split" => InflationMode::TotalSplit,
        _ => return Err(config.invalid("sim.inflation_mode", "expected per-participant or total-split").into()),
    };
    let outcome_mode = match config.raw("sim.outcome").trim() {
        "endogenous" => OutcomeMode::Endogenous,
        "exogenous" => OutcomeMode::Exogenous { p_accept: config.get("sim.p_accept")? },
        _ => return Err(config.invalid("sim.outcome", "expected endogenous or exogenous").into()),
    };
    let base = SimulationConfig {
        n_rounds: *rounds.iter().max().expect("non-empty"),
        checkpoints: rounds,
        vote_p: config.get("sim.p")?,
        bid_fraction: config.get("sim.f")?,
        inflation: config.get("sim.inflation")?,
        inflation_mode,
        outcome_mode,
        replications: config.get("sim.reps")?,
        seed: config.get("sim.seed")?,
        record_paths: config.get("sim.paths")?,
        ..SimulationConfig::default()
    };
    let mut grid = Vec::new();
    for distribution in dists {
        for &n in &ns {
            let cell = SimulationConfig { n_stakers: n, distribution, ..base.clone() };
            cell.validate().map_err(sim_err)?;
            grid.push(cell);
        }
    }
    Ok(grid)
}

fn summarize(report: &SimulationReport, out: &mut String) {
    let c = &report.config;
    for rounds in c.resolved_checkpoints() {
        let sharpes: Vec<f64> = report.metrics(rounds).filter_map(|m| m.sharpe).collect();
        let ci = bootstrap_ci(&sharpes, |xs| median(xs.to_vec()).unwrap_or(f64::NAN), 1000, 0.95, c.seed);
        let _ = write!(out, "# n={} dist={} rounds={rounds}: median sharpe ", c.n_stakers, c.distribution.name());
        match (median(sharpes.clone()), ci) {
            (Some(m), Some((lo, hi))) => {
                let _ = write!(out, "{} (95% CI {} .. {})", sig12(m), sig12(lo), sig12(hi));
            }
            _ => out.push_str("undefined"),
        }
        if let Some(r) = report.mean_exp_return(rounds) {
            let _ = write!(out, ", mean return {}", sig12(r));
        }
        out.push('\n');
    }
}

fn cmd_simulate(
    config: &RunConfig,
    pool: &rayon::ThreadPool,
    out: Option<&Path>,
    stop: &AtomicBool,
    io: &mut Io,
) -> Result<i32, CliError> {
    let grid = simulation_grid(config)?;
    let mut csv = format!("{REPORT_HEADER}\n");
    let mut summary = String::new();
    let mut truncated = None;
    let mut reports = Vec::new();
    for cell in &grid {
        let report = pool.install(|| run_simulation_until(cell, stop)).map_err(sim_err)?;
        csv.push_str(&report.csv_rows());
        summarize(&report, &mut summary);
        if report.interrupted {
            truncated = Some(format!(
                "# truncated: interrupted at n={} dist={} after {} of {} replications\n",
                cell.n_stakers,
                cell.distribution.name(),
                report.replications.len(),
                cell.replications
            ));
            reports.push(report);
            break;
        }
        reports.push(report);
    }
    if let Some(marker) = &truncated {
        csv.push_str(marker);
    }
    let _ = io.stderr.write_all(summary.as_bytes());
    match out {
        Some(path) => {
            write_out(path, csv.as_bytes())?;
            if config.get::<bool>("sim.paths")? {
                for r in &reports {
                    let name = format!(
                        "{}.n{}.{}.paths.csv",
                        path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "report".into()),
                        r.config.n_stakers,
                        r.config.distribution.name()
                    );
                    if let Some(text) = r.paths_csv() {
                        write_out(&path.with_file_name(name), text.as_bytes())?;
                    }
                }
            }
        }
        None => {
            io.stdout.write_all(csv.as_bytes()).map_err(|e| CliError::input(e.to_string()))?;
            if config.get::<bool>("sim.paths")? {
                let _ = writeln!(io.stderr, "sim.paths needs --out; wealth paths not written");
            }
        }
    }
    Ok(if truncated.is_some() { EXIT_INTERRUPTED } else { EXIT_OK })
}

// ---- auction-replay ----

fn cmd_auction_replay(path: &Path, io: &mut Io) -> Result<i32, CliError> {
    let text = read_text(path)?;
    let lines = journal::parse_journal(&text).map_err(|e| CliError::input(format!("{}: {e}", path.display())))?;
    let report = journal::replay(&lines).map_err(|e| CliError::protocol(format!("{}: {e}", path.display())))?;
    io.stdout.write_all(report.render().as_bytes()).map_err(|e| CliError::input(e.to_string()))?;
    Ok(EXIT_OK)
}

// ---- validate ----

/// Named problem found by `validate`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    pub name: &'static str,
    pub detail: String,
}

fn violation(name: &'static str, detail: impl ToString) -> Violation {
    Violation { name, detail: detail.to_string() }
}

fn graph_violation(e: GraphError) -> Violation {
    let name = match &e {
        GraphError::NegativeWeight { .. } => "negative-weight",
        GraphError::Parse { .. } => "parse-error",
        GraphError::DanglingTarget { .. } => "dangling-target",
        GraphError::DuplicateCourselet { .. } => "duplicate-courselet",
        GraphError::UnknownEdgeKind { .. } => "unknown-edge-kind",
        GraphError::InvalidEvent { .. } => "invalid-event",
        _ => "invalid-epochs",
    };
    violation(name, e)
}

/// Classifies `path` by content and checks it. Returns a short description.
pub fn validate_file(path: &Path) -> Result<String, Violation> {
    let bytes = std::fs::read(path).map_err(|e| violation("unreadable", e))?;
    if Snapshot::is_snapshot(&bytes) {
        use crate::snapshot::SnapshotError as E;
        let snap = Snapshot::from_bytes(&bytes).map_err(|e| {
            let name = match &e {
                E::ChecksumMismatch { .. } => "checksum-mismatch",
                E::UnsupportedVersion(_) => "unsupported-version",
                E::BadMagic => "bad-magic",
                _ => "malformed-snapshot",
            };
            violation(name, e)
        })?;
        snap.graph.validate().map_err(|e| violation("invalid-graph", e))?;
        return Ok(format!("snapshot, periods: {}, scored periods: {}", snap.epochs.len(), snap.scores.len()));
    }
    let text = String::from_utf8(bytes).map_err(|_| violation("not-text", "file is neither a snapshot nor UTF-8"))?;
    let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
    let first = text.lines().find(|l| !l.trim().is_empty()).unwrap_or("");
    if ext == "toml" {
        let mut c = RunConfig::default();
        c.merge_toml(&text).map_err(|e| violation("config-error", e))?;
        return Ok("config".into());
    }
    if ext == "jsonl" || ext == "json" || first.trim_start().starts_with('{') {
        if first.contains("\"action\"") {
            let lines = journal::parse_journal(&text).map_err(|e| violation("parse-error", e))?;
            let report = journal::replay(&lines).map_err(|e| violation("protocol-violation", e))?;
            return Ok(format!("auction journal, events: {}, settled bids: {}", lines.len(), report.settlement.entries.len()));
        }
        let events = parse_jsonl(&text).map_err(graph_violation)?;
        if events.is_empty() {
            return Err(violation("no-events", "event log is empty"));
        }
        let g = ingest_events(&events, &WeightConfig::default()).map_err(graph_violation)?;
        return Ok(format!("event log, events: {}, nodes: {}", events.len(), g.node_count()));
    }
    let w = WeightConfig::from_kv_str(&text).map_err(graph_violation)?;
    w.validate().map_err(graph_violation)?;
    Ok(format!("weights, edge kinds: {}", w.edges().count()))
}

fn cmd_validate(files: &[PathBuf], io: &mut Io) -> Result<i32, CliError> {
    let mut clean = true;
    for path in files {
        match validate_file(path) {
            Ok(what) => {
                let _ = writeln!(io.stdout, "{}: ok ({what})", path.display());
            }
            Err(v) => {
                clean = false;
                let _ = writeln!(io.stdout, "{}: {}: {}", path.display(), v.name, v.detail);
            }
        }
    }
    Ok(if clean { EXIT_OK } else { EXIT_INPUT })
}
