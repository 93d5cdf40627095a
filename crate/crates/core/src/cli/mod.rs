//! Command-line front end.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use serde::{Deserialize, Serialize};

use sctep_core::formulation::{build_nlp, dump_nlp, ObjectiveKind};
use sctep_core::game::{self, Estimator, GameOptions, GameResult, Metric, Screening};
use sctep_core::network::matpower::{import_matpower, ImportOptions};
use sctep_core::network::{self, has_errors, validate_case, NetworkCase, Severity};
use sctep_core::report;
use sctep_core::runner::WORKERS_ENV;
use sctep_core::solver::{self, SolverSettings};
use sctep_core::{Error, Result};

/// Case argument naming the bundled five-bus case.
pub const BUNDLED_CASE5: &str = "case5";

#[derive(Debug, Parser)]
#[command(name = "sctep", version, about = "AC security-constrained expansion planning and option valuation")]
pub struct Cli {
    /// Log progress (repeat for more detail).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check a case file and print diagnostics.
    Validate {
        /// Case JSON file, or `case5` for the bundled case.
        case: String,
    },
    /// Solve the planning problem for one set of enabled options.
    Solve(SolveArgs),
    /// Rank options by their individual value.
    Screen(ScreenArgs),
    /// Evaluate the coalitional game and its Shapley values.
    Game(GameArgs),
    /// Export marginal-contribution data from a game artifact.
    Report(ReportArgs),
    /// Convert a MATPOWER case file into a planning case.
    ImportMatpower(ImportArgs),
    /// Print the assembled NLP in readable form.
    DumpNlp(DumpArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Objective {
    Curtailment,
    Cost,
}

impl Objective {
    fn kind(self) -> ObjectiveKind {
        self.metric().objective_kind()
    }

    fn metric(self) -> Metric {
        match self {
            Objective::Curtailment => Metric::AvoidedCurtailment,
            Objective::Cost => Metric::ExpectedCostReduction,
        }
    }
}

#[derive(Debug, Args)]
struct Common {
    /// Case JSON file, or `case5` for the bundled case.
    case: String,
    #[arg(long, value_enum, default_value = "curtailment")]
    objective: Objective,
    /// Solver settings JSON; missing fields take defaults.
    #[arg(long)]
    settings: Option<PathBuf>,
    /// Show costs in mln EUR/h.
    #[arg(long)]
    mln: bool,
}

#[derive(Debug, Args)]
struct SolveArgs {
    #[command(flatten)]
    common: Common,
    /// `all`, `none`, or comma-separated option ids.
    #[arg(long, default_value = "all")]
    coalition: String,
    /// Write the full result here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ScreenArgs {
    #[command(flatten)]
    common: Common,
    /// Keep this many top-ranked options.
    #[arg(long)]
    top: Option<usize>,
    /// Kept-player file.
    #[arg(long, default_value = "players.json")]
    keep: PathBuf,
    /// Write the ranking here.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, env = WORKERS_ENV)]
    workers: Option<usize>,
}

#[derive(Debug, Args)]
struct GameArgs {
    #[command(flatten)]
    common: Common,
    /// Player file from `screen`, or `all`.
    #[arg(long, default_value = "all")]
    players: String,
    /// Enumerate every coalition (the default).
    #[arg(long, conflicts_with = "sample")]
    exact: bool,
    /// Estimate from this many random orderings.
    #[arg(long)]
    sample: Option<usize>,
    #[arg(long, default_value_t = 1, requires = "sample")]
    seed: u64,
    #[arg(long, env = WORKERS_ENV)]
    workers: Option<usize>,
    /// Continue from a matching journal.
    #[arg(long)]
    resume: bool,
    /// Journal path (default: `<out>.journal`).
    #[arg(long)]
    journal: Option<PathBuf>,
    #[arg(long, default_value = "game.json")]
    out: PathBuf,
    #[arg(long, default_value_t = game::DEFAULT_PLAYER_CAP)]
    player_cap: usize,
    /// Keep values that decrease when a player joins.
    #[arg(long)]
    no_repair: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
}

#[derive(Debug, Args)]
struct ReportArgs {
    /// Game artifact written by `game`.
    game: PathBuf,
    #[arg(long, value_enum, default_value = "csv")]
    format: Format,
    /// Output file (default: stdout).
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ImportArgs {
    /// MATPOWER `.m` file.
    input: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Reinforcement cap per line, MVA (0 adds no line options).
    #[arg(long, default_value_t = 0.0)]
    line_li_max: f64,
    #[arg(long, default_value_t = 0.0)]
    line_c_inv: f64,
    /// Skip generating N-1 states.
    #[arg(long)]
    no_contingencies: bool,
}

#[derive(Debug, Args)]
struct DumpArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long, default_value = "all")]
    coalition: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Metadata written into every artifact.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct Metadata {
    tool_version: String,
    case_name: String,
    case_hash: String,
    settings_hash: String,
    settings: SolverSettings,
}

impl Metadata {
    fn new(case: &NetworkCase, settings: &SolverSettings) -> Self {
        Self {
            tool_version: env!("CARGO_PKG_VERSION").into(),
            case_name: case.name.clone(),
            case_hash: network::case_hash(case),
            settings_hash: settings.hash(),
            settings: settings.clone(),
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct PlayerFile {
    #[serde(flatten)]
    metadata: Metadata,
    metric: Metric,
    players: Vec<u32>,
}

pub fn main() -> i32 {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn run(cmd: Command) -> Result<i32> {
    match cmd {
        Command::Validate { case } => validate(&case),
        Command::Solve(a) => solve(a),
        Command::Screen(a) => screen(a),
        Command::Game(a) => game_cmd(a),
        Command::Report(a) => report_cmd(a),
        Command::ImportMatpower(a) => import(a),
        Command::DumpNlp(a) => dump(a),
    }
}

fn read_case_unvalidated(arg: &str) -> Result<NetworkCase> {
    if arg == BUNDLED_CASE5 && !Path::new(arg).exists() {
        return Ok(network::case5());
    }
    let text = fs::read_to_string(arg).map_err(|e| Error::io(arg, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        what: arg.into(),
        message: e.to_string(),
    })
}

fn load_case(arg: &str) -> Result<NetworkCase> {
    network::ensure_valid(read_case_unvalidated(arg)?)
}

fn load_settings(path: Option<&Path>) -> Result<SolverSettings> {
    let s = match path {
        None => SolverSettings::default(),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            serde_json::from_str(&text).map_err(|e| Error::Parse {
                what: p.display().to_string(),
                message: e.to_string(),
            })?
        }
    };
    s.validate()?;
    Ok(s)
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn to_pretty<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("artifact serializes") + "\n"
}

fn parse_ids(arg: &str) -> Result<Vec<u32>> {
    arg.split(|c: char| c == ',' || c.is_whitespace())
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse()
                .map_err(|_| Error::InvalidArgument(format!("not an option id: {t:?}")))
        })
        .collect()
}

fn coalition_ids(case: &NetworkCase, arg: &str) -> Result<Vec<u32>> {
    match arg {
        "all" => Ok(case.option_ids()),
        "none" => Ok(Vec::new()),
        s => parse_ids(s),
    }
}

/// Formats a metric or objective value in its display unit.
fn fmt_amount(v: f64, metric: Metric, mln: bool) -> String {
    match metric {
        Metric::AvoidedCurtailment => format!("{v:.3} MW"),
        Metric::ExpectedCostReduction if mln => format!("{:.4} mln EUR/h", v / 1e6),
        Metric::ExpectedCostReduction => format!("{v:.2} EUR/h"),
    }
}

fn validate(arg: &str) -> Result<i32> {
    let case = read_case_unvalidated(arg)?;
    let diags = validate_case(&case);
    for d in &diags {
        println!("{d}");
    }
    let errors = diags.iter().filter(|d| d.severity == Severity::Error).count();
    println!(
        "{}: {} error(s), {} warning(s)",
        arg,
        errors,
        diags.len() - errors
    );
    Ok(if has_errors(&diags) { 1 } else { 0 })
}

#[derive(Serialize)]
struct SolveArtifact<'a> {
    #[serde(flatten)]
    metadata: Metadata,
    objective_kind: ObjectiveKind,
    enabled: &'a [u32],
    summary: &'a solver::SolutionSummary,
    result: &'a solver::SolveResult,
}

fn solve(a: SolveArgs) -> Result<i32> {
    let case = load_case(&a.common.case)?;
    let settings = load_settings(a.common.settings.as_deref())?;
    let ids = coalition_ids(&case, &a.coalition)?;
    let problem = build_nlp(&case, &ids, a.common.objective.kind())?;
    let result = solver::solve(&problem, &settings);
    let summary = solver::summarize(&case, &problem, &result);
    let metric = a.common.objective.metric();
    let mut out = String::new();
    let _ = writeln!(out, "status      {}", result.status);
    let _ = writeln!(out, "objective   {}", fmt_amount(result.objective, metric, a.common.mln));
    let _ = writeln!(out, "iterations  {} ({:.2} s)", result.iterations, result.wall_time_s);
    let _ = writeln!(
        out,
        "residuals   feasibility {:.2e}  stationarity {:.2e}  complementarity {:.2e}",
        result.residuals.feasibility, result.residuals.stationarity, result.residuals.complementarity
    );
    for (id, v) in &summary.line_investment {
        let _ = writeln!(out, "LI line {id:<4} {v:10.3} MVA");
    }
    for (id, v) in &summary.flex_investment {
        let _ = writeln!(out, "FI flex {id:<4} {v:10.3} MW");
    }
    for b in &summary.blocks {
        let _ = writeln!(
            out,
            "scenario {:<3} state {:<3} LC {:10.3} MW  RC {:10.3} MW",
            b.scenario, b.state, b.load_curtailment, b.res_curtailment
        );
    }
    print!("{out}");
    if let Some(path) = &a.out {
        let art = SolveArtifact {
            metadata: Metadata::new(&case, &settings),
            objective_kind: problem.objective,
            enabled: &problem.enabled,
            summary: &summary,
            result: &result,
        };
        write(path, &to_pretty(&art))?;
    }
    if result.is_optimal() {
        Ok(0)
    } else {
        eprintln!("error: solver ended with status {}", result.status);
        Ok(1)
    }
}

fn workers(w: Option<usize>) -> Result<usize> {
    match w {
        Some(0) => Err(Error::InvalidArgument("workers must be at least 1".into())),
        Some(w) => Ok(w),
        None => Ok(sctep_core::runner::default_workers()),
    }
}

fn screen(a: ScreenArgs) -> Result<i32> {
    let case = load_case(&a.common.case)?;
    let settings = load_settings(a.common.settings.as_deref())?;
    let metric = a.common.objective.metric();
    let opts = GameOptions {
        workers: workers(a.workers)?,
        ..GameOptions::default()
    };
    let s: Screening = game::screen_options(&case, metric, &settings, &opts)?;
    println!(
        "baseline objective {}",
        fmt_amount(s.baseline_objective, metric, a.common.mln)
    );
    println!("{:>4}  {:>6}  {:<16} {:>18}", "rank", "option", "label", "value");
    for (k, e) in s.entries.iter().enumerate() {
        let v = e
            .value
            .map_or_else(|| format!("failed ({})", e.status), |v| fmt_amount(v, metric, a.common.mln));
        println!(
            "{:>4}  {:>6}  {:<16} {:>18}  {}",
            k + 1,
            e.option,
            e.label,
            v,
            if e.tied { "tie" } else { "" }
        );
    }
    if let Some(path) = &a.out {
        write(path, &to_pretty(&s))?;
    }
    if let Some(k) = a.top {
        let kept = s.top(k);
        if let (Some(last), Some(next)) = (s.entries.get(kept.len().wrapping_sub(1)), s.entries.get(kept.len())) {
            if last.tied && next.tied && last.value.zip(next.value).is_some_and(|(x, y)| (x - y).abs() <= 1e-6 * x.abs().max(1.0)) {
                eprintln!("note: the cut at {k} splits tied options; ties are broken by option id");
            }
        }
        let file = PlayerFile {
            metadata: Metadata::new(&case, &settings),
            metric,
            players: kept,
        };
        write(&a.keep, &to_pretty(&file))?;
        println!("kept {} option(s) in {}", file.players.len(), a.keep.display());
    }
    Ok(if s.entries.iter().any(|e| e.value.is_none()) { 1 } else { 0 })
}

fn read_players(case: &NetworkCase, arg: &str) -> Result<Vec<u32>> {
    if arg == "all" {
        return Ok(case.option_ids());
    }
    let text = fs::read_to_string(arg).map_err(|e| Error::io(arg, e))?;
    if let Ok(f) = serde_json::from_str::<PlayerFile>(&text) {
        return Ok(f.players);
    }
    if let Ok(v) = serde_json::from_str::<Vec<u32>>(&text) {
        return Ok(v);
    }
    parse_ids(&text)
}

fn game_cmd(a: GameArgs) -> Result<i32> {
    let case = load_case(&a.common.case)?;
    let settings = load_settings(a.common.settings.as_deref())?;
    let players = read_players(&case, &a.players)?;
    let metric = a.common.objective.metric();
    let journal = a.journal.clone().unwrap_or_else(|| {
        let mut s = a.out.as_os_str().to_owned();
        s.push(".journal");
        PathBuf::from(s)
    });
    let opts = GameOptions {
        workers: workers(a.workers)?,
        journal: Some(journal),
        resume: a.resume,
        player_cap: a.player_cap,
        repair: !a.no_repair,
        ..GameOptions::default()
    };
    let _ = a.exact;
    let result: GameResult = match a.sample {
        Some(m) => game::shapley_sampled(&case, &players, metric, m, a.seed, &settings, &opts)?,
        None => game::run_full_game(&case, &players, metric, &settings, &opts)?,
    };
    write(&a.out, &to_pretty(&result))?;
    info!("wrote {}", a.out.display());
    print_game(&result, a.common.mln);
    Ok(0)
}

fn print_game(r: &GameResult, mln: bool) {
    let est = match &r.estimator {
        Estimator::Exact => "exact".to_string(),
        Estimator::Sampled {
            permutations,
            seed,
            used,
            ..
        } => format!("sampled, {used}/{permutations} orderings, seed {seed}"),
    };
    println!(
        "{} players, {} coalition values ({est}); baseline objective {}",
        r.n_players(),
        r.values.len(),
        fmt_amount(r.baseline_objective, r.metric, mln)
    );
    if let Some(g) = r.grand_value() {
        println!("grand coalition value {}", fmt_amount(g, r.metric, mln));
    }
    println!("{:>6}  {:<16} {:>18} {:>18} {:>18}", "option", "label", "shapley", "individual", "grand marginal");
    let opt = |v: Option<f64>| v.map_or_else(|| "-".into(), |v| fmt_amount(v, r.metric, mln));
    for (i, p) in r.players.iter().enumerate() {
        let sh = match &r.std_err {
            Some(se) => format!("{} ±{:.3}", fmt_amount(r.shapley[i], r.metric, mln), se[i]),
            None => fmt_amount(r.shapley[i], r.metric, mln),
        };
        println!(
            "{:>6}  {:<16} {:>18} {:>18} {:>18}",
            p.option,
            p.label,
            sh,
            opt(r.individual[i]),
            opt(r.grand_marginal[i])
        );
    }
    if !r.monotonicity_violations.is_empty() {
        println!("{} monotonicity violation(s) remain", r.monotonicity_violations.len());
    }
}

fn report_cmd(a: ReportArgs) -> Result<i32> {
    let text = fs::read_to_string(&a.game).map_err(|e| Error::io(&a.game, e))?;
    let result: GameResult = serde_json::from_str(&text).map_err(|e| Error::Parse {
        what: a.game.display().to_string(),
        message: e.to_string(),
    })?;
    let body = match a.format {
        Format::Csv => report::to_csv(&result)?,
        Format::Json => report::to_json(&result)?,
    };
    match &a.out {
        Some(p) => write(p, &body)?,
        None => print!("{body}"),
    }
    Ok(0)
}

fn import(a: ImportArgs) -> Result<i32> {
    let text = fs::read_to_string(&a.input).map_err(|e| Error::io(&a.input, e))?;
    let name = a
        .input
        .file_stem()
        .map_or_else(|| "imported".into(), |s| s.to_string_lossy().into_owned());
    let opts = ImportOptions {
        contingencies: !a.no_contingencies,
        line_li_max: a.line_li_max,
        line_c_inv: a.line_c_inv,
        ..ImportOptions::default()
    };
    let case = import_matpower(&text, &name, &opts)?;
    let diags = validate_case(&case);
    for d in &diags {
        eprintln!("{d}");
    }
    network::save_case(&case, &a.out)?;
    println!(
        "{}: {} buses, {} lines, {} states, {} options",
        a.out.display(),
        case.buses.len(),
        case.lines.len(),
        case.states.len(),
        case.options.len()
    );
    Ok(if has_errors(&diags) { 1 } else { 0 })
}

fn dump(a: DumpArgs) -> Result<i32> {
    let case = load_case(&a.common.case)?;
    let ids = coalition_ids(&case, &a.coalition)?;
    let problem = build_nlp(&case, &ids, a.common.objective.kind())?;
    let text = dump_nlp(&case, &problem);
    match &a.out {
        Some(p) => write(p, &text)?,
        None => print!("{text}"),
    }
    Ok(0)
}
