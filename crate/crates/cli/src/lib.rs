//! Command-line front end: builds systems from flags or description files,
//! explores them and reports statistics, verdicts and counterexamples.
//!
//! Exit codes: 0 when every selected check passes and every deadlock is an
//! expected terminal state, 1 on any violation, unexpected deadlock or
//! exhausted state budget, 2 on usage errors.

pub mod report;
pub mod system_file;

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;
use usecon::catalog::{builtin_policy, sweep_candidates, BuiltinPolicy};
use usecon::explorer::{
    explore, DeadlockClass, ExplorationResult, ExploreError, ExploreOptions, Fairness, StoreMode,
    ViolationKind, DEFAULT_MAX_STATES,
};
use usecon::model::{
    decode, ConfigError, ModelKind, RawValue, SystemBuilder, SystemConfig, UseCounts,
};
use usecon::properties::{liveness_goals_for, safety_monitors_for, standard_invariants};

use report::{
    Comparison, ConfigEcho, DeadlockSample, DeadlockSummary, DiagnosticReport, RunReport,
    Statistics, Stats, SweepEntry, SweepReport, Table2Report, Table2Row, TraceLine, Verdict,
    ViolationReport, DEADLOCK_SAMPLES,
};
use system_file::{SystemFile, SystemFileError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VIOLATION: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("system file {path}: {source}")]
    SystemFile {
        path: String,
        source: SystemFileError,
    },
    #[error("invalid system: {0}")]
    Config(#[from] ConfigError),
    #[error("{context}: {source}")]
    Io {
        context: String,
        source: std::io::Error,
    },
    #[error(transparent)]
    Explore(#[from] ExploreError),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Explore(_) => EXIT_VIOLATION,
            _ => EXIT_USAGE,
        }
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

#[derive(Debug, Parser)]
#[command(
    name = "usecon",
    version,
    about = "Explicit-state model checker for usage-control systems"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Explore one system and run the selected checks.
    Check(CheckArgs),
    /// Reproduce the published performance table.
    Table2(Table2Args),
    /// Rank built-in policies by distance to target statistics.
    Sweep(SweepArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Text,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum FairnessArg {
    Weak,
    None,
}

impl From<FairnessArg> for Fairness {
    fn from(f: FairnessArg) -> Self {
        match f {
            FairnessArg::Weak => Fairness::Weak,
            FairnessArg::None => Fairness::None,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct SystemArgs {
    /// pre or ongoing.
    #[arg(long)]
    pub model: Option<ModelKind>,
    /// One subject, one action and N objects.
    #[arg(long, conflicts_with_all = ["subjects", "actions", "objects", "system"])]
    pub uses: Option<usize>,
    #[arg(long)]
    pub subjects: Option<usize>,
    #[arg(long)]
    pub actions: Option<usize>,
    #[arg(long)]
    pub objects: Option<usize>,
    /// true, false, a built-in policy name, @FILE, or rule text.
    #[arg(long)]
    pub policy: Option<String>,
    /// System description file.
    #[arg(long, value_name = "FILE", conflicts_with_all = ["subjects", "actions", "objects"])]
    pub system: Option<PathBuf>,
    /// Give generated uses an integer attribute `att` with domain 0..=K.
    #[arg(long, value_name = "K", conflicts_with = "system")]
    pub att_max: Option<i64>,
    /// Clock bound for systems whose updates read the clock.
    #[arg(long)]
    pub tick_bound: Option<u64>,
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// Worker threads (default: available parallelism).
    #[arg(long)]
    pub workers: Option<usize>,
    /// Maximum number of distinct states to store.
    #[arg(long, default_value_t = DEFAULT_MAX_STATES)]
    pub memory_limit: u64,
    /// Store 64-bit fingerprints instead of full states.
    #[arg(long)]
    pub fingerprint: bool,
    #[arg(long, value_enum, default_value = "text")]
    pub output: OutputFormat,
}

impl RunArgs {
    fn options(&self) -> ExploreOptions {
        let mut o = ExploreOptions::default();
        if let Some(w) = self.workers {
            o = o.workers(w);
        }
        o.max_states = self.memory_limit;
        o.store = if self.fingerprint {
            StoreMode::Fingerprint
        } else {
            StoreMode::Exact
        };
        o
    }
}

#[derive(Debug, Clone, Args)]
pub struct CheckArgs {
    #[command(flatten)]
    pub system: SystemArgs,
    #[command(flatten)]
    pub run: RunArgs,
    /// Comma-separated: deadlock, typecorrectness, safety, liveness, all.
    #[arg(long, default_value = "all")]
    pub checks: String,
    #[arg(long, value_enum, default_value = "weak")]
    pub fairness: FairnessArg,
    /// Write every explored edge to this file.
    #[arg(long, value_name = "PATH")]
    pub emit_graph: Option<PathBuf>,
    /// Expected `diameter,found,distinct` to compare against.
    #[arg(long, value_name = "D,F,S")]
    pub expect: Option<Stats>,
}

#[derive(Debug, Clone, Args)]
pub struct Table2Args {
    #[arg(long, default_value = "true")]
    pub policy: String,
    /// Use counts to run; each must have a published row.
    #[arg(long, value_delimiter = ',', default_value = "2,8,12")]
    pub uses: Vec<usize>,
    #[arg(long, value_delimiter = ',', default_value = "pre,ongoing")]
    pub models: Vec<ModelKind>,
    #[command(flatten)]
    pub run: RunArgs,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub model: ModelKind,
    #[arg(long)]
    pub uses: usize,
    /// Target `diameter,found,distinct` (default: the published row).
    #[arg(long, value_name = "D,F,S")]
    pub target: Option<Stats>,
    /// Comma-separated policy names (default: the built-in candidate list).
    #[arg(long)]
    pub candidates: Option<String>,
    #[command(flatten)]
    pub run: RunArgs,
}

/// Selected checks of a `check` run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CheckSet {
    pub deadlock: bool,
    pub type_correctness: bool,
    pub safety: bool,
    pub liveness: bool,
}

impl std::str::FromStr for CheckSet {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let mut set = CheckSet::default();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            match part {
                "deadlock" => set.deadlock = true,
                "typecorrectness" => set.type_correctness = true,
                "safety" => set.safety = true,
                "liveness" => set.liveness = true,
                "all" => {
                    set = CheckSet {
                        deadlock: true,
                        type_correctness: true,
                        safety: true,
                        liveness: true,
                    }
                }
                other => return Err(format!("unknown check '{other}'")),
            }
        }
        Ok(set)
    }
}

impl CheckSet {
    fn names(&self) -> Vec<String> {
        [
            (self.deadlock, "deadlock"),
            (self.type_correctness, "typecorrectness"),
            (self.safety, "safety"),
            (self.liveness, "liveness"),
        ]
        .into_iter()
        .filter(|(on, _)| *on)
        .map(|(_, n)| n.to_string())
        .collect()
    }
}

/// Rule text for a `--policy` argument and the name to report it under.
pub fn resolve_policy(spec: &str) -> Result<(String, String), CliError> {
    if let Some(path) = spec.strip_prefix('@') {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
            context: format!("reading policy file {path}"),
            source,
        })?;
        return Ok((spec.to_string(), text.trim().to_string()));
    }
    Ok((
        spec.to_string(),
        builtin_policy(spec).unwrap_or_else(|| spec.to_string()),
    ))
}

/// The configuration described by `args`, plus the counts and policy
/// name it was built from.
pub fn build_system(args: &SystemArgs) -> Result<(SystemConfig, ConfigEcho), CliError> {
    let mut builder;
    let mut echo = ConfigEcho {
        model: String::new(),
        system: None,
        subjects: 0,
        actions: 0,
        objects: 0,
        uses: 0,
        policy: "true".to_string(),
        checks: Vec::new(),
        fairness: String::new(),
        workers: 0,
        memory_limit: 0,
        fingerprint: false,
    };
    if let Some(path) = &args.system {
        let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
            context: format!("reading system file {}", path.display()),
            source,
        })?;
        let file = SystemFile::parse(&text).map_err(|source| CliError::SystemFile {
            path: path.display().to_string(),
            source,
        })?;
        builder = file
            .builder(args.model)
            .map_err(|source| CliError::SystemFile {
                path: path.display().to_string(),
                source,
            })?;
        echo.system = Some(path.display().to_string());
        if file.policy.is_some() {
            echo.policy = "[policy]".to_string();
        }
    } else {
        let model = args
            .model
            .ok_or_else(|| usage("--model is required unless --system names one"))?;
        let counts = match (args.uses, args.subjects, args.actions, args.objects) {
            (Some(n), ..) => UseCounts::uses(n),
            (None, None, None, None) => {
                return Err(usage(
                    "give --uses, --subjects/--actions/--objects, or --system",
                ))
            }
            (None, s, a, o) => UseCounts {
                subjects: s.unwrap_or(1),
                actions: a.unwrap_or(1),
                objects: o.unwrap_or(1),
            },
        };
        builder = SystemBuilder::generated(model, counts);
        if let Some(k) = args.att_max {
            if k < 0 {
                return Err(usage("--att-max must be non-negative"));
            }
            builder = builder.use_attr(
                "att",
                (0..=k).map(RawValue::Int).collect(),
                Some(RawValue::Int(0)),
            );
        }
    }
    if let Some(p) = &args.policy {
        let (name, text) = resolve_policy(p)?;
        echo.policy = name;
        builder = builder.policy_text(text);
    }
    if let Some(t) = args.tick_bound {
        builder = builder.tick_bound(t);
    }
    let config = builder.build()?;
    echo.model = config.model().as_str().to_string();
    for (kind, slot) in [
        (usecon::model::EntityKind::Subject, &mut echo.subjects),
        (usecon::model::EntityKind::Action, &mut echo.actions),
        (usecon::model::EntityKind::Object, &mut echo.objects),
    ] {
        *slot = config.entities_of(kind).len();
    }
    echo.uses = config.candidates().len();
    Ok((config, echo))
}

fn violation_report(v: &usecon::explorer::Violation, config: &SystemConfig) -> ViolationReport {
    let trace = v
        .trace
        .steps
        .iter()
        .map(|s| TraceLine {
            action: s.label.map(|l| l.display(config)),
            state: decode(s.key.as_bytes(), config)
                .map(|w| config.display_world(&w))
                .unwrap_or_else(|_| s.key.to_hex()),
        })
        .collect();
    ViolationReport {
        kind: v.kind.as_str().to_string(),
        property: v.property.clone(),
        message: v.message.clone(),
        trace,
        cycle_start: v.trace.cycle_start,
        replays: v.trace.replay(config).is_ok(),
    }
}

fn statistics(r: &ExplorationResult) -> Statistics {
    Statistics {
        diameter: r.diameter,
        states_found: r.states_found,
        distinct_states: r.distinct_states,
        constrained_states: r.constrained_states,
        elapsed_seconds: r.elapsed.as_secs_f64(),
        partial: r.partial,
        approximate: r.approximate,
    }
}

/// Explores the system of `args` and assembles its report.
pub fn run(args: &CheckArgs) -> Result<RunReport, CliError> {
    let set: CheckSet = args.checks.parse().map_err(usage)?;
    let (config, mut echo) = build_system(&args.system)?;
    let fairness: Fairness = args.fairness.into();
    let checks = usecon::explorer::Checks {
        deadlock: set.deadlock,
        invariants: if set.type_correctness {
            standard_invariants(&config)
        } else {
            Vec::new()
        },
        monitors: if set.safety {
            safety_monitors_for(config.model())
        } else {
            Vec::new()
        },
        liveness: if set.liveness {
            liveness_goals_for(config.model())
                .into_iter()
                .map(|g| g.with_fairness(fairness))
                .collect()
        } else {
            Vec::new()
        },
    };
    let mut options = args.run.options();
    options.record_edges = args.emit_graph.is_some();
    echo.checks = set.names();
    echo.fairness = fairness.as_str().to_string();
    echo.workers = options.workers;
    echo.memory_limit = options.max_states;
    echo.fingerprint =
        options.store == StoreMode::Fingerprint && !set.liveness && args.emit_graph.is_none();

    let (result, graph) = match explore(&config, &checks, &options) {
        Ok(e) => (e.result, Some(e.graph)),
        Err(ExploreError::MemoryBudgetExceeded { partial, .. }) => (*partial, None),
        Err(e) => return Err(e.into()),
    };
    if let (Some(path), Some(graph)) = (&args.emit_graph, &graph) {
        let io = |source| CliError::Io {
            context: format!("writing graph to {}", path.display()),
            source,
        };
        let mut w = BufWriter::new(File::create(path).map_err(io)?);
        graph.write_edge_list(&mut w).map_err(io)?;
        w.flush().map_err(io)?;
    }

    let count = |k: ViolationKind| result.violations.iter().filter(|v| v.kind == k).count();
    let mut verdicts = Vec::new();
    let unexpected = result.unexpected_deadlocks();
    for (on, name, failures) in [
        (set.deadlock, "deadlock", unexpected),
        (
            set.type_correctness,
            "typecorrectness",
            count(ViolationKind::Invariant),
        ),
        (set.safety, "safety", count(ViolationKind::Safety)),
        (set.liveness, "liveness", count(ViolationKind::Liveness)),
    ] {
        if on {
            verdicts.push(Verdict {
                check: name.to_string(),
                passed: failures == 0 && !result.partial,
                violations: failures,
            });
        }
    }
    let samples = result
        .deadlocks
        .iter()
        .filter(|d| d.class == DeadlockClass::Unexpected)
        .chain(
            result
                .deadlocks
                .iter()
                .filter(|d| d.class == DeadlockClass::ExpectedTerminal),
        )
        .take(DEADLOCK_SAMPLES)
        .map(|d| DeadlockSample {
            class: d.class.as_str().to_string(),
            state: decode(d.key.as_bytes(), &config)
                .map(|w| config.display_world(&w))
                .unwrap_or_else(|_| d.key.to_hex()),
        })
        .collect();
    let failed =
        !result.violations.is_empty() || (set.deadlock && unexpected > 0) || result.partial;
    let statistics = statistics(&result);
    Ok(RunReport {
        comparison: args.expect.map(|e| Comparison::new(e, statistics.triple())),
        config: echo,
        statistics,
        verdicts,
        deadlocks: DeadlockSummary {
            expected_terminal: result.deadlocks.len() - unexpected,
            unexpected,
            samples,
        },
        violations: result
            .violations
            .iter()
            .map(|v| violation_report(v, &config))
            .collect(),
        diagnostics: result
            .diagnostics
            .iter()
            .map(|d| DiagnosticReport {
                message: d.message.clone(),
                count: d.count,
            })
            .collect(),
        exit_code: if failed { EXIT_VIOLATION } else { EXIT_OK },
    })
}

/// Published rows: model, uses, diameter, found, distinct, and the two
/// timing columns in seconds.
pub const PUBLISHED_TABLE2: [(ModelKind, usize, Stats, u64, u64); 6] = [
    (ModelKind::Pre, 2, stats(6, 21, 12), 1, 3),
    (ModelKind::Pre, 8, stats(23, 277_969, 16_832), 2, 5),
    (ModelKind::Pre, 12, stats(31, 45_533_665, 560_128), 53, 138),
    (ModelKind::Ongoing, 2, stats(7, 33, 16), 1, 3),
    (ModelKind::Ongoing, 8, stats(25, 367_873, 23_808), 2, 7),
    (
        ModelKind::Ongoing,
        12,
        stats(37, 79_112_449, 1_224_704),
        118,
        241,
    ),
];

const fn stats(diameter: u64, states_found: u64, distinct_states: u64) -> Stats {
    Stats {
        diameter,
        states_found,
        distinct_states,
    }
}

pub fn published(model: ModelKind, uses: usize) -> Option<Stats> {
    PUBLISHED_TABLE2
        .iter()
        .find(|r| r.0 == model && r.1 == uses)
        .map(|r| r.2)
}

/// Cells that must be reproduced exactly: the whole ongoing two-use row and
/// every ongoing diameter.
fn hard_cells(model: ModelKind, uses: usize) -> Vec<String> {
    match (model, uses) {
        (ModelKind::Ongoing, 2) => vec!["diameter".into(), "found".into(), "distinct".into()],
        (ModelKind::Ongoing, _) => vec!["diameter".into()],
        _ => Vec::new(),
    }
}

fn explore_stats(
    config: &SystemConfig,
    options: &ExploreOptions,
) -> Result<(Stats, f64, bool), ExploreError> {
    let checks = usecon::explorer::Checks {
        deadlock: true,
        ..usecon::explorer::Checks::none()
    };
    let r = match explore(config, &checks, options) {
        Ok(e) => e.result,
        Err(ExploreError::MemoryBudgetExceeded { partial, .. }) => *partial,
        Err(e) => return Err(e),
    };
    let s = statistics(&r);
    Ok((s.triple(), s.elapsed_seconds, s.partial))
}

/// Runs the published model/use-count ladder with one policy. Failures
/// are reported per row.
pub fn reproduce_table2(args: &Table2Args) -> Result<Table2Report, CliError> {
    let (policy_name, text) = resolve_policy(&args.policy)?;
    let options = args.run.options();
    let mut rows = Vec::new();
    for &model in &args.models {
        for &uses in &args.uses {
            let &(_, _, publ, dl_secs, prop_secs) = PUBLISHED_TABLE2
                .iter()
                .find(|r| r.0 == model && r.1 == uses)
                .ok_or_else(|| usage(format!("no published row for {model} with {uses} uses")))?;
            let config = SystemBuilder::generated(model, UseCounts::uses(uses))
                .policy_text(text.clone())
                .build()?;
            let (actual, seconds, partial, error) = match explore_stats(&config, &options) {
                Ok((s, secs, partial)) => (Some(s), secs, partial, None),
                Err(e) => (None, 0.0, false, Some(e.to_string())),
            };
            let cell = |f: fn(&Stats) -> u64| actual.is_some_and(|a| !partial && f(&a) == f(&publ));
            rows.push(Table2Row {
                model: model.as_str().to_string(),
                uses,
                published: publ,
                published_deadlock_seconds: dl_secs,
                published_properties_seconds: prop_secs,
                actual,
                seconds,
                partial,
                error: error.or_else(|| {
                    partial.then(|| format!("state budget of {} exceeded", options.max_states))
                }),
                diameter_matches: cell(|s| s.diameter),
                found_matches: cell(|s| s.states_found),
                distinct_matches: cell(|s| s.distinct_states),
                hard_cells: hard_cells(model, uses),
            });
        }
    }
    Ok(Table2Report {
        policy: policy_name,
        rows,
    })
}

/// Explores every candidate at the given model and use count and ranks
/// them by L1 distance to `target`. Ties keep candidate order.
pub fn sweep_policies(
    model: ModelKind,
    uses: usize,
    candidates: &[BuiltinPolicy],
    target: Stats,
    options: &ExploreOptions,
) -> SweepReport {
    let mut ranking: Vec<SweepEntry> = candidates
        .iter()
        .map(|p| {
            let outcome = SystemBuilder::generated(model, UseCounts::uses(uses))
                .policy_text(p.text.clone())
                .build()
                .map_err(|e| e.to_string())
                .and_then(|c| explore_stats(&c, options).map_err(|e| e.to_string()));
            match outcome {
                Ok((s, _, partial)) if !partial => SweepEntry {
                    policy: p.name.clone(),
                    stats: Some(s),
                    distance: Some(s.l1_distance(&target)),
                    exact: s == target,
                    error: None,
                },
                Ok(_) => SweepEntry {
                    policy: p.name.clone(),
                    stats: None,
                    distance: None,
                    exact: false,
                    error: Some(format!("state budget of {} exceeded", options.max_states)),
                },
                Err(e) => SweepEntry {
                    policy: p.name.clone(),
                    stats: None,
                    distance: None,
                    exact: false,
                    error: Some(e),
                },
            }
        })
        .collect();
    ranking.sort_by_key(|e| e.distance.unwrap_or(u64::MAX));
    SweepReport {
        model: model.as_str().to_string(),
        uses,
        target,
        ranking,
    }
}

fn sweep(args: &SweepArgs) -> Result<SweepReport, CliError> {
    let target = match args.target {
        Some(t) => t,
        None => published(args.model, args.uses).ok_or_else(|| {
            usage(format!(
                "no published row for {} with {} uses; give --target",
                args.model, args.uses
            ))
        })?,
    };
    let candidates = match &args.candidates {
        None => sweep_candidates(args.uses),
        Some(list) => list
            .split(',')
            .map(str::trim)
            .filter(|n| !n.is_empty())
            .map(|name| {
                builtin_policy(name)
                    .map(|text| BuiltinPolicy {
                        name: name.to_string(),
                        text,
                    })
                    .ok_or_else(|| usage(format!("unknown built-in policy '{name}'")))
            })
            .collect::<Result<_, _>>()?,
    };
    Ok(sweep_policies(
        args.model,
        args.uses,
        &candidates,
        target,
        &args.run.options(),
    ))
}

fn emit<W: Write>(
    out: &mut W,
    format: OutputFormat,
    text: String,
    json: String,
) -> std::io::Result<()> {
    match format {
        OutputFormat::Text => out.write_all(text.as_bytes()),
        OutputFormat::Json => writeln!(out, "{json}"),
    }
}

fn json<T: serde::Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("report serialises")
}

/// Parses `argv`, runs the command and writes its report. Returns the
/// process exit code.
pub fn main_with<I, T, W, E>(argv: I, out: &mut W, err: &mut E) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
    W: Write,
    E: Write,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = write!(err, "{}", e.render());
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let outcome = match &cli.command {
        Command::Check(args) => run(args).map(|r| {
            let code = r.exit_code;
            (
                emit(out, args.run.output, r.render_text(), r.to_json()),
                code,
            )
        }),
        Command::Table2(args) => reproduce_table2(args).map(|r| {
            let code = if r.rows.iter().any(|row| row.hard_failure()) {
                EXIT_VIOLATION
            } else {
                EXIT_OK
            };
            (emit(out, args.run.output, r.render_text(), json(&r)), code)
        }),
        Command::Sweep(args) => sweep(args).map(|r| {
            (
                emit(out, args.run.output, r.render_text(), json(&r)),
                EXIT_OK,
            )
        }),
    };
    match outcome {
        Ok((Ok(()), code)) => code,
        Ok((Err(e), _)) => {
            let _ = writeln!(err, "error: writing report: {e}");
            EXIT_USAGE
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}
