//! The `welfarium` command line: config loading, subcommand dispatch and
//! report writing.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

use crate::cellsys::History;
use crate::config::{ConfigError, Experiment, ExperimentConfig, OutputFormat, Overrides};
use crate::inference::{expected_utility, infer, StructureEvent};
use crate::oracle;
use crate::verify::{verify_random, Instance, InstanceBounds, VerifyReport};
use crate::welfare::{compare_histories, global_welfare_with, TruncationPolicy, WelfareOptions, CANONICAL_ORDER};

pub const EXIT_OK: u8 = 0;
pub const EXIT_CONFIG: u8 = 1;
pub const EXIT_RUNTIME: u8 = 2;
pub const EXIT_MISMATCH: u8 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "welfarium",
    version,
    about = "Infer preferences and global welfare in deterministic cellular worlds"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Dump the history from the initial state.
    Simulate(CommonArgs),
    /// Posterior over hypotheses for one structure event.
    Posterior {
        #[command(flatten)]
        common: CommonArgs,
        /// Cells of the observed space, e.g. `0,2`.
        #[arg(long, value_delimiter = ',')]
        space: Option<Vec<usize>>,
        /// Time step of the event.
        #[arg(long)]
        time: Option<usize>,
    },
    /// Global welfare of the initial history.
    Welfare(CommonArgs),
    /// Compare the welfare of two initial states.
    Compare(CommonArgs),
    /// List the resolved hypothesis set and its prior.
    EnumerateHypotheses(CommonArgs),
    /// Check the main path against the brute-force oracle.
    Verify(CommonArgs),
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Experiment config (TOML).
    #[arg(short, long, value_name = "PATH")]
    pub config: PathBuf,
    /// Report directory.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<OutputFormat>,
    #[arg(long, value_name = "F", allow_negative_numbers = true)]
    pub beta: Option<f64>,
    #[arg(long, value_name = "N")]
    pub horizon: Option<usize>,
    #[arg(long, value_name = "N")]
    pub threads: Option<usize>,
    #[arg(long, value_name = "N")]
    pub seed: Option<u64>,
    /// First initial state for `compare` (literal or named).
    #[arg(long)]
    pub state_a: Option<String>,
    /// Second initial state for `compare` (literal or named).
    #[arg(long)]
    pub state_b: Option<String>,
}

impl CommonArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            beta: self.beta,
            horizon: self.horizon,
            threads: self.threads,
            seed: self.seed,
            out: self.out.clone(),
            format: self.format,
            state_a: self.state_a.clone(),
            state_b: self.state_b.clone(),
            ..Default::default()
        }
    }
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Runtime(String),
    #[error("verification failed: {0} mismatches")]
    Mismatch(usize),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Runtime(_) => EXIT_RUNTIME,
            CliError::Mismatch(_) => EXIT_MISMATCH,
        }
    }
}

fn runtime(e: impl ToString) -> CliError {
    CliError::Runtime(e.to_string())
}

#[derive(Serialize)]
struct Generator {
    name: &'static str,
    version: &'static str,
}

/// Common wrapper for every report.
#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    generator: Generator,
    command: &'a str,
    canonical_order: &'static str,
    policy: &'a TruncationPolicy,
    result: T,
}

/// Parses `args` and runs the command, returning the process exit code.
/// Diagnostics go to stderr.
pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match execute(&cli.command) {
        Ok(paths) => {
            for p in paths {
                println!("{}", p.display());
            }
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

fn load(common: &CommonArgs, extra: impl FnOnce(&mut Overrides)) -> Result<Experiment, CliError> {
    let text = fs::read_to_string(&common.config)
        .map_err(|e| ConfigError::new("config", format!("{}: {e}", common.config.display())))?;
    let mut cfg = ExperimentConfig::from_toml(&text)?;
    let mut overrides = common.overrides();
    extra(&mut overrides);
    cfg.apply(&overrides);
    Ok(cfg.resolve()?)
}

fn options(ex: &Experiment) -> WelfareOptions {
    WelfareOptions {
        threads: ex.output.threads,
        top: ex.output.top,
    }
}

fn baseline(ex: &Experiment) -> Result<History, CliError> {
    ex.system
        .history(ex.initial.clone(), ex.policy.horizon)
        .map_err(runtime)
}

/// Runs one command and returns the report files written.
pub fn execute(command: &Command) -> Result<Vec<PathBuf>, CliError> {
    match command {
        Command::Simulate(c) => {
            let ex = load(c, |_| {})?;
            let h = baseline(&ex)?;
            let rows = h
                .states()
                .iter()
                .enumerate()
                .map(|(t, s)| vec![t.to_string(), s.to_string()]);
            #[derive(Serialize)]
            struct Sim<'a> {
                topology: crate::cellsys::Topology,
                states: &'a [crate::cellsys::WorldState],
            }
            let result = Sim {
                topology: ex.system.topology(),
                states: h.states(),
            };
            write_reports(&ex, "simulate", result, &["t", "state"], rows)
        }
        Command::Posterior { common, space, time } => {
            let ex = load(common, |o| {
                o.posterior_space = space.clone();
                o.posterior_time = *time;
            })?;
            let (space, time) = ex
                .posterior
                .clone()
                .ok_or_else(|| ConfigError::new("posterior", "no event given; set [posterior] or --space/--time"))?;
            let h = baseline(&ex)?;
            let event = StructureEvent::observed(&h, &space, time).map_err(runtime)?;
            let table =
                infer(&h, &event, &ex.policy.hypotheses, &ex.policy.model, &ex.policy.limits).map_err(runtime)?;
            let eu = expected_utility(&table, &h).map_err(runtime)?;
            let rows: Vec<Vec<String>> = table
                .rows
                .iter()
                .map(|r| {
                    vec![
                        r.hypothesis.to_string(),
                        num(r.prior),
                        num(r.likelihood),
                        num(r.posterior),
                    ]
                })
                .collect();
            #[derive(Serialize)]
            struct Post {
                table: crate::inference::PosteriorTable,
                expected_utility: f64,
            }
            write_reports(
                &ex,
                "posterior",
                Post {
                    table,
                    expected_utility: eu,
                },
                &["hypothesis", "prior", "likelihood", "posterior"],
                rows,
            )
        }
        Command::Welfare(c) => {
            let ex = load(c, |_| {})?;
            let h = baseline(&ex)?;
            let mut report = global_welfare_with(&h, &ex.policy, &options(&ex)).map_err(runtime)?;
            let rows: Vec<Vec<String>> = report
                .events
                .iter()
                .map(|e| vec![e.time.to_string(), e.space.to_string(), num(e.subtotal)])
                .collect();
            #[derive(Serialize)]
            struct Welfare {
                initial: crate::cellsys::WorldState,
                total: f64,
                per_step: Vec<f64>,
                per_space: Vec<crate::welfare::SpaceSubtotal>,
                events: Vec<crate::welfare::EventSubtotal>,
                top_contributors: Vec<crate::welfare::Contribution>,
            }
            let result = Welfare {
                initial: ex.initial.clone(),
                total: report.total,
                per_step: std::mem::take(&mut report.per_step),
                per_space: std::mem::take(&mut report.per_space),
                events: std::mem::take(&mut report.events),
                top_contributors: std::mem::take(&mut report.top_contributors),
            };
            write_reports(&ex, "welfare", result, &["i", "space", "subtotal"], rows)
        }
        Command::Compare(c) => {
            let ex = load(c, |_| {})?;
            let (a, b) = ex.compare.clone().ok_or_else(|| {
                ConfigError::new(
                    "compare",
                    "two states are required; set `compare` or --state-a/--state-b",
                )
            })?;
            let ha = ex.system.history(a.clone(), ex.policy.horizon).map_err(runtime)?;
            let hb = ex.system.history(b.clone(), ex.policy.horizon).map_err(runtime)?;
            let verdict = compare_histories(&ha, &hb, &ex.policy, &options(&ex)).map_err(runtime)?;
            let rows: Vec<Vec<String>> = verdict
                .partial_sums
                .iter()
                .enumerate()
                .map(|(i, d)| vec![i.to_string(), num(*d)])
                .collect();
            #[derive(Serialize)]
            struct Cmp {
                state_a: crate::cellsys::WorldState,
                state_b: crate::cellsys::WorldState,
                comparison: crate::welfare::ComparisonVerdict,
            }
            let result = Cmp {
                state_a: a,
                state_b: b,
                comparison: verdict,
            };
            write_reports(&ex, "compare", result, &["i", "difference"], rows)
        }
        Command::EnumerateHypotheses(c) => {
            let ex = load(c, |_| {})?;
            #[derive(Serialize)]
            struct Row {
                hypothesis: String,
                description_length: usize,
                prior: f64,
            }
            let list: Vec<Row> = ex
                .policy
                .hypotheses
                .iter()
                .map(|h| Row {
                    hypothesis: h.expr.to_string(),
                    description_length: h.expr.description_length(),
                    prior: h.prior,
                })
                .collect();
            let rows: Vec<Vec<String>> = list
                .iter()
                .map(|r| vec![r.hypothesis.clone(), r.description_length.to_string(), num(r.prior)])
                .collect();
            write_reports(
                &ex,
                "enumerate-hypotheses",
                list,
                &["hypothesis", "description_length", "prior"],
                rows,
            )
        }
        Command::Verify(c) => {
            let ex = load(c, |_| {})?;
            let h = baseline(&ex)?;
            oracle::check_caps(&h, &ex.policy).map_err(runtime)?;
            let mut report = VerifyReport::default();
            report.check(
                "config",
                &Instance {
                    history: h,
                    policy: ex.policy.clone(),
                },
            );
            let mut rng = ChaCha8Rng::seed_from_u64(ex.seed);
            verify_random(&mut rng, ex.verify_cases, &InstanceBounds::default(), &mut report);
            let rows = vec![
                vec!["cases".into(), report.cases.to_string()],
                vec!["events_checked".into(), report.events_checked.to_string()],
                vec![
                    "posterior_rows_checked".into(),
                    report.posterior_rows_checked.to_string(),
                ],
                vec!["max_posterior_diff".into(), num(report.max_posterior_diff)],
                vec!["max_welfare_diff".into(), num(report.max_welfare_diff)],
                vec!["failures".into(), report.failures.len().to_string()],
            ];
            let failures = report.failures.len();
            let passed = report.passed;
            for f in &report.failures {
                eprintln!("mismatch: {f}");
            }
            let paths = write_reports(&ex, "verify", report, &["metric", "value"], rows)?;
            if passed {
                Ok(paths)
            } else {
                Err(CliError::Mismatch(failures))
            }
        }
    }
}

/// Shortest round-trip text, matching the JSON reports.
fn num(x: f64) -> String {
    serde_json::to_string(&x).unwrap_or_else(|_| x.to_string())
}

fn write_reports<T: Serialize>(
    ex: &Experiment,
    command: &str,
    result: T,
    header: &[&str],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> Result<Vec<PathBuf>, CliError> {
    let dir = &ex.output.dir;
    fs::create_dir_all(dir).map_err(|e| runtime(format!("{}: {e}", dir.display())))?;
    let mut written = Vec::new();
    if ex.output.format.json() {
        let envelope = Envelope {
            generator: Generator {
                name: env!("CARGO_PKG_NAME"),
                version: env!("CARGO_PKG_VERSION"),
            },
            command,
            canonical_order: CANONICAL_ORDER,
            policy: &ex.policy,
            result,
        };
        let mut text = serde_json::to_string_pretty(&envelope).map_err(runtime)?;
        text.push('\n');
        written.push(write_file(dir, &format!("{command}.json"), text.as_bytes())?);
    }
    if ex.output.format.csv() {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header).map_err(runtime)?;
        for r in rows {
            w.write_record(&r).map_err(runtime)?;
        }
        let bytes = w.into_inner().map_err(runtime)?;
        written.push(write_file(dir, &format!("{command}.csv"), &bytes)?);
    }
    Ok(written)
}

fn write_file(dir: &Path, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
    let path = dir.join(name);
    fs::write(&path, bytes).map_err(|e| runtime(format!("{}: {e}", path.display())))?;
    Ok(path)
}
