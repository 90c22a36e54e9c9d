//! The `tempamb` command line: classify, evaluate, stats, efficiency, cache.
//!
//! Data goes to files or standard output; progress and warnings go to
//! standard error through `log`. Exit codes: 0 success, 1 configuration or
//! I/O error, 2 finished with per-question failures.

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::json;
use thiserror::Error;

use crate::dataset::{self, ColumnMap, DatasetFormat};
use crate::detection::EquivalenceMode;
use crate::domain::{Label, StrategySpec, TimeRange};
use crate::evaluation::{efficiency_monte_carlo, score, ChangeDistribution, EfficiencyEntry, MetricsReport};
use crate::oracle::{OracleKind, ResponseCache};
use crate::search::{Prediction, UnparseablePolicy};

mod classify;
mod config;

pub use classify::{cmd_classify, ClassifySummary};
pub use config::{Header, HeaderLine, RunConfig, TOOL, VERSION};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Io(String),
}

#[derive(Debug, Parser)]
#[command(name = "tempamb", version, about = "Detect temporally ambiguous questions")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
#[allow(clippy::large_enum_variant)]
pub enum Command {
    /// Classify every question of a dataset and write JSONL outcomes.
    Classify(ClassifyArgs),
    /// Score an outcome file against gold labels.
    Evaluate(EvaluateArgs),
    /// Print dataset statistics.
    Stats(StatsArgs),
    /// Best, worst and simulated average comparison counts per strategy.
    Efficiency(EfficiencyArgs),
    /// Inspect or clear a response cache file.
    Cache {
        #[command(subcommand)]
        action: CacheAction,
    },
}

#[derive(Debug, Args, Default)]
pub struct ClassifyArgs {
    /// JSON RunConfig file; flags override its fields.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub format: Option<DatasetFormat>,
    /// Column override as field=column, e.g. question=text. Repeatable.
    #[arg(long = "column", value_parser = parse_key_value)]
    pub columns: Vec<(String, String)>,
    /// linear, skip:<s>, random:<k>[:seed=<n>], dac, dac:half-ltr, dac:half-rtl,
    /// zero-shot, few-shot[:file=<path>]
    #[arg(long)]
    pub strategy: Option<StrategySpec>,
    #[arg(long, value_parser = parse_oracle_kind)]
    pub oracle: Option<OracleKind>,
    /// Synthetic world JSON file.
    #[arg(long)]
    pub world: Option<PathBuf>,
    #[arg(long)]
    pub endpoint_url: Option<String>,
    #[arg(long)]
    pub model: Option<String>,
    /// Name of the environment variable holding the API key.
    #[arg(long)]
    pub api_key_env: Option<String>,
    #[arg(long)]
    pub temperature: Option<f64>,
    #[arg(long)]
    pub max_tokens: Option<u32>,
    #[arg(long)]
    pub timeout_secs: Option<u64>,
    #[arg(long)]
    pub max_retries: Option<u32>,
    /// Requests per second against the endpoint.
    #[arg(long)]
    pub rate_limit: Option<u32>,
    /// direct-prompt or answer-then-compare
    #[arg(long, value_parser = parse_mode)]
    pub mode: Option<EquivalenceMode>,
    #[arg(long)]
    pub equivalence_template: Option<PathBuf>,
    /// same or fail
    #[arg(long, value_parser = parse_policy)]
    pub unparseable: Option<UnparseablePolicy>,
    #[arg(long)]
    pub baseline_unparseable: Option<Label>,
    /// Year range override, e.g. 2000:2024.
    #[arg(long)]
    pub range: Option<TimeRange>,
    #[arg(long)]
    pub cache: Option<PathBuf>,
    #[arg(long)]
    pub concurrency: Option<usize>,
    #[arg(long)]
    pub fan_out: Option<usize>,
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub pred: PathBuf,
    #[arg(long)]
    pub gold: PathBuf,
    #[arg(long)]
    pub format: Option<DatasetFormat>,
    #[arg(long = "column", value_parser = parse_key_value)]
    pub columns: Vec<(String, String)>,
    /// Print JSON instead of a table.
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct StatsArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    #[arg(long)]
    pub format: Option<DatasetFormat>,
    #[arg(long = "column", value_parser = parse_key_value)]
    pub columns: Vec<(String, String)>,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Args)]
pub struct EfficiencyArgs {
    #[arg(long, default_value = "2000:2024")]
    pub range: TimeRange,
    /// Comma-separated search strategies.
    #[arg(
        long,
        default_value = "linear,skip:2,skip:5,skip:10,random:5,dac,dac:half-ltr,dac:half-rtl"
    )]
    pub strategies: String,
    #[arg(long, default_value_t = 10_000)]
    pub worlds: usize,
    #[arg(long, default_value_t = 7)]
    pub seed: u64,
    /// uniform, none or mixture:<p>
    #[arg(long, default_value = "uniform")]
    pub distribution: String,
    /// Also write the rows as CSV.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[arg(long)]
    pub json: bool,
}

#[derive(Debug, Subcommand)]
pub enum CacheAction {
    /// Record counts per oracle fingerprint.
    Inspect {
        #[arg(long)]
        path: PathBuf,
    },
    /// Delete the cache file.
    Clear {
        #[arg(long)]
        path: PathBuf,
    },
}

fn parse_key_value(s: &str) -> Result<(String, String), String> {
    s.split_once('=')
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .ok_or_else(|| format!("expected field=column, got {s:?}"))
}

fn parse_enum<T: serde::de::DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|e| e.to_string())
}

fn parse_oracle_kind(s: &str) -> Result<OracleKind, String> {
    parse_enum(s)
}

fn parse_mode(s: &str) -> Result<EquivalenceMode, String> {
    parse_enum(s)
}

fn parse_policy(s: &str) -> Result<UnparseablePolicy, String> {
    parse_enum(s)
}

impl ClassifyArgs {
    /// Config file (if any) with every given flag applied on top.
    pub fn to_config(&self) -> Result<RunConfig, CliError> {
        let mut c = match &self.config {
            Some(p) => RunConfig::from_json_file(p)?,
            None => RunConfig::default(),
        };
        macro_rules! set {
            ($flag:expr => $field:expr) => {
                if let Some(v) = &$flag {
                    $field = v.clone().into();
                }
            };
        }
        set!(self.dataset => c.dataset);
        set!(self.format => c.format);
        set!(self.strategy => c.strategy);
        set!(self.oracle => c.oracle.kind);
        set!(self.world => c.oracle.world);
        set!(self.endpoint_url => c.oracle.endpoint_url);
        set!(self.model => c.oracle.model_name);
        set!(self.api_key_env => c.oracle.api_key_env_var);
        set!(self.temperature => c.oracle.temperature);
        set!(self.max_tokens => c.oracle.max_output_tokens);
        set!(self.timeout_secs => c.oracle.request_timeout_secs);
        set!(self.max_retries => c.oracle.max_retries);
        set!(self.rate_limit => c.oracle.rate_limit);
        set!(self.mode => c.equivalence_mode);
        set!(self.equivalence_template => c.equivalence_template);
        set!(self.unparseable => c.unparseable_policy);
        set!(self.baseline_unparseable => c.baseline_unparseable_label);
        set!(self.range => c.range);
        set!(self.cache => c.cache);
        set!(self.concurrency => c.concurrency);
        set!(self.fan_out => c.probe_fan_out);
        set!(self.output => c.output);
        set!(self.seed => c.seed);
        for (k, v) in &self.columns {
            c.column_map.insert(k.clone(), v.clone());
        }
        Ok(c)
    }
}

fn column_map(pairs: &[(String, String)]) -> Result<ColumnMap, CliError> {
    let overrides: BTreeMap<String, String> = pairs.iter().cloned().collect();
    ColumnMap::from_overrides(&overrides).map_err(|e| CliError::Config(e.to_string()))
}

/// Outcome rows of a classify output file, plus its header if present.
pub fn read_predictions(path: &Path) -> Result<(Option<Header>, Vec<Prediction>), CliError> {
    let file = std::fs::File::open(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    let mut header = None;
    let mut rows = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Value = serde_json::from_str(&line)
            .map_err(|e| CliError::Config(format!("{}: line {}: {e}", path.display(), i + 1)))?;
        if value.get("header").is_some() {
            let h: HeaderLine = serde_json::from_value(value)
                .map_err(|e| CliError::Config(format!("{}: line {}: {e}", path.display(), i + 1)))?;
            header.get_or_insert(h.header);
            continue;
        }
        rows.push(
            serde_json::from_value(value)
                .map_err(|e| CliError::Config(format!("{}: line {}: {e}", path.display(), i + 1)))?,
        );
    }
    Ok((header, rows))
}

#[derive(Debug, Clone, Serialize)]
pub struct EvaluateReport {
    pub tool: &'static str,
    pub version: &'static str,
    pub pred: PathBuf,
    pub gold: PathBuf,
    pub config: Option<RunConfig>,
    pub metrics: MetricsReport,
}

pub fn cmd_evaluate(args: &EvaluateArgs) -> Result<EvaluateReport, CliError> {
    let (header, preds) = read_predictions(&args.pred)?;
    let gold = dataset::load(&args.gold, args.format, &column_map(&args.columns)?)
        .map_err(|e| CliError::Config(e.to_string()))?;
    let mut metrics = score(&preds, &gold).map_err(|e| CliError::Config(e.to_string()))?;
    if let Some(h) = &header {
        if h.config.strategy.is_search() {
            metrics.equivalence_mode = Some(h.config.equivalence_mode);
            metrics.unparseable_policy = Some(h.config.unparseable_policy);
        }
    }
    Ok(EvaluateReport {
        tool: TOOL,
        version: VERSION,
        pred: args.pred.clone(),
        gold: args.gold.clone(),
        config: header.map(|h| h.config),
        metrics,
    })
}

pub fn cmd_stats(args: &StatsArgs) -> Result<(dataset::DatasetStats, String), CliError> {
    let ds = dataset::load(&args.dataset, args.format, &column_map(&args.columns)?)
        .map_err(|e| CliError::Config(e.to_string()))?;
    let stats = dataset::stats(&ds).map_err(|e| CliError::Config(e.to_string()))?;
    let table = format!("dataset    {}\n{}", args.dataset.display(), stats.to_table());
    Ok((stats, table))
}

pub fn cmd_efficiency(args: &EfficiencyArgs) -> Result<Vec<EfficiencyEntry>, CliError> {
    let dist: ChangeDistribution = args
        .distribution
        .parse()
        .map_err(|e: crate::evaluation::EfficiencyError| CliError::Config(e.to_string()))?;
    args.strategies
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| {
            let spec: StrategySpec = s
                .parse()
                .map_err(|e: crate::domain::DomainError| CliError::Config(e.to_string()))?;
            efficiency_monte_carlo(&args.range, &spec, args.worlds, dist, args.seed)
                .map_err(|e| CliError::Config(format!("{spec}: {e}")))
        })
        .collect()
}

pub fn efficiency_table(args: &EfficiencyArgs, entries: &[EfficiencyEntry]) -> String {
    let mut out = format!(
        "# {TOOL} {VERSION} efficiency model: range={} distribution={} worlds={} seed={}\n",
        args.range, args.distribution, args.worlds, args.seed
    );
    out.push_str(&format!(
        "{:<14} {:>5} {:>6} {:>8} {:>7} {:>5} {:>5}\n",
        "strategy", "best", "worst", "mean", "std", "min", "max"
    ));
    for e in entries {
        out.push_str(&format!(
            "{:<14} {:>5} {:>6} {:>8.3} {:>7.3} {:>5} {:>5}\n",
            e.strategy.to_string(),
            e.best_case,
            e.worst_case,
            e.mean,
            e.std,
            e.min_observed,
            e.max_observed
        ));
    }
    out
}

pub fn write_efficiency_csv(path: &Path, entries: &[EfficiencyEntry]) -> Result<(), CliError> {
    let io = |e: csv::Error| CliError::Io(format!("{}: {e}", path.display()));
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    w.write_record([
        "tool_version",
        "strategy",
        "range",
        "distribution",
        "n_worlds",
        "seed",
        "best_case",
        "worst_case",
        "mean",
        "std",
        "min_observed",
        "max_observed",
    ])
    .map_err(io)?;
    for e in entries {
        w.write_record([
            VERSION.to_string(),
            e.strategy.to_string(),
            e.range.to_string(),
            e.distribution.clone(),
            e.n_worlds.to_string(),
            e.seed.to_string(),
            e.best_case.to_string(),
            e.worst_case.to_string(),
            e.mean.to_string(),
            e.std.to_string(),
            e.min_observed.to_string(),
            e.max_observed.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| CliError::Io(e.to_string()))
}

pub fn cmd_cache(action: &CacheAction) -> Result<String, CliError> {
    match action {
        CacheAction::Inspect { path } => {
            if !path.exists() {
                return Err(CliError::Config(format!("{}: no such cache file", path.display())));
            }
            let cache = ResponseCache::open(path).map_err(|e| CliError::Io(e.to_string()))?;
            let mut out = format!("{}: {} records\n", path.display(), cache.len());
            for (fp, n) in cache.fingerprint_counts() {
                out.push_str(&format!("{n:>8}  {fp}\n"));
            }
            Ok(out)
        }
        CacheAction::Clear { path } => match std::fs::remove_file(path) {
            Ok(()) => Ok(format!("removed {}\n", path.display())),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(format!("{} does not exist\n", path.display())),
            Err(e) => Err(CliError::Io(format!("{}: {e}", path.display()))),
        },
    }
}

fn to_json<T: Serialize>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("report types serialize") + "\n"
}

/// Runs one parsed command, printing its report to standard output.
pub fn run(cli: Cli) -> Result<ExitCode, CliError> {
    match cli.command {
        Command::Classify(args) => {
            let cfg = args.to_config()?;
            let s = cmd_classify(&cfg)?;
            log::info!(
                "done: {} written, {} resumed, {} failed of {}",
                s.written,
                s.resumed,
                s.failed,
                s.total
            );
            Ok(if s.failed > 0 {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            })
        }
        Command::Evaluate(args) => {
            let report = cmd_evaluate(&args)?;
            for w in &report.metrics.warnings {
                log::warn!("{w}");
            }
            if args.json {
                print!("{}", to_json(&report));
            } else {
                print!("{}", report.metrics.to_table());
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Stats(args) => {
            let (stats, table) = cmd_stats(&args)?;
            if args.json {
                print!(
                    "{}",
                    to_json(&json!({"tool": TOOL, "version": VERSION, "dataset": args.dataset, "stats": stats}))
                );
            } else {
                print!("{table}");
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Efficiency(args) => {
            let entries = cmd_efficiency(&args)?;
            if let Some(p) = &args.csv {
                write_efficiency_csv(p, &entries)?;
            }
            if args.json {
                print!(
                    "{}",
                    to_json(&json!({"tool": TOOL, "version": VERSION, "model": "monte-carlo", "entries": entries}))
                );
            } else {
                print!("{}", efficiency_table(&args, &entries));
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Cache { action } => {
            print!("{}", cmd_cache(&action)?);
            Ok(ExitCode::SUCCESS)
        }
    }
}
