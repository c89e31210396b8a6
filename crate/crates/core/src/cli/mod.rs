//! Command-line front end. Flags override config-file values.

pub mod pipeline;

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::detectors::{run_detector, DetectorParams, Method};
use crate::error::{Error, Result};
use crate::inject::{inject_imposter, InjectConfig};
use crate::io;
use crate::llm::client::{LlmClient, LlmEndpointConfig, Provider};
use crate::llm::prompt::{PromptMode, TemplateVersion};
use crate::llm::{dump_prompts, oracle_client, run_llm_detection};
use crate::model::LabelSet;
use crate::scores::ScoreTable;
use crate::simulator::{simulate, SimConfig};

pub use pipeline::{run_pipeline, Manifest, RunConfig, RunOutcome};

#[derive(Debug, Parser)]
#[command(name = "trajbench", version, about = "Anomaly detection benchmark for semantic mobility trajectories")]
pub struct Cli {
    /// Seed for every seeded stage; overrides config values.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Config file (TOML). Its schema depends on the subcommand.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory; overrides the config value.
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    /// Log to stderr as line-delimited JSON.
    #[arg(long, global = true)]
    pub log_json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate agents; `--config` is a simulator config.
    Simulate,
    /// Turn raw GPS logs into a stay-point dataset.
    Ingest(IngestArgs),
    /// Swap trajectory tails between random agent pairs.
    Inject(InjectArgs),
    /// Score agents with one detector.
    Detect(DetectArgs),
    /// Compute ranking metrics for score tables.
    Eval(EvalArgs),
    /// Write every LLM prompt to disk without calling an endpoint.
    DumpPrompts(DumpArgs),
    /// Run the configured pipeline; `--config` is a run config.
    Run,
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    /// Directory of per-agent plt folders, or one CSV file.
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, default_value = "plt")]
    pub format: String,
    #[arg(long, default_value_t = 200.0)]
    pub dist_threshold_m: f64,
    #[arg(long, default_value_t = 1200)]
    pub time_threshold_s: i64,
    #[arg(long, default_value_t = 50)]
    pub min_records: usize,
    #[arg(long)]
    pub poi_map: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InjectArgs {
    /// Dataset file (dataset.jsonl).
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, default_value_t = 12)]
    pub pairs: usize,
    #[arg(long, default_value_t = 0.8)]
    pub switch_fraction: f64,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    /// ompad|monav|traod|dae|dsvdd|llm
    #[arg(long)]
    pub method: String,
    /// Directory holding dataset.jsonl and, optionally, labels.jsonl.
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Detector parameters (TOML).
    #[arg(long)]
    pub params: Option<PathBuf>,
    #[arg(long, default_value = "scores.jsonl")]
    pub out: PathBuf,
    /// Prompt mode for `--method llm`.
    #[arg(long, default_value = "separate")]
    pub mode: String,
    /// Endpoint config (TOML) for `--method llm`.
    #[arg(long)]
    pub endpoint: Option<PathBuf>,
    #[arg(long, default_value = "paper-v1")]
    pub template: String,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    /// Score files or glob patterns; repeatable.
    #[arg(long, required = true, num_args = 1..)]
    pub scores: Vec<String>,
    #[arg(long)]
    pub labels: PathBuf,
    #[arg(long, default_value = "10,25,100", value_delimiter = ',')]
    pub top_k: Vec<usize>,
    #[arg(long, default_value = "report.csv")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DumpArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, default_value = "separate")]
    pub mode: String,
    #[arg(long, default_value = "paper-v1")]
    pub template: String,
    #[arg(long, default_value_t = 200_000)]
    pub char_budget: usize,
}

/// Initializes stderr logging; `RUST_LOG` picks the level (default info).
pub fn init_logging(json: bool) {
    let mut b = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"));
    if json {
        b.format(|buf, rec| {
            let line = serde_json::json!({
                "ts": chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true),
                "level": rec.level().as_str(),
                "target": rec.target(),
                "msg": rec.args().to_string(),
            });
            writeln!(buf, "{line}")
        });
    }
    let _ = b.try_init();
}

fn out_dir(cli: &Cli) -> PathBuf {
    cli.out_dir.clone().unwrap_or_else(|| PathBuf::from("."))
}

fn read_config<T>(path: Option<&Path>, parse: impl Fn(&str) -> Result<T>) -> Result<Option<T>> {
    path.map(|p| parse(&io::read_to_string(p)?)).transpose()
}

/// Dataset and optional labels from a directory.
fn load_dir(dir: &Path) -> Result<(crate::model::Dataset, LabelSet)> {
    let ds = io::read_dataset(&dir.join("dataset.jsonl"))?;
    let lp = dir.join("labels.jsonl");
    let labels = if lp.exists() { io::read_labels(&lp)? } else { LabelSet::default() };
    Ok((ds, labels))
}

fn expand_scores(patterns: &[String]) -> Result<Vec<PathBuf>> {
    let mut paths = Vec::new();
    for pat in patterns {
        let matches = glob::glob(pat).map_err(|e| Error::Config(format!("bad glob {pat:?}: {e}")))?;
        let mut found: Vec<PathBuf> = matches.filter_map(|m| m.ok()).collect();
        if found.is_empty() {
            return Err(Error::Config(format!("no score files match {pat:?}")));
        }
        found.sort();
        paths.extend(found);
    }
    paths.dedup();
    Ok(paths)
}

/// Runs one parsed command. Text meant for the user goes to `stdout`.
pub fn execute(cli: &Cli, stdout: &mut dyn Write) -> Result<()> {
    let write_err = |e: std::io::Error| Error::io("<stdout>", e);
    match &cli.command {
        Command::Simulate => {
            let mut cfg = read_config(cli.config.as_deref(), SimConfig::from_toml)?.unwrap_or_default();
            if let Some(s) = cli.seed {
                cfg.seed = s;
            }
            let out = simulate(&cfg)?;
            let dir = out_dir(cli);
            io::write_dataset(&dir.join("dataset.jsonl"), &out.dataset)?;
            io::write_labels(&dir.join("labels.jsonl"), &out.labels)?;
            log::info!("simulated {} agents, {} outliers", out.dataset.trajectories.len(), out.labels.n_outliers());
        }
        Command::Ingest(a) => {
            let sec = pipeline::IngestSection {
                input: a.input.clone(),
                format: a.format.clone(),
                dist_threshold_m: a.dist_threshold_m,
                time_threshold_s: a.time_threshold_s,
                min_records: a.min_records,
                poi_map: a.poi_map.clone(),
            };
            let ds = crate::ingest::ingest_path(&a.input, &sec.options()?)?;
            io::write_dataset(&out_dir(cli).join("dataset.jsonl"), &ds)?;
        }
        Command::Inject(a) => {
            let ds = io::read_dataset(&a.input)?;
            let cfg = InjectConfig { n_outlier_pairs: a.pairs, switch_fraction: a.switch_fraction, seed: cli.seed.unwrap_or(0) };
            let (out, labels) = inject_imposter(&ds, &cfg)?;
            let dir = out_dir(cli);
            io::write_dataset(&dir.join("dataset.jsonl"), &out)?;
            io::write_labels(&dir.join("labels.jsonl"), &labels)?;
        }
        Command::Detect(a) => {
            let (ds, labels) = load_dir(&a.input)?;
            let table = if a.method == "llm" {
                let mode: PromptMode = a.mode.parse()?;
                let version: TemplateVersion = a.template.parse()?;
                let endpoint = read_config(a.endpoint.as_deref(), LlmEndpointConfig::from_toml)?
                    .ok_or_else(|| Error::Config("--method llm needs --endpoint".into()))?;
                let client = if endpoint.provider == Provider::OracleMock {
                    oracle_client(endpoint, &ds, &labels, mode, version)?
                } else {
                    LlmClient::from_config(endpoint)?
                };
                let run = run_llm_detection(&ds, &labels, mode, version, &client)?;
                log::info!("{} network calls", client.network_calls());
                run.table
            } else {
                let method: Method = a.method.parse()?;
                let mut params = read_config(a.params.as_deref(), DetectorParams::from_toml)?.unwrap_or_default();
                if let Some(s) = cli.seed {
                    params.traod.seed = s;
                    params.nn.seed = s;
                }
                run_detector(method, &ds, &labels, &params)?
            };
            table.write(&a.out)?;
        }
        Command::Eval(a) => {
            if !a.labels.exists() {
                return Err(Error::Config(format!("labels file {} does not exist", a.labels.display())));
            }
            let labels = io::read_labels(&a.labels)?;
            let tables = expand_scores(&a.scores)?.iter().map(|p| ScoreTable::read(p)).collect::<Result<Vec<_>>>()?;
            let report = crate::eval::make_report(&tables, &labels, &a.top_k)?;
            io::write_file(&a.out, report.render_csv().as_bytes())?;
            stdout.write_all(report.render_text().as_bytes()).map_err(write_err)?;
        }
        Command::DumpPrompts(a) => {
            let (ds, labels) = load_dir(&a.input)?;
            let n = dump_prompts(&ds, &labels, a.mode.parse()?, a.template.parse()?, a.char_budget, &out_dir(cli))?;
            writeln!(stdout, "wrote {n} prompts").map_err(write_err)?;
        }
        Command::Run => {
            let path = cli.config.as_deref().ok_or_else(|| Error::Config("run needs --config".into()))?;
            let mut cfg = RunConfig::from_toml(&io::read_to_string(path)?)?;
            if cli.seed.is_some() {
                cfg.seed = cli.seed;
            }
            let dir = cli.out_dir.clone().or_else(|| cfg.out_dir.clone()).unwrap_or_else(|| PathBuf::from("."));
            let out = run_pipeline(&cfg, &dir)?;
            if let Some(text) = out.report_text {
                stdout.write_all(text.as_bytes()).map_err(write_err)?;
            }
        }
    }
    Ok(())
}

/// Exit status for an error: 2 for configuration problems, 1 otherwise.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) => 2,
        Error::Stage { source, .. } => exit_code(source),
        _ => 1,
    }
}

/// Parses `args`, runs the command and returns the process exit status.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    init_logging(cli.log_json);
    match execute(&cli, &mut std::io::stdout().lock()) {
        Ok(()) => 0,
        Err(e) => {
            log::error!("{e}");
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
