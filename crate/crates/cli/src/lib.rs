//! Command implementations behind the `tsad` binary.

pub mod service;

use std::fmt::Write as _;
use std::path::PathBuf;
use std::sync::mpsc::channel;
use std::time::Duration;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use tsad_core::active::{HumanChannelOracle, ServiceEvent};
use tsad_core::config::{OracleMode, RunConfig};
use tsad_core::pipeline::{run_evaluation, run_training, RunReport, ValidationSummary};
use tsad_core::Error;

#[derive(Debug, Parser)]
#[command(name = "tsad", version, about = "Reward-shaped DQN anomaly detection for time series")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train the detector and write checkpoints, log, curves and report.
    Train(TrainArgs),
    /// Score a saved Q-network on the validation split.
    Evaluate(EvaluateArgs),
    /// Train with a human oracle behind the HTTP labeling service.
    ServeLabels(ServeArgs),
    /// One training run per grid point, summarized as a table.
    Sweep(SweepArgs),
}

/// Options shared by every command. Precedence: flags, then `--set`, then
/// the config file, then built-in defaults.
#[derive(Debug, Clone, Default, Args)]
pub struct ConfigArgs {
    /// TOML configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// `section.key=value` override; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub episodes: Option<usize>,
    #[arg(long)]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub query_rate: Option<f64>,
}

impl ConfigArgs {
    pub fn resolve(&self) -> tsad_core::Result<RunConfig> {
        let mut config = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        for o in &self.overrides {
            config.set(o)?;
        }
        if let Some(p) = &self.dataset {
            config.data.path = Some(p.clone());
        }
        if let Some(s) = self.seed {
            config.run.seed = s;
        }
        if let Some(n) = self.episodes {
            config.run.episodes = n;
        }
        if let Some(o) = &self.output {
            config.run.output_dir = o.clone();
        }
        if let Some(q) = self.query_rate {
            config.active.query_rate = q;
        }
        config.validate()?;
        Ok(config)
    }
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Suppress per-episode progress lines.
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Debug, Clone, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    #[arg(long)]
    pub checkpoint: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct ServeArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    #[arg(long, default_value_t = 8080)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
    /// Directory with UI assets; a built-in page is served otherwise.
    #[arg(long)]
    pub static_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Query rates to try, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub query_rates: Vec<f64>,
    /// Initial λ values to try, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub lambda0: Vec<f64>,
    /// Controller gains to try, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub alpha: Vec<f64>,
}

pub fn run(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Train(a) => {
            let report = cmd_train(&a)?;
            println!("{}", serde_json::to_string_pretty(&report.validation)?);
        }
        Command::Evaluate(a) => {
            let summary = cmd_evaluate(&a)?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
        }
        Command::ServeLabels(a) => cmd_serve_labels(&a)?,
        Command::Sweep(a) => {
            let rows = cmd_sweep(&a)?;
            print!("{}", format_table(&rows));
        }
    }
    Ok(())
}

/// Prints an error as one JSON line on stderr and picks an exit code.
pub fn report_error(err: &anyhow::Error) -> i32 {
    let kind = err.downcast_ref::<Error>().map_or("error", Error::kind);
    let line = serde_json::json!({ "error": kind, "message": format!("{err:#}") });
    eprintln!("{line}");
    match kind {
        "argument" | "config" => 2,
        _ => 1,
    }
}

pub fn cmd_train(args: &TrainArgs) -> anyhow::Result<RunReport> {
    let config = args.config.resolve()?;
    let quiet = args.quiet;
    let outcome = run_training(&config, None, |r| {
        if !quiet {
            eprintln!(
                "episode {:>4}  reward {:>10.3}  lambda {:.4}  loss {:.5}  eps {:.3}  queries {}",
                r.episode, r.reward, r.lambda, r.mean_loss, r.epsilon, r.queries_spent
            );
        }
    })?;
    Ok(outcome.report)
}

pub fn cmd_evaluate(args: &EvaluateArgs) -> anyhow::Result<ValidationSummary> {
    let config = args.config.resolve()?;
    Ok(run_evaluation(&config, &args.checkpoint)?)
}

pub fn cmd_serve_labels(args: &ServeArgs) -> anyhow::Result<()> {
    let mut config = args.config.resolve()?;
    config.active.oracle = OracleMode::Human;
    let runtime = tokio::runtime::Runtime::new()?;
    let listener = runtime
        .block_on(tokio::net::TcpListener::bind((args.host.as_str(), args.port)))
        .with_context(|| format!("cannot listen on {}:{}", args.host, args.port))?;
    let (event_tx, event_rx) = channel::<ServiceEvent>();
    let (label_tx, label_rx) = channel();
    let service = service::LabelService::new(label_tx, args.static_dir.clone());
    service.pump(event_rx);
    let timeout = Duration::from_secs_f64(config.active.label_timeout_secs);
    let trainer = std::thread::spawn(move || {
        let oracle = HumanChannelOracle::new(event_tx.clone(), label_rx, timeout);
        let result = run_training(&config, Some(Box::new(oracle)), |r| {
            eprintln!("episode {:>4}  reward {:>10.3}  lambda {:.4}  queries {}", r.episode, r.reward, r.lambda, r.queries_spent);
        });
        let _ = event_tx.send(ServiceEvent::Finished);
        match result {
            Ok(outcome) => eprintln!("training finished; artifacts in {}", outcome.run_dir.display()),
            Err(e) => eprintln!("{}", serde_json::json!({ "error": e.kind(), "message": e.to_string() })),
        }
    });
    eprintln!("labeling service on http://{}", listener.local_addr()?);
    runtime.block_on(async {
        axum::serve(listener, service.router())
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
    })?;
    drop(trainer);
    Ok(())
}

/// One row of a sweep table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub setting: String,
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
}

pub fn cmd_sweep(args: &SweepArgs) -> anyhow::Result<Vec<SweepRow>> {
    if args.query_rates.is_empty() && args.lambda0.is_empty() && args.alpha.is_empty() {
        return Err(Error::Argument("sweep grid is empty".into()).into());
    }
    let base = args.config.resolve()?;
    let rates = axis(&args.query_rates, base.active.query_rate);
    let lambdas = axis(&args.lambda0, base.reward.lambda0);
    let alphas = axis(&args.alpha, base.reward.alpha);
    let mut rows = Vec::new();
    for &rate in &rates {
        for &lambda0 in &lambdas {
            for &alpha in &alphas {
                let mut config = base.clone();
                config.active.query_rate = rate;
                config.reward.lambda0 = lambda0;
                config.reward.alpha = alpha;
                let setting = format!("query_rate={rate} lambda0={lambda0} alpha={alpha}");
                config.run.output_dir = base.run.output_dir.join(format!("sweep-{}", rows.len()));
                config.validate()?;
                let outcome = run_training(&config, None, |_| {})?;
                let v = outcome
                    .report
                    .validation
                    .ok_or_else(|| Error::Data("sweep needs a labeled validation split".into()))?;
                rows.push(SweepRow {
                    setting,
                    f1: v.f1,
                    precision: v.precision,
                    recall: v.recall,
                });
            }
        }
    }
    let path = base.run.output_dir.join("sweep.csv");
    std::fs::create_dir_all(&base.run.output_dir)?;
    let mut csv = String::from("setting,f1,precision,recall\n");
    for r in &rows {
        writeln!(csv, "\"{}\",{:.6},{:.6},{:.6}", r.setting, r.f1, r.precision, r.recall)?;
    }
    std::fs::write(&path, csv).with_context(|| format!("writing {}", path.display()))?;
    Ok(rows)
}

fn axis(values: &[f64], default: f64) -> Vec<f64> {
    if values.is_empty() {
        vec![default]
    } else {
        values.to_vec()
    }
}

pub fn format_table(rows: &[SweepRow]) -> String {
    let width = rows.iter().map(|r| r.setting.len()).max().unwrap_or(7).max(7);
    let mut out = format!("{:<width$}  {:>8}  {:>9}  {:>6}\n", "setting", "F1-score", "Precision", "Recall");
    for r in rows {
        let _ = writeln!(out, "{:<width$}  {:>8.3}  {:>9.3}  {:>6.3}", r.setting, r.f1, r.precision, r.recall);
    }
    out
}
