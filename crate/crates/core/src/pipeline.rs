//! End-to-end run: build the VAE, warm up, train the agent with active
//! learning, validate, and write every artifact of the run.

use std::fs::File;
use std::io::{BufWriter, Write as _};
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::active::{budget_for, ActiveLearner, LabelOracle, LabelPool, SimilarityGraph, SimulatedOracle};
use crate::agent::{fit_isolation_forest, top_outliers, train, warm_up, DqnAgent, EpisodeRecord, ReplayMemory, TrainSettings, WarmUpReport};
use crate::config::{OracleMode, RunConfig, Seeds};
use crate::env::Environment;
use crate::error::{Error, Result};
use crate::metrics::{validate, validation_episodes, Validation};
use crate::nn::ModelFile;
use crate::reward::{check_lambda_trend, emit_curves, LambdaController, TrendCheck};
use crate::timeseries::{generate_synthetic, load_series, make_windows, Scaling, SeriesPoint, WindowDataset};
use crate::vae::{train_vae, VaeModel};

pub const Q_MODEL_KIND: &str = "q-network";

/// Train and validation windows cut from the configured series.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub name: String,
    pub points: usize,
    pub train: WindowDataset,
    pub validation: WindowDataset,
}

pub fn load_points(config: &RunConfig) -> Result<Vec<SeriesPoint>> {
    let d = &config.data;
    match &d.path {
        Some(path) => load_series(path, d.schema),
        None => generate_synthetic(d.synthetic_length, d.anomaly_rate, config.seeds().data),
    }
}

pub fn prepare_data(config: &RunConfig) -> Result<PreparedData> {
    let points = load_points(config)?;
    let all = make_windows(&points, config.data.n_steps, true)?;
    let (train, validation) = all.split(config.data.train_fraction)?;
    Ok(PreparedData {
        name: config.data.dataset_name(),
        points: points.len(),
        train,
        validation,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VaeSummary {
    pub training_windows: usize,
    pub excluded_outliers: usize,
    pub final_loss: f64,
    pub final_recon: f64,
    pub final_kl: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BudgetSummary {
    pub query_rate: f64,
    pub total: usize,
    pub spent: usize,
    pub propagated_labels: usize,
    pub timeouts: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSummary {
    pub episodes: usize,
    pub steps: u64,
    pub final_lambda: f64,
    pub r_target: f64,
    pub lambda_trend: TrendCheck,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSizes {
    pub points: usize,
    pub train_windows: usize,
    pub validation_windows: usize,
    pub n_steps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationSummary {
    pub episodes: usize,
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    pub fn_: u64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub degenerate: bool,
    pub excluded_points: usize,
}

impl From<&Validation> for ValidationSummary {
    fn from(v: &Validation) -> Self {
        ValidationSummary {
            episodes: v.episodes,
            tp: v.counts.tp,
            tn: v.counts.tn,
            fp: v.counts.fp,
            fn_: v.counts.fn_,
            precision: v.scores.precision,
            recall: v.scores.recall,
            f1: v.scores.f1,
            degenerate: v.scores.degenerate,
            excluded_points: v.excluded_points,
        }
    }
}

/// Final report; holds no timestamps or absolute paths so that identical
/// runs produce identical files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub dataset: String,
    pub seeds: Seeds,
    pub config: RunConfig,
    pub data: SplitSizes,
    pub vae: VaeSummary,
    pub warm_up: WarmUpReport,
    pub training: TrainingSummary,
    pub budget: BudgetSummary,
    /// Absent when the validation split has no labels.
    pub validation: Option<ValidationSummary>,
    /// Artifact file names, relative to the run directory.
    pub artifacts: Vec<String>,
}

#[derive(Debug)]
pub struct RunOutcome {
    pub report: RunReport,
    pub run_dir: PathBuf,
    pub agent: DqnAgent,
    pub log: Vec<EpisodeRecord>,
}

pub fn run_dir(config: &RunConfig) -> PathBuf {
    config
        .run
        .output_dir
        .join(format!("{}-{}", config.data.dataset_name(), config.run.seed))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn q_checkpoint(agent: &DqnAgent, n_steps: usize, scaling: Option<Scaling>, episode: Option<usize>) -> ModelFile {
    let mut file = ModelFile::new(Q_MODEL_KIND).with_network("q", &agent.q);
    file.metadata.insert("n_steps".into(), n_steps.into());
    if let Some(s) = scaling {
        file.metadata.insert("mean".into(), s.mean.into());
        file.metadata.insert("std".into(), s.std.into());
    }
    if let Some(e) = episode {
        file.metadata.insert("episode".into(), e.into());
    }
    file
}

/// Reads a Q-network checkpoint and checks it fits windows of `n_steps`.
pub fn load_q_checkpoint(path: &Path, n_steps: usize) -> Result<crate::nn::Network> {
    let file = ModelFile::load(path)?;
    if file.kind != Q_MODEL_KIND {
        return Err(Error::Version(format!("{} holds a `{}` model, not a Q-network", path.display(), file.kind)));
    }
    let stored = file.metadata.get("n_steps").and_then(serde_json::Value::as_u64);
    if stored != Some(n_steps as u64) {
        return Err(Error::Version(format!(
            "checkpoint was trained on {} steps per window, dataset uses {n_steps}",
            stored.map_or_else(|| "an unknown number of".into(), |s| s.to_string())
        )));
    }
    file.network("q")
}

/// Runs the whole pipeline and writes artifacts into [`run_dir`]. A human
/// oracle must be supplied when the configuration asks for one.
pub fn run_training(
    config: &RunConfig,
    human: Option<Box<dyn LabelOracle + Send>>,
    mut progress: impl FnMut(&EpisodeRecord),
) -> Result<RunOutcome> {
    config.validate()?;
    let mut config = config.clone();
    let seeds = config.seeds();
    let data = prepare_data(&config)?;
    let n = config.data.n_steps;
    let dir = run_dir(&config);
    std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    let mut artifacts = Vec::new();

    // Isolation forest over the training windows: its top outliers are kept
    // away from the VAE and get the heuristic action during warm-up.
    let subsample = config.agent.forest_subsample.min(data.train.len());
    let forest = fit_isolation_forest(data.train.matrix(), n, config.agent.forest_trees, subsample, seeds.forest)?;
    let scores = forest.score_all(data.train.matrix());
    let drop = (config.agent.outlier_fraction * data.train.len() as f64).round() as usize;
    let mut dropped = top_outliers(&scores, drop);
    dropped.sort_unstable();
    let clean: Vec<usize> = (0..data.train.len()).filter(|i| dropped.binary_search(i).is_err()).collect();
    let clean_set = data.train.select(&clean);

    let v = &config.vae;
    let mut vae = VaeModel::new(n, v.latent_dim, v.hidden, seeds.vae)?;
    let epochs = train_vae(&mut vae, &clean_set, v.epochs, v.batch_size, v.learning_rate, seeds.vae)?;
    let last = epochs.last().copied();
    let vae_summary = VaeSummary {
        training_windows: clean.len(),
        excluded_outliers: dropped.len(),
        final_loss: last.map_or(0.0, |e| e.total),
        final_recon: last.map_or(0.0, |e| e.recon),
        final_kl: last.map_or(0.0, |e| e.kl),
    };
    let vae_name = format!("vae-{}-{}.json", data.name, config.run.seed);
    vae.to_model_file().save(dir.join(&vae_name))?;
    artifacts.push(vae_name);
    let r2 = data
        .train
        .windows()
        .map(|w| vae.reconstruction_error(w))
        .collect::<Result<Vec<f64>>>()?;

    let mode = config.active.oracle;
    let mut env = match mode {
        OracleMode::Full => Environment::with_ground_truth(data.train.clone(), config.env.clone())?,
        _ => Environment::new(data.train.clone(), config.env.clone(), vec![None; data.train.len()])?,
    };
    let default_target = config.env.tn_val * config.env.episode_length as f64;
    config.reward.r_target = Some(config.reward.r_target.unwrap_or(default_target));
    let mut controller = LambdaController::from_config(&config.reward, default_target)?;

    let mut learner = match mode {
        OracleMode::Full => None,
        OracleMode::Simulated | OracleMode::Human => {
            let oracle: Box<dyn LabelOracle + Send> = match (mode, human) {
                (OracleMode::Human, Some(h)) => h,
                (OracleMode::Human, None) => {
                    return Err(Error::Config("human oracle mode needs a labeling service".into()))
                }
                _ => Box::new(SimulatedOracle::new(
                    data.train
                        .labels()
                        .ok_or_else(|| Error::Data("simulated oracle needs a labeled dataset".into()))?
                        .to_vec(),
                )),
            };
            let graph = if config.active.propagate {
                let g = SimilarityGraph::build(data.train.matrix(), n, config.active.bandwidth, config.active.neighbors)?;
                config.active.bandwidth = Some(g.bandwidth);
                Some(g)
            } else {
                None
            };
            let pool = LabelPool::new(data.train.len(), budget_for(config.active.query_rate, data.train.len()));
            Some(ActiveLearner::new(
                pool,
                oracle,
                graph,
                config.active.propagation(),
                config.run.episodes,
            )?)
        }
    };

    let mut agent = config.agent.build_agent(n, seeds.q_network)?;
    let mut memory = ReplayMemory::new(config.agent.replay_capacity)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seeds.training);
    let warm = warm_up(
        &mut env,
        Some(&forest),
        config.agent.outlier_fraction,
        config.agent.init_mem.min(data.train.len()),
        &r2,
        &controller,
        &mut memory,
        &mut rng,
    )?;

    let log_path = dir.join("log.jsonl");
    let mut log_file = BufWriter::new(File::create(&log_path).map_err(|e| Error::io(&log_path, e))?);
    let interval = config.run.checkpoint_interval;
    let scaling = data.train.scaling();
    let settings = TrainSettings {
        episodes: config.run.episodes,
        batch_size: config.agent.batch_size,
        train_every: config.agent.train_every,
    };
    let mut checkpoints = Vec::new();
    let log = train(
        &mut agent,
        &mut env,
        &r2,
        &mut controller,
        learner.as_mut(),
        &mut memory,
        settings,
        &mut rng,
        |record, agent| {
            serde_json::to_writer(&mut log_file, record)?;
            log_file.write_all(b"\n").map_err(|e| Error::io(&log_path, e))?;
            if interval > 0 && (record.episode + 1) % interval == 0 {
                let name = format!("q-{}-{}-ep{}.json", data.name, seeds.master, record.episode + 1);
                q_checkpoint(agent, n, scaling, Some(record.episode + 1)).save(dir.join(&name))?;
                checkpoints.push(name);
            }
            progress(record);
            Ok(())
        },
    )?;
    log_file.flush().map_err(|e| Error::io(&log_path, e))?;
    artifacts.push("log.jsonl".into());
    artifacts.extend(checkpoints);

    let rewards: Vec<f64> = log.iter().map(|r| r.reward).collect();
    if !log.is_empty() {
        emit_curves(&controller, &rewards, &dir)?;
        artifacts.push("lambda.csv".into());
        artifacts.push("reward.csv".into());
    }
    let lambdas: Vec<f64> = controller.history().iter().map(|h| h.lambda).collect();
    let trend = check_lambda_trend(&lambdas, &rewards, controller.r_target(), controller.bounds());

    let q_name = format!("q-{}-{}.json", data.name, config.run.seed);
    q_checkpoint(&agent, n, scaling, None).save(dir.join(&q_name))?;
    artifacts.push(q_name);

    let validation = if data.validation.labels().is_some() {
        let v = validate(&agent, &data.validation, validation_episodes(config.run.episodes))?;
        let trace_path = dir.join("validation_trace.csv");
        let mut text = String::from("episode,window,point,prediction,actual\n");
        for t in &v.trace {
            text.push_str(&format!("{},{},{},{},{}\n", t.episode, t.window, t.point, t.prediction, t.actual));
        }
        write_text(&trace_path, &text)?;
        artifacts.push("validation_trace.csv".into());
        Some(ValidationSummary::from(&v))
    } else {
        None
    };

    let budget = match &learner {
        Some(l) => BudgetSummary {
            query_rate: config.active.query_rate,
            total: l.pool.budget_total(),
            spent: l.pool.budget_spent(),
            propagated_labels: l.pool.count(crate::active::Provenance::Propagated),
            timeouts: log.iter().filter(|r| r.query_timeout).count(),
        },
        None => BudgetSummary {
            query_rate: config.active.query_rate,
            total: 0,
            spent: 0,
            propagated_labels: 0,
            timeouts: 0,
        },
    };

    write_text(&dir.join("manifest.toml"), &config.to_toml_string()?)?;
    artifacts.push("manifest.toml".into());
    artifacts.push("report.json".into());
    let report = RunReport {
        dataset: data.name.clone(),
        seeds,
        data: SplitSizes {
            points: data.points,
            train_windows: data.train.len(),
            validation_windows: data.validation.len(),
            n_steps: n,
        },
        vae: vae_summary,
        warm_up: warm,
        training: TrainingSummary {
            episodes: log.len(),
            steps: agent.step_count,
            final_lambda: controller.lambda(),
            r_target: controller.r_target(),
            lambda_trend: trend,
        },
        budget,
        validation,
        artifacts,
        config,
    };
    write_text(&dir.join("report.json"), &serde_json::to_string_pretty(&report)?)?;
    Ok(RunOutcome {
        report,
        run_dir: dir,
        agent,
        log,
    })
}

/// Greedy evaluation of a saved Q-network on the validation split of the
/// configured dataset.
pub fn run_evaluation(config: &RunConfig, checkpoint: &Path) -> Result<ValidationSummary> {
    config.validate()?;
    let data = prepare_data(config)?;
    if data.validation.labels().is_none() {
        return Err(Error::Data("evaluation requires labels".into()));
    }
    let q = load_q_checkpoint(checkpoint, config.data.n_steps)?;
    let agent = DqnAgent::new(q, config.agent.gamma, config.agent.learning_rate, config.agent.sync_interval, config.agent.schedule())?;
    let v = validate(&agent, &data.validation, validation_episodes(config.run.episodes))?;
    Ok(ValidationSummary::from(&v))
}
