//! `train`, `eval` and `inspect`. Reports are `key: value` lines.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use gbrl_core::algos::{check_layout, train, ActorCritic, EpisodeRecord, TrainObserver};
use gbrl_core::envs::{EnvKind, Environment};
use gbrl_core::features::{FeatureSchema, Observation};
use gbrl_core::policy::Action;
use gbrl_core::SharedACEnsemble;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::RunConfig;
use crate::error::{CliError, Failure};

pub const METRICS_FILE: &str = "metrics.csv";
pub const METRICS_HEADER: &str = "step,env_id,episode_reward,episode_length";

fn io_error(e: impl Into<anyhow::Error>) -> CliError {
    CliError::new(Failure::Io, e)
}

/// Writes a shared model to `<stem>.gbrl`, or a separate one to
/// `<stem>.actor.gbrl` and `<stem>.critic.gbrl`. Returns the files written.
pub fn save_model(model: &ActorCritic, dir: &Path, stem: &str) -> Result<Vec<PathBuf>, CliError> {
    let parts: Vec<(PathBuf, &SharedACEnsemble)> = match model {
        ActorCritic::Shared(e) => vec![(dir.join(format!("{stem}.gbrl")), e)],
        ActorCritic::Separate { actor, critic } => vec![
            (dir.join(format!("{stem}.actor.gbrl")), actor),
            (dir.join(format!("{stem}.critic.gbrl")), critic),
        ],
    };
    for (path, ens) in &parts {
        std::fs::write(path, ens.to_bytes())
            .with_context(|| format!("cannot write model {}", path.display()))
            .map_err(io_error)?;
    }
    Ok(parts.into_iter().map(|(p, _)| p).collect())
}

pub fn load_model(path: &Path) -> Result<SharedACEnsemble, CliError> {
    let bytes = std::fs::read(path)
        .with_context(|| format!("cannot read model {}", path.display()))
        .map_err(io_error)?;
    SharedACEnsemble::from_bytes(&bytes)
        .map_err(|e| CliError::new(Failure::Model, anyhow!(e).context(format!("cannot load model {}", path.display()))))
}

struct RunObserver {
    metrics: BufWriter<File>,
    dir: PathBuf,
    checkpoint_interval: u64,
}

impl TrainObserver for RunObserver {
    fn on_episode(&mut self, r: &EpisodeRecord) -> gbrl_core::Result<()> {
        writeln!(
            self.metrics,
            "{},{},{},{}",
            r.step, r.env_id, r.episode_reward, r.episode_length
        )?;
        self.metrics.flush()?;
        Ok(())
    }

    fn on_iteration(&mut self, k: u64, model: &ActorCritic, schema: &FeatureSchema) -> gbrl_core::Result<()> {
        if self.checkpoint_interval > 0 && k % self.checkpoint_interval == 0 {
            let mut snapshot = model.clone();
            snapshot.set_schema(schema);
            save_model(&snapshot, &self.dir, &format!("checkpoint_{k:08}"))
                .map_err(|e| std::io::Error::other(e.to_string()))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct TrainSummary {
    pub steps: u64,
    pub iterations: u64,
    pub trees: usize,
    pub nodes: usize,
    pub episodes: usize,
    pub final_mean_reward_100: Option<f64>,
    pub model_files: Vec<PathBuf>,
    pub metrics_file: PathBuf,
}

pub fn cmd_train(cfg: &RunConfig, out: &mut dyn Write) -> Result<TrainSummary, CliError> {
    cfg.validate()?;
    let dir = &cfg.run.output_dir;
    std::fs::create_dir_all(dir)
        .with_context(|| format!("cannot create output directory {}", dir.display()))
        .map_err(io_error)?;
    std::fs::write(dir.join("config.toml"), cfg.to_toml())
        .with_context(|| format!("cannot write into {}", dir.display()))
        .map_err(io_error)?;
    let metrics_file = dir.join(METRICS_FILE);
    let file = File::create(&metrics_file)
        .with_context(|| format!("cannot create {}", metrics_file.display()))
        .map_err(io_error)?;
    let mut observer = RunObserver {
        metrics: BufWriter::new(file),
        dir: dir.clone(),
        checkpoint_interval: cfg.run.checkpoint_interval,
    };
    writeln!(observer.metrics, "{METRICS_HEADER}").map_err(io_error)?;
    observer.metrics.flush().map_err(io_error)?;

    let env = cfg.run.env;
    let factory = move |seed: u64| -> Box<dyn Environment> { env.make(seed) };
    let outcome = train(&factory, &cfg.train_config(), cfg.run.seed, &mut observer).map_err(CliError::training)?;
    let model_files = save_model(&outcome.model, dir, "model")?;

    let summary = TrainSummary {
        steps: outcome.total_steps,
        iterations: outcome.iterations,
        trees: outcome.model.tree_count(),
        nodes: outcome.model.node_count(),
        episodes: outcome.episodes.len(),
        final_mean_reward_100: outcome.mean_last_episodes(100),
        model_files,
        metrics_file,
    };
    let mean = summary.final_mean_reward_100.map_or("nan".to_owned(), |m| m.to_string());
    let files: Vec<String> = summary.model_files.iter().map(|p| p.display().to_string()).collect();
    writeln!(
        out,
        "env: {env}\nalgo: {}\nshared_ac: {}\nsteps: {}\niterations: {}\ntrees: {}\nnodes: {}\nepisodes: {}\nfinal_mean_reward_100: {mean}\nmodel: {}\nmetrics: {}",
        cfg.algo.algo,
        cfg.run.shared_ac,
        summary.steps,
        summary.iterations,
        summary.trees,
        summary.nodes,
        summary.episodes,
        files.join(","),
        summary.metrics_file.display()
    )
    .map_err(io_error)?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub rewards: Vec<f64>,
    pub lengths: Vec<usize>,
}

fn mean_std(xs: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = xs.clone().count() as f64;
    let mean = xs.clone().sum::<f64>() / n;
    let var = xs.map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

impl EvalReport {
    pub fn reward_stats(&self) -> (f64, f64) {
        mean_std(self.rewards.iter().copied())
    }

    pub fn length_stats(&self) -> (f64, f64) {
        mean_std(self.lengths.iter().map(|&l| l as f64))
    }
}

/// Runs `episodes` episodes; episode `i` uses an environment seeded `seed + i`.
pub fn evaluate(
    model: &SharedACEnsemble,
    env: EnvKind,
    episodes: usize,
    seed: u64,
    deterministic: bool,
) -> Result<EvalReport, CliError> {
    if episodes == 0 {
        return Err(CliError::new(Failure::Invalid, anyhow!("episodes must be >= 1")));
    }
    let probe = env.make(seed);
    let layout = model.layout();
    check_layout(&layout, probe.action_head()).map_err(CliError::model)?;
    let env_schema = probe.schema();
    let kinds = |s: &FeatureSchema| s.entries().iter().map(|e| e.kind).collect::<Vec<_>>();
    if kinds(&env_schema) != kinds(model.schema()) {
        return Err(CliError::new(
            Failure::Model,
            anyhow!("model features do not match the {env} observation schema"),
        ));
    }
    let mut schema = model.schema().clone();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(3);
    let mut report = EvalReport {
        rewards: Vec::with_capacity(episodes),
        lengths: Vec::with_capacity(episodes),
    };
    for i in 0..episodes {
        let mut e = env.make(seed.wrapping_add(i as u64));
        let mut obs: Observation = e.reset();
        let (mut total, mut length) = (0.0, 0);
        loop {
            let x = schema.encode(&obs).map_err(CliError::model)?;
            let theta = model.predict_theta(&x);
            let dist = layout.distribution(&theta).expect("checked policy head");
            let action: Action = if deterministic {
                dist.mode()
            } else {
                dist.sample(&mut rng).action
            };
            let step = e.step(&action).map_err(CliError::model)?;
            total += step.reward;
            length += 1;
            if step.done {
                break;
            }
            obs = step.observation;
        }
        report.rewards.push(total);
        report.lengths.push(length);
    }
    Ok(report)
}

pub fn cmd_eval(
    model_path: &Path,
    env: EnvKind,
    episodes: usize,
    seed: u64,
    deterministic: bool,
    out: &mut dyn Write,
) -> Result<EvalReport, CliError> {
    let model = load_model(model_path)?;
    let report = evaluate(&model, env, episodes, seed, deterministic)?;
    let (mr, sr) = report.reward_stats();
    let (ml, sl) = report.length_stats();
    writeln!(
        out,
        "env: {env}\nepisodes: {episodes}\ndeterministic: {deterministic}\nmean_reward: {mr}\nstd_reward: {sr}\nmean_length: {ml}\nstd_length: {sl}"
    )
    .map_err(io_error)?;
    Ok(report)
}

pub fn cmd_inspect(model_path: &Path, out: &mut dyn Write) -> Result<SharedACEnsemble, CliError> {
    let model = load_model(model_path)?;
    let layout = model.layout();
    let head = match layout.head {
        Some(gbrl_core::ActionHead::Discrete { n_actions }) => format!("discrete({n_actions})"),
        Some(gbrl_core::ActionHead::Gaussian { action_dim }) => format!("gaussian({action_dim})"),
        None => "none".to_owned(),
    };
    let lrs: Vec<String> = model.lr_per_dim().iter().map(f64::to_string).collect();
    let mut report = format!(
        "trees: {}\nnodes: {}\noutput_dim: {}\npolicy_head: {head}\nvalue_head: {}\nlr_per_dim: {}\nfeatures: {}\n",
        model.tree_count(),
        model.node_count(),
        model.output_dim(),
        layout.value,
        lrs.join(","),
        model.schema().len(),
    );
    for (rank, (slot, importance)) in model.top_features(10).into_iter().enumerate() {
        let name = &model.schema().entries()[slot].name;
        report.push_str(&format!("importance_{rank}: {slot} {name} {importance}\n"));
    }
    out.write_all(report.as_bytes()).map_err(io_error)?;
    Ok(model)
}
