//! The boosting loop: collect experience with the current ensemble, compute
//! per-sample gradients on batches drawn with replacement, fit one tree per
//! update and append it.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::buffer::{ReplayBuffer, RolloutBuffer, Transition};
use super::config::{Algo, TrainConfig};
use super::gradients::{a2c_gradient, awr_gradient, clip_gradients, normalize_advantages, ppo_gradient, GradSample};
use super::model::ActorCritic;
use crate::ensemble::OutputLayout;
use crate::envs::{EnvFactory, VecEnv};
use crate::error::{Error, Result};
use crate::features::{FeatureSchema, FeatureVector};
use crate::policy::Action;
use crate::tree::TreeFitConfig;

/// One finished episode, in the metrics CSV column order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpisodeRecord {
    /// Environment steps collected when the episode ended.
    pub step: u64,
    pub env_id: usize,
    pub episode_reward: f64,
    pub episode_length: usize,
}

/// Hooks invoked while training. All methods default to no-ops.
pub trait TrainObserver {
    fn on_episode(&mut self, _record: &EpisodeRecord) -> Result<()> {
        Ok(())
    }

    /// Called with the rows of the batch that iteration `iteration` was fit on.
    fn on_update(&mut self, _iteration: u64, _batch: &[usize]) {}

    /// Called after `iterations` boosting iterations have completed.
    fn on_iteration(&mut self, _iterations: u64, _model: &ActorCritic, _schema: &FeatureSchema) -> Result<()> {
        Ok(())
    }
}

/// Observer that ignores everything.
pub struct NoopObserver;

impl TrainObserver for NoopObserver {}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Final model; its schema holds every token seen during training.
    pub model: ActorCritic,
    pub episodes: Vec<EpisodeRecord>,
    pub total_steps: u64,
    pub iterations: u64,
}

impl TrainOutcome {
    /// Mean reward of the last `n` finished episodes (fewer if fewer ended).
    pub fn mean_last_episodes(&self, n: usize) -> Option<f64> {
        mean_last(&self.episodes, n)
    }
}

pub fn mean_last(episodes: &[EpisodeRecord], n: usize) -> Option<f64> {
    let tail = &episodes[episodes.len().saturating_sub(n)..];
    (!tail.is_empty()).then(|| tail.iter().map(|e| e.episode_reward).sum::<f64>() / tail.len() as f64)
}

/// Checks that a model layout can act in an environment.
pub fn check_layout(layout: &OutputLayout, env_head: crate::ensemble::ActionHead) -> Result<()> {
    match layout.head {
        Some(head) if head == env_head => Ok(()),
        other => Err(Error::LayoutMismatch(format!(
            "model head {other:?} cannot act in an environment expecting {env_head:?}"
        ))),
    }
}

/// Runs the boosting loop until `total_iterations` trees have been added
/// (counting shared-mode iterations) or the step budget cannot fit another
/// collection round.
pub fn train(
    env_factory: &EnvFactory,
    cfg: &TrainConfig,
    seed: u64,
    observer: &mut dyn TrainObserver,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let algo = &cfg.algo;
    let envs = VecEnv::new(env_factory, algo.n_envs, seed)?;
    let schema = envs.schema();
    let head = envs.action_head();
    let layout = OutputLayout {
        head: Some(head),
        value: true,
    };
    let model = ActorCritic::new(
        schema.clone(),
        layout,
        cfg.shared_ac,
        (algo.lr_actor, algo.lr_critic, algo.lr_log_std.initial()),
        algo.log_std_init,
    )?;
    check_layout(&model.layout(), head)?;

    let mut action_rng = ChaCha8Rng::seed_from_u64(seed);
    action_rng.set_stream(1);
    let mut batch_rng = ChaCha8Rng::seed_from_u64(seed);
    batch_rng.set_stream(2);

    let mut collector = Collector {
        envs,
        schema,
        obs: Vec::new(),
        episode_reward: vec![0.0; algo.n_envs],
        episode_length: vec![0; algo.n_envs],
        steps: 0,
        episodes: Vec::new(),
        rng: action_rng,
        gamma: algo.gamma,
    };
    collector.obs = collector
        .envs
        .observations()
        .to_vec()
        .iter()
        .map(|o| collector.schema.encode(o))
        .collect::<Result<_>>()?;

    let mut learner = Learner {
        cfg,
        fit: cfg.tree.fit_config(layout.output_dim()),
        model,
        layout,
        iterations: 0,
        rng: batch_rng,
    };

    match algo.algo {
        Algo::A2c | Algo::Ppo => on_policy(&mut collector, &mut learner, observer)?,
        Algo::Awr => awr(&mut collector, &mut learner, observer)?,
    }

    let mut model = learner.model;
    model.set_schema(&collector.schema);
    Ok(TrainOutcome {
        model,
        episodes: collector.episodes,
        total_steps: collector.steps,
        iterations: learner.iterations,
    })
}

struct StepOut {
    state: FeatureVector,
    action: Action,
    reward: f64,
    done: bool,
    log_prob: f64,
    theta: Vec<f64>,
}

struct Collector {
    envs: VecEnv,
    schema: FeatureSchema,
    obs: Vec<FeatureVector>,
    episode_reward: Vec<f64>,
    episode_length: Vec<usize>,
    steps: u64,
    episodes: Vec<EpisodeRecord>,
    rng: ChaCha8Rng,
    gamma: f64,
}

impl Collector {
    /// Steps every environment once with actions sampled from `model`.
    fn step(&mut self, model: &ActorCritic, observer: &mut dyn TrainObserver) -> Result<Vec<StepOut>> {
        let layout = model.layout();
        let value_dim = layout.value_index().expect("actor-critic layout has a value dim");
        let inputs: Vec<&FeatureVector> = self.obs.iter().collect();
        let thetas = model.predict_theta_batch(&inputs);
        let mut samples = Vec::with_capacity(self.obs.len());
        for theta in &thetas {
            let dist = layout.distribution(theta).expect("actor-critic layout has a policy head");
            samples.push(dist.sample(&mut self.rng));
        }
        let actions: Vec<Action> = samples.iter().map(|s| s.action.clone()).collect();
        let results = self.envs.step(&actions)?;
        self.steps += results.len() as u64;

        let mut out = Vec::with_capacity(results.len());
        let next_obs = results
            .iter()
            .map(|r| self.schema.encode(&r.observation))
            .collect::<Result<Vec<_>>>()?;
        for (e, ((r, sample), theta)) in results.into_iter().zip(samples).zip(thetas).enumerate() {
            self.episode_reward[e] += r.reward;
            self.episode_length[e] += 1;
            let mut reward = r.reward;
            if r.truncated {
                // Time limits are not terminal: bootstrap from the final state.
                let last = r.terminal_observation.as_ref().expect("finished episodes expose their final observation");
                let last = self.schema.encode(last)?;
                reward += self.gamma * model.predict_theta(&last)[value_dim];
            }
            if r.done {
                let record = EpisodeRecord {
                    step: self.steps,
                    env_id: e,
                    episode_reward: self.episode_reward[e],
                    episode_length: self.episode_length[e],
                };
                observer.on_episode(&record)?;
                self.episodes.push(record);
                self.episode_reward[e] = 0.0;
                self.episode_length[e] = 0;
            }
            out.push(StepOut {
                state: std::mem::replace(&mut self.obs[e], next_obs[e].clone()),
                action: sample.action,
                reward,
                done: r.done,
                log_prob: sample.log_prob,
                theta,
            });
        }
        Ok(out)
    }
}

struct Learner<'a> {
    cfg: &'a TrainConfig,
    fit: TreeFitConfig,
    model: ActorCritic,
    layout: OutputLayout,
    iterations: u64,
    rng: ChaCha8Rng,
}

impl Learner<'_> {
    fn done(&self) -> bool {
        self.cfg.algo.total_iterations.is_some_and(|k| self.iterations >= k)
    }

    fn sample_batch(&mut self, len: usize) -> Vec<usize> {
        (0..self.cfg.algo.batch_size).map(|_| self.rng.random_range(0..len)).collect()
    }

    /// Clips, checks and fits one boosting iteration.
    fn boost(
        &mut self,
        schema: &FeatureSchema,
        inputs: &[&FeatureVector],
        mut grads: Vec<f64>,
        batch: &[usize],
        progress: f64,
        observer: &mut dyn TrainObserver,
    ) -> Result<()> {
        let algo = &self.cfg.algo;
        // Limits bound the gradient of the batch-mean objective, whose rows
        // are the per-sample gradients divided by the batch size.
        let n = batch.len() as f64;
        clip_gradients(&self.layout, &mut grads, algo.grad_clip_policy * n, algo.grad_clip_value * n);
        let d = self.layout.output_dim();
        if let Some(pos) = grads.iter().position(|g| !g.is_finite()) {
            return Err(Error::Diverged {
                iteration: self.iterations,
                detail: format!(
                    "non-finite gradient {} for batch row {} (sample {}), dim {}",
                    grads[pos],
                    pos / d,
                    batch[pos / d],
                    pos % d
                ),
            });
        }
        let scale = algo.lr_log_std.factor(progress);
        self.model.boost(schema, inputs, &grads, &self.fit, scale)?;
        observer.on_update(self.iterations, batch);
        self.iterations += 1;
        observer.on_iteration(self.iterations, &self.model, schema)
    }
}

fn on_policy(collector: &mut Collector, learner: &mut Learner<'_>, observer: &mut dyn TrainObserver) -> Result<()> {
    let cfg = learner.cfg;
    let algo = &cfg.algo;
    let rollout = algo.n_steps * algo.n_envs;
    let value_dim = learner.layout.value_index().expect("value dim");
    let mut buffer = RolloutBuffer::new(algo.n_steps, algo.n_envs);
    let mut thetas: Vec<Vec<f64>> = Vec::with_capacity(rollout);

    while !learner.done() && collector.steps + rollout as u64 <= cfg.total_timesteps {
        buffer.clear();
        thetas.clear();
        for _ in 0..algo.n_steps {
            for s in collector.step(&learner.model, observer)? {
                buffer.push(Transition {
                    state: s.state,
                    action: s.action,
                    reward: s.reward,
                    done: s.done,
                    log_prob_old: s.log_prob,
                    value_old: s.theta[value_dim],
                })?;
                thetas.push(s.theta);
            }
        }
        let inputs: Vec<&FeatureVector> = collector.obs.iter().collect();
        let last_values: Vec<f64> = learner
            .model
            .predict_theta_batch(&inputs)
            .iter()
            .map(|theta| theta[value_dim])
            .collect();
        buffer.compute_advantages(&last_values, algo.gamma, algo.gae_lambda)?;
        let progress = collector.steps as f64 / cfg.total_timesteps as f64;

        for _ in 0..algo.updates_per_rollout() {
            if learner.done() {
                break;
            }
            let batch = learner.sample_batch(rollout);
            let transitions = buffer.transitions();
            let mut advantages: Vec<f64> = batch.iter().map(|&i| buffer.advantages()[i]).collect();
            if algo.normalize_advantage {
                normalize_advantages(&mut advantages);
            }
            let samples: Vec<GradSample<'_>> = batch
                .iter()
                .zip(&advantages)
                .map(|(&i, &advantage)| GradSample {
                    theta: &thetas[i],
                    action: &transitions[i].action,
                    advantage,
                    ret: buffer.returns()[i],
                    log_prob_old: transitions[i].log_prob_old,
                })
                .collect();
            let grads = match algo.algo {
                Algo::Ppo => ppo_gradient(&learner.layout, &samples, algo.clip_range, algo.ent_coef)?,
                _ => a2c_gradient(&learner.layout, &samples, algo.ent_coef)?,
            };
            let inputs: Vec<&FeatureVector> = batch.iter().map(|&i| &transitions[i].state).collect();
            learner.boost(&collector.schema, &inputs, grads, &batch, progress, observer)?;
            for (t, theta) in transitions.iter().zip(thetas.iter_mut()) {
                learner.model.apply_last_boost(t.state.values(), theta);
            }
        }
    }
    Ok(())
}

fn awr(collector: &mut Collector, learner: &mut Learner<'_>, observer: &mut dyn TrainObserver) -> Result<()> {
    let cfg = learner.cfg;
    let algo = &cfg.algo;
    let round = algo.awr_train_freq * algo.n_envs;
    let value_dim = learner.layout.value_index().expect("value dim");
    let mut buffer = ReplayBuffer::new(algo.awr_buffer_size, algo.n_envs);

    while !learner.done() && collector.steps + round as u64 <= cfg.total_timesteps {
        for _ in 0..algo.awr_train_freq {
            for (e, s) in collector.step(&learner.model, observer)?.into_iter().enumerate() {
                let value_old = s.theta[value_dim];
                let t = Transition {
                    state: s.state,
                    action: s.action,
                    reward: s.reward,
                    done: s.done,
                    log_prob_old: s.log_prob,
                    value_old,
                };
                buffer.push(t, e, s.theta);
            }
        }
        let inputs: Vec<&FeatureVector> = collector.obs.iter().collect();
        let mut tails = learner.model.predict_theta_batch(&inputs);
        let progress = collector.steps as f64 / cfg.total_timesteps as f64;

        for _ in 0..algo.awr_gradient_steps {
            if learner.done() {
                break;
            }
            let tail_values: Vec<f64> = tails.iter().map(|t| t[value_dim]).collect();
            buffer.recompute(value_dim, &tail_values, algo.gamma, algo.gae_lambda)?;
            let batch = learner.sample_batch(buffer.len());
            let samples: Vec<GradSample<'_>> = batch
                .iter()
                .map(|&i| GradSample {
                    theta: buffer.theta(i),
                    action: &buffer.transition(i).action,
                    advantage: buffer.advantages()[i],
                    ret: buffer.returns()[i],
                    log_prob_old: buffer.transition(i).log_prob_old,
                })
                .collect();
            let grads = awr_gradient(&learner.layout, &samples, algo.beta, algo.awr_weight_max)?;
            let inputs: Vec<&FeatureVector> = batch.iter().map(|&i| &buffer.transition(i).state).collect();
            learner.boost(&collector.schema, &inputs, grads, &batch, progress, observer)?;
            let model = &learner.model;
            buffer.update_thetas(|x, theta| model.apply_last_boost(x, theta));
            for (x, theta) in collector.obs.iter().zip(&mut tails) {
                model.apply_last_boost(x.values(), theta);
            }
        }
    }
    Ok(())
}
