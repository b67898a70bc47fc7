//! Reference implementations written directly from the definitions, shared
//! by the property tests and the acceptance suite.
#![allow(dead_code)]

use std::f64::consts::PI;

use gbrl_core::algos::GradSample;
use gbrl_core::features::{FeatureKind, FeatureSchema, FeatureVector};
use gbrl_core::policy::Action;
use gbrl_core::tree::{fit_tree, DecisionTree, TreeFitConfig};
use gbrl_core::{ActionHead, OutputLayout};
use rand::Rng;

// ---------------------------------------------------------------- policies

pub fn log_softmax(logits: &[f64], a: usize) -> f64 {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = logits.iter().map(|l| (l - m).exp()).sum();
    logits[a] - m - z.ln()
}

pub fn categorical_entropy(logits: &[f64]) -> f64 {
    (0..logits.len())
        .map(|a| {
            let lp = log_softmax(logits, a);
            -lp.exp() * lp
        })
        .sum()
}

pub fn gaussian_log_pdf(mu: &[f64], log_std: &[f64], a: &[f64]) -> f64 {
    mu.iter()
        .zip(log_std)
        .zip(a)
        .map(|((m, s), x)| {
            let z = (x - m) / s.exp();
            -0.5 * z * z - s - 0.5 * (2.0 * PI).ln()
        })
        .sum()
}

pub fn gaussian_entropy(log_std: &[f64]) -> f64 {
    log_std.iter().map(|s| s + 0.5 * (2.0 * PI * std::f64::consts::E).ln()).sum()
}

/// log π(a | θ) computed from the policy dims of θ.
pub fn log_prob(layout: &OutputLayout, theta: &[f64], action: &Action) -> f64 {
    match (layout.head.expect("policy head"), action) {
        (ActionHead::Discrete { n_actions }, Action::Discrete(a)) => log_softmax(&theta[..n_actions], *a),
        (ActionHead::Gaussian { action_dim }, Action::Continuous(a)) => {
            gaussian_log_pdf(&theta[..action_dim], &theta[action_dim..2 * action_dim], a)
        }
        _ => panic!("action does not fit the layout"),
    }
}

pub fn entropy(layout: &OutputLayout, theta: &[f64]) -> f64 {
    match layout.head.expect("policy head") {
        ActionHead::Discrete { n_actions } => categorical_entropy(&theta[..n_actions]),
        ActionHead::Gaussian { action_dim } => gaussian_entropy(&theta[action_dim..2 * action_dim]),
    }
}

/// Central-difference gradient of `f` at `x`.
pub fn numeric_gradient(x: &[f64], h: f64, f: impl Fn(&[f64]) -> f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    (0..x.len())
        .map(|i| {
            probe[i] = x[i] + h;
            let up = f(&probe);
            probe[i] = x[i] - h;
            let down = f(&probe);
            probe[i] = x[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

// -------------------------------------------------------------- objectives

fn value_term(layout: &OutputLayout, theta: &[f64], ret: f64) -> f64 {
    let v = theta[layout.value_index().expect("value dim")];
    -0.5 * (ret - v).powi(2)
}

pub fn a2c_objective(layout: &OutputLayout, s: &GradSample<'_>, theta: &[f64], ent_coef: f64) -> f64 {
    s.advantage * log_prob(layout, theta, s.action) + ent_coef * entropy(layout, theta) + value_term(layout, theta, s.ret)
}

pub fn ppo_objective(layout: &OutputLayout, s: &GradSample<'_>, theta: &[f64], clip: f64, ent_coef: f64) -> f64 {
    let ratio = (log_prob(layout, theta, s.action) - s.log_prob_old).exp();
    let a = s.advantage;
    let surrogate = (ratio * a).min(ratio.clamp(1.0 - clip, 1.0 + clip) * a);
    surrogate + ent_coef * entropy(layout, theta) + value_term(layout, theta, s.ret)
}

/// AWR regression objective with the advantage weight held fixed.
pub fn awr_objective(layout: &OutputLayout, s: &GradSample<'_>, theta: &[f64], beta: f64, w_max: f64) -> f64 {
    let w = (s.advantage / beta).exp().min(w_max);
    w * log_prob(layout, theta, s.action) + value_term(layout, theta, s.ret)
}

/// A random layout, θ, action and targets.
pub struct GradCase {
    pub layout: OutputLayout,
    pub theta: Vec<f64>,
    pub action: Action,
    pub advantage: f64,
    pub ret: f64,
    pub log_prob_old: f64,
}

impl GradCase {
    pub fn random(rng: &mut impl Rng) -> Self {
        let layout = if rng.random_bool(0.5) {
            OutputLayout::discrete(rng.random_range(2..6))
        } else {
            OutputLayout::gaussian(rng.random_range(1..4))
        };
        let d = layout.output_dim();
        let mut theta: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
        let action = match layout.head.unwrap() {
            ActionHead::Discrete { n_actions } => Action::Discrete(rng.random_range(0..n_actions)),
            ActionHead::Gaussian { action_dim } => {
                for s in &mut theta[action_dim..2 * action_dim] {
                    *s = rng.random_range(-2.0..0.5);
                }
                // Actions within three standard deviations of the mean.
                Action::Continuous(
                    (0..action_dim)
                        .map(|k| theta[k] + theta[action_dim + k].exp() * rng.random_range(-3.0..3.0))
                        .collect(),
                )
            }
        };
        let lp = log_prob(&layout, &theta, &action);
        Self {
            layout,
            theta,
            action,
            advantage: rng.random_range(-3.0..3.0),
            ret: rng.random_range(-5.0..5.0),
            log_prob_old: lp + rng.random_range(-0.6..0.6),
        }
    }

    pub fn sample(&self) -> GradSample<'_> {
        GradSample {
            theta: &self.theta,
            action: &self.action,
            advantage: self.advantage,
            ret: self.ret,
            log_prob_old: self.log_prob_old,
        }
    }
}

// ------------------------------------------------------------------- trees

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Column {
    Numeric,
    Categorical,
}

pub struct Batch {
    pub schema: FeatureSchema,
    pub columns: Vec<Column>,
    pub xs: Vec<Vec<f64>>,
    pub grads: Vec<Vec<f64>>,
}

impl Batch {
    /// Up to 64 rows over a random mix of numeric and categorical columns.
    pub fn random(rng: &mut impl Rng) -> Self {
        let n = rng.random_range(2..=64);
        let f = rng.random_range(1..=4);
        let d = rng.random_range(1..=3);
        let mut schema = FeatureSchema::new();
        let mut columns = Vec::new();
        for slot in 0..f {
            if rng.random_bool(0.5) {
                schema.push(format!("x{slot}"), FeatureKind::Numerical);
                columns.push(Column::Numeric);
            } else {
                schema.push(format!("c{slot}"), FeatureKind::Categorical);
                for t in 0..5 {
                    schema.intern_token(slot, &format!("tok{t}")).unwrap();
                }
                columns.push(Column::Categorical);
            }
        }
        let xs = (0..n)
            .map(|_| {
                columns
                    .iter()
                    .map(|c| match c {
                        // Coarse values so ties and repeated thresholds occur.
                        Column::Numeric => f64::from(rng.random_range(-8..8)) * 0.5,
                        Column::Categorical => f64::from(rng.random_range(0u32..5)),
                    })
                    .collect()
            })
            .collect();
        let grads = (0..n).map(|_| (0..d).map(|_| rng.random_range(-3.0..3.0)).collect()).collect();
        Self {
            schema,
            columns,
            xs,
            grads,
        }
    }

    pub fn fit(&self, max_depth: usize, min_samples_leaf: usize) -> DecisionTree {
        let rows: Vec<FeatureVector> = self.xs.iter().map(|x| FeatureVector::from_raw(x.clone())).collect();
        let refs: Vec<&FeatureVector> = rows.iter().collect();
        let flat: Vec<f64> = self.grads.iter().flatten().copied().collect();
        let cfg = TreeFitConfig {
            max_depth,
            min_samples_leaf,
            num_bins: 256,
            output_dim: self.grads[0].len(),
        };
        fit_tree(&self.schema, &refs, &flat, &cfg).unwrap()
    }
}

/// Sum over rows of ‖g - mean(g)‖².
pub fn sse(rows: &[&[f64]]) -> f64 {
    if rows.is_empty() {
        return 0.0;
    }
    let d = rows[0].len();
    let n = rows.len() as f64;
    let mut mean = vec![0.0; d];
    for r in rows {
        for k in 0..d {
            mean[k] += r[k] / n;
        }
    }
    rows.iter()
        .map(|r| r.iter().zip(&mean).map(|(a, m)| (a - m).powi(2)).sum::<f64>())
        .sum()
}

/// Largest SSE reduction over every way a single feature test can split the
/// rows into two non-empty groups of at least `min_leaf` rows.
pub fn exhaustive_best_gain(columns: &[Column], xs: &[Vec<f64>], grads: &[Vec<f64>], min_leaf: usize) -> f64 {
    let all: Vec<&[f64]> = grads.iter().map(Vec::as_slice).collect();
    let parent = sse(&all);
    let mut best = 0.0f64;
    for (f, kind) in columns.iter().enumerate() {
        let mut values: Vec<f64> = xs.iter().map(|x| x[f]).collect();
        values.sort_by(f64::total_cmp);
        values.dedup();
        for &v in &values {
            let goes_left = |x: &Vec<f64>| match kind {
                Column::Numeric => x[f] <= v,
                Column::Categorical => x[f] == v,
            };
            let left: Vec<&[f64]> = xs.iter().zip(&all).filter(|(x, _)| goes_left(x)).map(|(_, g)| *g).collect();
            let right: Vec<&[f64]> = xs.iter().zip(&all).filter(|(x, _)| !goes_left(x)).map(|(_, g)| *g).collect();
            if left.len() < min_leaf || right.len() < min_leaf {
                continue;
            }
            best = best.max(parent - sse(&left) - sse(&right));
        }
    }
    best
}

// --------------------------------------------------------------------- GAE

pub struct Segment {
    pub rewards: Vec<f64>,
    pub values: Vec<f64>,
    pub dones: Vec<bool>,
    pub last: f64,
    pub gamma: f64,
}

pub fn random_segment(rng: &mut impl Rng) -> Segment {
    let n = rng.random_range(1..60);
    Segment {
        rewards: (0..n).map(|_| rng.random_range(-2.0..2.0)).collect(),
        values: (0..n).map(|_| rng.random_range(-5.0..5.0)).collect(),
        dones: (0..n).map(|_| rng.random_bool(0.1)).collect(),
        last: rng.random_range(-5.0..5.0),
        gamma: rng.random_range(0.5..0.999),
    }
}


/// `A_t = Σ_l (γλ)^l δ_{t+l}`, summed directly and cut at episode ends.
pub fn gae_direct(rewards: &[f64], values: &[f64], dones: &[bool], last: f64, gamma: f64, lambda: f64) -> Vec<f64> {
    let n = rewards.len();
    let next_value = |t: usize| if t + 1 < n { values[t + 1] } else { last };
    let delta = |t: usize| {
        let live = if dones[t] { 0.0 } else { 1.0 };
        rewards[t] + gamma * live * next_value(t) - values[t]
    };
    (0..n)
        .map(|t| {
            let mut sum = 0.0;
            let mut weight = 1.0;
            for u in t..n {
                sum += weight * delta(u);
                if dones[u] {
                    break;
                }
                weight *= gamma * lambda;
            }
            sum
        })
        .collect()
}

/// Discounted return to the end of each episode, bootstrapped with `last`
/// when the segment ends mid-episode.
pub fn discounted_returns(rewards: &[f64], dones: &[bool], last: f64, gamma: f64) -> Vec<f64> {
    let n = rewards.len();
    (0..n)
        .map(|t| {
            let mut sum = 0.0;
            let mut weight = 1.0;
            for u in t..n {
                sum += weight * rewards[u];
                weight *= gamma;
                if dones[u] {
                    return sum;
                }
            }
            sum + weight * last
        })
        .collect()
}
