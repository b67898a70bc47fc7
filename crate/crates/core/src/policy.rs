//! Action distributions parameterized by ensemble outputs.
//!
//! Gradients are taken with respect to the policy dims of θ in layout order:
//! logits for discrete heads, `[mu..., log_std...]` for Gaussian heads.

use std::f64::consts::{E, PI};

use rand::Rng;
use rand_distr::{Distribution as _, StandardNormal};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Distribution {
    Categorical { logits: Vec<f64> },
    Gaussian { mu: Vec<f64>, log_std: Vec<f64> },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Action {
    Discrete(usize),
    Continuous(Vec<f64>),
}

/// Policy head plus the critic's value estimate for one state.
#[derive(Debug, Clone, PartialEq)]
pub struct PolicyParams {
    pub dist: Distribution,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ActionSample {
    pub action: Action,
    pub log_prob: f64,
}

fn log_sum_exp(logits: &[f64]) -> f64 {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln()
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

impl Distribution {
    /// Number of θ dims this distribution occupies.
    pub fn param_dim(&self) -> usize {
        match self {
            Distribution::Categorical { logits } => logits.len(),
            Distribution::Gaussian { mu, .. } => 2 * mu.len(),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> ActionSample {
        let action = match self {
            Distribution::Categorical { logits } => {
                let probs = softmax(logits);
                let u: f64 = rng.random();
                let mut acc = 0.0;
                let mut pick = probs.len() - 1;
                for (i, p) in probs.iter().enumerate() {
                    acc += p;
                    if u < acc {
                        pick = i;
                        break;
                    }
                }
                Action::Discrete(pick)
            }
            Distribution::Gaussian { mu, log_std } => Action::Continuous(
                mu.iter()
                    .zip(log_std)
                    .map(|(m, ls)| {
                        let z: f64 = StandardNormal.sample(rng);
                        m + ls.exp() * z
                    })
                    .collect(),
            ),
        };
        let log_prob = self
            .log_prob(&action)
            .expect("sampled action lies in the support");
        ActionSample { action, log_prob }
    }

    /// Argmax logit or the mean.
    pub fn mode(&self) -> Action {
        match self {
            Distribution::Categorical { logits } => {
                let mut best = 0;
                for (i, l) in logits.iter().enumerate() {
                    if *l > logits[best] {
                        best = i;
                    }
                }
                Action::Discrete(best)
            }
            Distribution::Gaussian { mu, .. } => Action::Continuous(mu.clone()),
        }
    }

    fn check(&self, action: &Action) -> Result<()> {
        match (self, action) {
            (Distribution::Categorical { logits }, Action::Discrete(a)) if *a < logits.len() => Ok(()),
            (Distribution::Gaussian { mu, .. }, Action::Continuous(a)) if a.len() == mu.len() => Ok(()),
            _ => Err(Error::InvalidAction {
                action: format!("{action:?}"),
                detail: match self {
                    Distribution::Categorical { logits } => format!("{} discrete actions", logits.len()),
                    Distribution::Gaussian { mu, .. } => format!("{}-dim continuous", mu.len()),
                },
            }),
        }
    }

    pub fn log_prob(&self, action: &Action) -> Result<f64> {
        self.check(action)?;
        Ok(match (self, action) {
            (Distribution::Categorical { logits }, Action::Discrete(a)) => logits[*a] - log_sum_exp(logits),
            (Distribution::Gaussian { mu, log_std }, Action::Continuous(a)) => a
                .iter()
                .zip(mu)
                .zip(log_std)
                .map(|((a, m), ls)| {
                    let z = (a - m) / ls.exp();
                    -0.5 * z * z - ls - 0.5 * (2.0 * PI).ln()
                })
                .sum(),
            _ => unreachable!("checked above"),
        })
    }

    pub fn entropy(&self) -> f64 {
        match self {
            Distribution::Categorical { logits } => {
                let lse = log_sum_exp(logits);
                logits
                    .iter()
                    .map(|l| {
                        let logp = l - lse;
                        -logp.exp() * logp
                    })
                    .sum()
            }
            Distribution::Gaussian { log_std, .. } => {
                log_std.iter().map(|ls| 0.5 * (2.0 * PI * E).ln() + ls).sum()
            }
        }
    }

    /// ∂ log π(a) / ∂θ_policy.
    pub fn grad_log_prob(&self, action: &Action) -> Result<Vec<f64>> {
        self.check(action)?;
        Ok(match (self, action) {
            (Distribution::Categorical { logits }, Action::Discrete(a)) => {
                let mut g: Vec<f64> = softmax(logits).into_iter().map(|p| -p).collect();
                g[*a] += 1.0;
                g
            }
            (Distribution::Gaussian { mu, log_std }, Action::Continuous(a)) => {
                let n = mu.len();
                let mut g = vec![0.0; 2 * n];
                for i in 0..n {
                    let var = (2.0 * log_std[i]).exp();
                    let diff = a[i] - mu[i];
                    g[i] = diff / var;
                    g[n + i] = diff * diff / var - 1.0;
                }
                g
            }
            _ => unreachable!("checked above"),
        })
    }

    /// ∂ H / ∂θ_policy.
    pub fn grad_entropy(&self) -> Vec<f64> {
        match self {
            Distribution::Categorical { logits } => {
                // ∂H/∂l_j = -p_j (log p_j + H)
                let lse = log_sum_exp(logits);
                let logp: Vec<f64> = logits.iter().map(|l| l - lse).collect();
                let h: f64 = logp.iter().map(|lp| -lp.exp() * lp).sum();
                logp.iter().map(|lp| -lp.exp() * (lp + h)).collect()
            }
            Distribution::Gaussian { mu, .. } => {
                let n = mu.len();
                let mut g = vec![0.0; 2 * n];
                g[n..].iter_mut().for_each(|v| *v = 1.0);
                g
            }
        }
    }
}
