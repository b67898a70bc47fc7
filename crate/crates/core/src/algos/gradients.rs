//! Per-sample functional gradients of the actor-critic objectives.
//!
//! Every function returns ascent directions laid out like θ: policy dims
//! first, value dim last. Trees are fit to these vectors directly, so the
//! ensemble update `θ += rate ∘ h` needs no sign flips. The value dim is the
//! ascent direction of `-½ (G - V)²`, i.e. `G - V`.

use crate::ensemble::OutputLayout;
use crate::error::{Error, Result};
use crate::policy::Action;

/// What one sample contributes to a gradient computation.
#[derive(Debug, Clone, Copy)]
pub struct GradSample<'a> {
    /// Current ensemble output for the sample's state.
    pub theta: &'a [f64],
    pub action: &'a Action,
    pub advantage: f64,
    /// Return target G.
    pub ret: f64,
    /// Log-probability of the action under the behaviour policy.
    pub log_prob_old: f64,
}

fn write_sample(
    layout: &OutputLayout,
    s: &GradSample<'_>,
    policy_weight: f64,
    ent_coef: f64,
    out: &mut [f64],
) -> Result<()> {
    let dist = layout
        .distribution(s.theta)
        .ok_or_else(|| Error::LayoutMismatch("gradient layout has no policy head".into()))?;
    let value_dim = layout
        .value_index()
        .ok_or_else(|| Error::LayoutMismatch("gradient layout has no value dim".into()))?;
    if policy_weight != 0.0 {
        let g = dist.grad_log_prob(s.action)?;
        for (o, gi) in out.iter_mut().zip(&g) {
            *o = policy_weight * gi;
        }
    } else {
        // Validate the action even when its gradient vanishes.
        dist.log_prob(s.action)?;
        out[..dist.param_dim()].iter_mut().for_each(|o| *o = 0.0);
    }
    if ent_coef != 0.0 {
        for (o, gi) in out.iter_mut().zip(dist.grad_entropy()) {
            *o += ent_coef * gi;
        }
    }
    out[value_dim] = s.ret - s.theta[value_dim];
    Ok(())
}

fn per_sample<F>(layout: &OutputLayout, samples: &[GradSample<'_>], mut f: F) -> Result<Vec<f64>>
where
    F: FnMut(&GradSample<'_>, &mut [f64]) -> Result<()>,
{
    let d = layout.output_dim();
    let mut out = vec![0.0; samples.len() * d];
    for (s, row) in samples.iter().zip(out.chunks_exact_mut(d)) {
        if s.theta.len() != d {
            return Err(Error::DimensionMismatch {
                expected: d,
                actual: s.theta.len(),
            });
        }
        f(s, row)?;
    }
    Ok(out)
}

/// Ascent direction of `A log π(a|s) + c H(π(·|s)) - ½ (G - V(s))²`.
pub fn a2c_gradient(layout: &OutputLayout, samples: &[GradSample<'_>], ent_coef: f64) -> Result<Vec<f64>> {
    per_sample(layout, samples, |s, row| write_sample(layout, s, s.advantage, ent_coef, row))
}

/// Probability ratio π_new / π_old.
pub fn ppo_ratio(layout: &OutputLayout, s: &GradSample<'_>) -> Result<f64> {
    let dist = layout
        .distribution(s.theta)
        .ok_or_else(|| Error::LayoutMismatch("gradient layout has no policy head".into()))?;
    Ok((dist.log_prob(s.action)? - s.log_prob_old).exp())
}

/// Ascent direction of `min(ρA, clip(ρ, 1-ε, 1+ε) A) + c H - ½ (G - V)²`.
///
/// The policy part is `ρ A ∇log π` while the unclipped term is the active
/// minimum, and zero once the ratio has moved past the clip range in the
/// direction the advantage favours.
pub fn ppo_gradient(
    layout: &OutputLayout,
    samples: &[GradSample<'_>],
    clip_range: f64,
    ent_coef: f64,
) -> Result<Vec<f64>> {
    per_sample(layout, samples, |s, row| {
        let ratio = ppo_ratio(layout, s)?;
        let a = s.advantage;
        let clipped = (a > 0.0 && ratio > 1.0 + clip_range) || (a < 0.0 && ratio < 1.0 - clip_range);
        let weight = if clipped { 0.0 } else { ratio * a };
        write_sample(layout, s, weight, ent_coef, row)
    })
}

/// Advantage weight `min(exp(A / β), w_max)`.
pub fn awr_weight(advantage: f64, beta: f64, weight_max: f64) -> f64 {
    (advantage / beta).exp().min(weight_max)
}

/// Ascent direction of `w log π(a|s) - ½ (G - V(s))²` with the weight `w`
/// held fixed.
pub fn awr_gradient(
    layout: &OutputLayout,
    samples: &[GradSample<'_>],
    beta: f64,
    weight_max: f64,
) -> Result<Vec<f64>> {
    if !(beta > 0.0) {
        return Err(Error::InvalidConfig(format!("AWR temperature must be > 0, got {beta}")));
    }
    per_sample(layout, samples, |s, row| {
        write_sample(layout, s, awr_weight(s.advantage, beta, weight_max), 0.0, row)
    })
}

/// Rescales the stacked policy gradients of a batch so their L2 norm is at
/// most `policy_max`, and likewise the value gradients with `value_max`.
/// Non-positive limits disable clipping for that group.
pub fn clip_gradients(layout: &OutputLayout, grads: &mut [f64], policy_max: f64, value_max: f64) {
    let d = layout.output_dim();
    let policy = layout.policy_range();
    let clip_group = |grads: &mut [f64], dims: &[usize], limit: f64| {
        if limit <= 0.0 || dims.is_empty() {
            return;
        }
        let norm = grads
            .chunks_exact(d)
            .flat_map(|row| dims.iter().map(move |&k| row[k] * row[k]))
            .sum::<f64>()
            .sqrt();
        if norm > limit {
            let scale = limit / norm;
            for row in grads.chunks_exact_mut(d) {
                for &k in dims {
                    row[k] *= scale;
                }
            }
        }
    };
    let policy_dims: Vec<usize> = policy.collect();
    clip_group(grads, &policy_dims, policy_max);
    if let Some(v) = layout.value_index() {
        clip_group(grads, &[v], value_max);
    }
}

/// Shifts and scales to mean 0 and (population) standard deviation 1. A
/// constant batch is only centred.
pub fn normalize_advantages(advantages: &mut [f64]) {
    if advantages.is_empty() {
        return;
    }
    let n = advantages.len() as f64;
    let mean = advantages.iter().sum::<f64>() / n;
    let var = advantages.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
    let std = var.sqrt();
    for a in advantages.iter_mut() {
        *a -= mean;
        if std > 1e-12 {
            *a /= std;
        }
    }
}
