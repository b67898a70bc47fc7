use crate::error::{Error, Result};

/// Generalized advantage estimation over one environment's trajectory
/// segment.
///
/// `dones[t]` marks that the episode ended after step `t`, so step `t` does
/// not bootstrap from step `t + 1`. `last_value` is the value of the state
/// following the final step.
///
/// ```text
/// δ_t = r_t + γ (1 - done_t) V_{t+1} - V_t
/// A_t = δ_t + γ λ (1 - done_t) A_{t+1}
/// G_t = A_t + V_t
/// ```
pub fn compute_gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    last_value: f64,
    gamma: f64,
    lambda: f64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let n = rewards.len();
    if values.len() != n || dones.len() != n {
        return Err(Error::LengthMismatch(format!(
            "rewards {n}, values {}, dones {}",
            values.len(),
            dones.len()
        )));
    }
    let mut advantages = vec![0.0; n];
    let mut next_value = last_value;
    let mut next_adv = 0.0;
    for t in (0..n).rev() {
        let live = if dones[t] { 0.0 } else { 1.0 };
        let delta = rewards[t] + gamma * live * next_value - values[t];
        next_adv = delta + gamma * lambda * live * next_adv;
        advantages[t] = next_adv;
        next_value = values[t];
    }
    let returns = advantages.iter().zip(values).map(|(a, v)| a + v).collect();
    Ok((advantages, returns))
}
