mod common;

use common::{discounted_returns, gae_direct, random_segment};
use gbrl_core::algos::{compute_gae, normalize_advantages};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn lambda_one_is_monte_carlo_minus_value() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    for _ in 0..500 {
        let s = random_segment(&mut rng);
        let (adv, ret) = compute_gae(&s.rewards, &s.values, &s.dones, s.last, s.gamma, 1.0).unwrap();
        let mc = discounted_returns(&s.rewards, &s.dones, s.last, s.gamma);
        for t in 0..adv.len() {
            assert!((adv[t] - (mc[t] - s.values[t])).abs() < 1e-10);
            assert!((ret[t] - mc[t]).abs() < 1e-10);
        }
    }
}

#[test]
fn lambda_zero_is_the_td_residual() {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    for _ in 0..500 {
        let s = random_segment(&mut rng);
        let (adv, _) = compute_gae(&s.rewards, &s.values, &s.dones, s.last, s.gamma, 0.0).unwrap();
        let n = adv.len();
        for t in 0..n {
            let next = if t + 1 < n { s.values[t + 1] } else { s.last };
            let live = if s.dones[t] { 0.0 } else { 1.0 };
            let delta = s.rewards[t] + s.gamma * live * next - s.values[t];
            assert!((adv[t] - delta).abs() < 1e-10);
        }
    }
}

#[test]
fn recursion_matches_direct_summation() {
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    for _ in 0..1000 {
        let s = random_segment(&mut rng);
        let lambda = rng.random_range(0.0..=1.0);
        let (adv, ret) = compute_gae(&s.rewards, &s.values, &s.dones, s.last, s.gamma, lambda).unwrap();
        let direct = gae_direct(&s.rewards, &s.values, &s.dones, s.last, s.gamma, lambda);
        for t in 0..adv.len() {
            assert!((adv[t] - direct[t]).abs() < 1e-10);
            assert!((ret[t] - (direct[t] + s.values[t])).abs() < 1e-10);
        }
    }
}

#[test]
fn mismatched_lengths_are_rejected() {
    assert!(compute_gae(&[1.0, 2.0], &[0.0], &[false, false], 0.0, 0.9, 0.9).is_err());
}

proptest! {
    #[test]
    fn normalized_advantages_have_zero_mean_unit_std(
        mut adv in prop::collection::vec(-100.0f64..100.0, 2..200)
    ) {
        let spread = adv.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - adv.iter().cloned().fold(f64::INFINITY, f64::min);
        prop_assume!(spread > 1e-6);
        normalize_advantages(&mut adv);
        let n = adv.len() as f64;
        let mean = adv.iter().sum::<f64>() / n;
        let std = (adv.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n).sqrt();
        prop_assert!(mean.abs() < 1e-9);
        prop_assert!((std - 1.0).abs() < 1e-9);
    }
}
