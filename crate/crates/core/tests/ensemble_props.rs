use std::time::Instant;

use gbrl_core::features::{FeatureKind, FeatureSchema, FeatureVector};
use gbrl_core::tree::{fit_tree, DecisionTree, TreeFitConfig};
use gbrl_core::{Error, OutputLayout, SharedACEnsemble};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Three numeric slots and one categorical slot with four tokens.
fn schema() -> FeatureSchema {
    let mut s = FeatureSchema::new();
    for i in 0..3 {
        s.push(format!("x{i}"), FeatureKind::Numerical);
    }
    let c = s.push("colour", FeatureKind::Categorical);
    for tok in ["red", "green", "blue", "cat"] {
        s.intern_token(c, tok).unwrap();
    }
    s
}

fn random_input(rng: &mut impl Rng) -> FeatureVector {
    FeatureVector::from_raw(vec![
        rng.random_range(-2.0..2.0),
        rng.random_range(-2.0..2.0),
        rng.random_range(-2.0..2.0),
        f64::from(rng.random_range(0u32..4)),
    ])
}

fn random_tree(rng: &mut impl Rng, schema: &FeatureSchema, d: usize, depth: usize) -> DecisionTree {
    let xs: Vec<FeatureVector> = (0..64).map(|_| random_input(rng)).collect();
    let refs: Vec<&FeatureVector> = xs.iter().collect();
    let grads: Vec<f64> = (0..64 * d).map(|_| rng.random_range(-1.0..1.0)).collect();
    let cfg = TreeFitConfig {
        max_depth: depth,
        min_samples_leaf: 1,
        num_bins: 64,
        output_dim: d,
    };
    fit_tree(schema, &refs, &grads, &cfg).unwrap()
}

fn gaussian_ensemble(rates: Vec<f64>) -> SharedACEnsemble {
    let layout = OutputLayout::gaussian(2);
    SharedACEnsemble::new(schema(), layout, vec![0.1, -0.2, -1.0, -1.5, 3.0], rates).unwrap()
}

const RATES: [f64; 5] = [0.03, 0.05, 0.002, 0.004, 0.01];

#[test]
fn prediction_is_theta0_plus_rate_weighted_tree_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(51);
    let mut ens = gaussian_ensemble(RATES.to_vec());
    let trees: Vec<DecisionTree> = (0..30).map(|_| random_tree(&mut rng, ens.schema(), 5, 3)).collect();
    for t in &trees {
        ens.add_tree(t.clone()).unwrap();
    }
    for _ in 0..200 {
        let x = random_input(&mut rng);
        let mut expected = ens.theta0().to_vec();
        for t in &trees {
            for (k, h) in t.predict(&x).iter().enumerate() {
                expected[k] += RATES[k] * h;
            }
        }
        for (a, b) in ens.predict_theta(&x).iter().zip(&expected) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }
}

#[test]
fn scaling_a_rate_scales_only_its_dim() {
    let mut rng = ChaCha8Rng::seed_from_u64(52);
    let mut base = gaussian_ensemble(RATES.to_vec());
    let mut scaled_rates = RATES.to_vec();
    scaled_rates[0] *= 3.0;
    let mut scaled = gaussian_ensemble(scaled_rates);
    for _ in 0..10 {
        let t = random_tree(&mut rng, base.schema(), 5, 4);
        base.add_tree(t.clone()).unwrap();
        scaled.add_tree(t).unwrap();
    }
    for _ in 0..100 {
        let x = random_input(&mut rng);
        let (a, b) = (base.predict_theta(&x), scaled.predict_theta(&x));
        let theta0 = base.theta0()[0];
        assert!(((b[0] - theta0) - 3.0 * (a[0] - theta0)).abs() < 1e-12);
        assert_eq!(a[1..], b[1..]);
    }
}

#[test]
fn serialization_round_trips_bit_exactly() {
    let mut rng = ChaCha8Rng::seed_from_u64(53);
    let mut ens = gaussian_ensemble(RATES.to_vec());
    for m in 0..25 {
        let t = random_tree(&mut rng, ens.schema(), 5, 5);
        ens.add_tree_scaled(t, 1.0 - m as f64 / 25.0).unwrap();
    }
    let bytes = ens.to_bytes();
    let back = SharedACEnsemble::from_bytes(&bytes).unwrap();
    assert_eq!(back, ens);
    assert_eq!(back.to_bytes(), bytes);
    for _ in 0..100 {
        let x = random_input(&mut rng);
        let (a, b) = (ens.predict_theta(&x), back.predict_theta(&x));
        assert!(a.iter().zip(&b).all(|(p, q)| p.to_bits() == q.to_bits()));
    }

    // Growing the restored copy matches growing the original.
    let extra = random_tree(&mut rng, ens.schema(), 5, 3);
    let mut grown = back;
    grown.add_tree(extra.clone()).unwrap();
    ens.add_tree(extra).unwrap();
    assert_eq!(grown.to_bytes(), ens.to_bytes());
}

#[test]
fn damaged_files_are_rejected() {
    let mut rng = ChaCha8Rng::seed_from_u64(54);
    let mut ens = gaussian_ensemble(RATES.to_vec());
    ens.add_tree(random_tree(&mut rng, ens.schema(), 5, 3)).unwrap();
    let bytes = ens.to_bytes();
    for i in [0, 9, 20, bytes.len() / 2, bytes.len() - 1] {
        let mut bad = bytes.clone();
        bad[i] ^= 0x10;
        assert!(SharedACEnsemble::from_bytes(&bad).is_err(), "flipped byte {i}");
    }
    assert!(SharedACEnsemble::from_bytes(&bytes[..bytes.len() - 3]).is_err());
    let mut future = bytes.clone();
    future[8..12].copy_from_slice(&2u32.to_le_bytes());
    assert!(matches!(
        SharedACEnsemble::from_bytes(&future),
        Err(Error::VersionMismatch { found: 2, expected: 1 })
    ));
}

#[test]
fn batch_prediction_matches_single_and_ignores_order() {
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    let mut ens = gaussian_ensemble(RATES.to_vec());
    for _ in 0..40 {
        ens.add_tree(random_tree(&mut rng, ens.schema(), 5, 4)).unwrap();
    }
    let xs: Vec<FeatureVector> = (0..300).map(|_| random_input(&mut rng)).collect();
    let refs: Vec<&FeatureVector> = xs.iter().collect();
    let batch = ens.predict_theta_batch(&refs);
    for (x, theta) in xs.iter().zip(&batch) {
        assert_eq!(&ens.predict_theta(x), theta);
    }
    let reversed: Vec<&FeatureVector> = refs.iter().rev().copied().collect();
    let mut back = ens.predict_theta_batch(&reversed);
    back.reverse();
    assert_eq!(back, batch);
}

#[test]
fn large_ensembles_predict_batches_quickly() {
    let mut rng = ChaCha8Rng::seed_from_u64(56);
    let s = schema();
    let pool: Vec<DecisionTree> = (0..50).map(|_| random_tree(&mut rng, &s, 3, 4)).collect();
    let mut ens = SharedACEnsemble::new(s, OutputLayout::discrete(2), vec![0.0; 3], vec![0.05; 3]).unwrap();
    for m in 0..10_000 {
        ens.add_tree(pool[m % pool.len()].clone()).unwrap();
    }
    let xs: Vec<FeatureVector> = (0..1024).map(|_| random_input(&mut rng)).collect();
    let refs: Vec<&FeatureVector> = xs.iter().collect();
    let start = Instant::now();
    let out = ens.predict_theta_batch(&refs);
    let elapsed = start.elapsed();
    println!("1024 rows x 10000 trees: {elapsed:?}");
    assert_eq!(out.len(), 1024);
    assert!(elapsed.as_secs_f64() < 5.0, "took {elapsed:?}");
}

#[test]
fn importance_ranks_the_informative_feature_first() {
    let mut rng = ChaCha8Rng::seed_from_u64(57);
    let s = schema();
    let xs: Vec<FeatureVector> = (0..256).map(|_| random_input(&mut rng)).collect();
    let refs: Vec<&FeatureVector> = xs.iter().collect();
    // Targets depend on the colour slot only, plus a little noise.
    let grads: Vec<f64> = xs
        .iter()
        .flat_map(|x| {
            let c = if x.values()[3] == 3.0 { 2.0 } else { -1.0 };
            [c + rng.random_range(-0.05..0.05), 0.0, 0.0]
        })
        .collect();
    let cfg = TreeFitConfig {
        max_depth: 2,
        min_samples_leaf: 1,
        num_bins: 64,
        output_dim: 3,
    };
    let mut ens = SharedACEnsemble::new(s, OutputLayout::discrete(2), vec![0.0; 3], vec![0.1; 3]).unwrap();
    for _ in 0..3 {
        ens.add_tree(fit_tree(ens.schema(), &refs, &grads, &cfg).unwrap()).unwrap();
    }
    let top = ens.top_features(4);
    assert_eq!(top[0].0, 3);
    let imp = ens.feature_importance();
    assert!(imp[3] > 10.0 * imp[..3].iter().sum::<f64>());
    assert!(imp.iter().all(|v| *v >= 0.0));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn adding_trees_one_at_a_time_is_additive(seed in any::<u64>(), n in 1usize..20) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut ens = gaussian_ensemble(RATES.to_vec());
        let x = random_input(&mut rng);
        let mut running = ens.predict_theta(&x);
        for _ in 0..n {
            let t = random_tree(&mut rng, ens.schema(), 5, 3);
            let h = t.predict(&x).to_vec();
            ens.add_tree(t).unwrap();
            for k in 0..5 {
                running[k] += RATES[k] * h[k];
            }
            for (a, b) in ens.predict_theta(&x).iter().zip(&running) {
                prop_assert!((a - b).abs() < 1e-12);
            }
        }
    }
}
