use proptest::prelude::*;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rigkit::labels::{assign_labels, clean_label, info_nce, log_sum_exp, topk_accuracy, EmbeddingTable, JointEmbeddingSet};

fn unit(v: Vec<f64>) -> Vec<f64> {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.into_iter().map(|x| x / n).collect()
}

fn random_unit<R: Rng>(rng: &mut R, dim: usize) -> Vec<f64> {
    unit((0..dim).map(|_| rng.random_range(-1.0..1.0)).collect())
}

/// Direct evaluation of the contrastive loss without max subtraction.
fn naive_info_nce(joints: &[Vec<f64>], labels: &[Vec<f64>], tau: f64) -> f64 {
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let mut total = 0.0;
    for (k, j) in joints.iter().enumerate() {
        let denom: f64 = labels.iter().map(|l| (dot(j, l) / tau).exp()).sum();
        total -= ((dot(j, &labels[k]) / tau).exp() / denom).ln();
    }
    total / joints.len() as f64
}

#[test]
fn info_nce_matches_direct_formula() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..200 {
        let b = rng.random_range(1..12);
        let dim = rng.random_range(2..16);
        let j: Vec<_> = (0..b).map(|_| random_unit(&mut rng, dim)).collect();
        let l: Vec<_> = (0..b).map(|_| random_unit(&mut rng, dim)).collect();
        let tau = rng.random_range(0.05..2.0);
        assert!((info_nce(&j, &l, tau).unwrap() - naive_info_nce(&j, &l, tau)).abs() < 1e-9);
    }
    assert!(info_nce(&[vec![1.0]], &[vec![1.0]], 0.0).is_err());
    assert!(info_nce(&[vec![1.0]], &[], 0.1).is_err());
}

#[test]
fn log_sum_exp_survives_large_inputs() {
    assert!((log_sum_exp(&[1000.0, 1000.0]) - (1000.0 + 2f64.ln())).abs() < 1e-12);
    assert!((log_sum_exp(&[-1000.0]) + 1000.0).abs() < 1e-12);
}

#[test]
fn retrieval_ignores_vocabulary_order_and_finds_exact_matches() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut entries: Vec<(String, Vec<f64>)> = (0..40).map(|i| (format!("L{i:02}"), random_unit(&mut rng, 8))).collect();
    let (table, warnings) = EmbeddingTable::new(8, entries.clone()).unwrap();
    assert!(warnings.is_empty());
    entries.shuffle(&mut rng);
    let (shuffled, _) = EmbeddingTable::new(8, entries.clone()).unwrap();
    let picks: Vec<usize> = (0..10).map(|_| rng.random_range(0..entries.len())).collect();
    let (joints, _) = JointEmbeddingSet::new(8, picks.iter().map(|&i| entries[i].1.clone()).collect()).unwrap();
    let a = assign_labels(&joints, &table, 5).unwrap();
    let b = assign_labels(&joints, &shuffled, 5).unwrap();
    assert_eq!(a, b);
    let truth: Vec<&str> = picks.iter().map(|&i| entries[i].0.as_str()).collect();
    assert_eq!(topk_accuracy(&a, &truth, 1).unwrap(), 1.0);
    assert!(EmbeddingTable::new(8, vec![entries[0].clone(), entries[0].clone()]).is_err());
}

proptest! {
    #[test]
    fn cleaning_is_idempotent(raw in "[A-Za-z0-9_:. -]{0,24}") {
        if let Some(c) = clean_label(&raw) {
            prop_assert!(!c.is_empty());
            prop_assert_eq!(clean_label(&c), Some(c.clone()));
        }
    }

    #[test]
    fn cleaning_never_panics(raw in "\\PC{0,40}") {
        let _ = clean_label(&raw);
    }

    #[test]
    fn accuracy_grows_with_k(seed in any::<u64>(), n in 1usize..20, depth in 1usize..8) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let vocab: Vec<String> = (0..8).map(|i| format!("w{i}")).collect();
        let preds: Vec<Vec<(String, f64)>> = (0..n)
            .map(|_| {
                let mut v = vocab.clone();
                v.shuffle(&mut rng);
                v.into_iter().take(depth).map(|l| (l, 0.0)).collect()
            })
            .collect();
        let truth: Vec<&String> = (0..n).map(|_| vocab.choose(&mut rng).unwrap()).collect();
        let mut last = 0.0;
        for k in 1..=9 {
            let acc = topk_accuracy(&preds, &truth, k).unwrap();
            prop_assert!((0.0..=1.0).contains(&acc));
            prop_assert!(acc >= last);
            last = acc;
        }
    }
}
