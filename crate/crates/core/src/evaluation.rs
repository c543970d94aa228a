//! Top-n ranking metrics and the evaluation harness.
//!
//! Per-user protocol: rank the full catalog minus the user's training
//! positives, measure hits against the held-out items, and average over
//! users with at least one held-out item. AUC counts strictly ordered
//! (positive, negative) score pairs; GAUC adds eta-weighted terms for the
//! potential set.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::dataset::InteractionMatrix;
use crate::error::{Error, Result};
use crate::model::{recommend_top_n, Predictor};
use crate::preference::PreferenceSets;

/// Mean metric values over the evaluated users.
#[derive(Debug, Clone, Serialize)]
pub struct EvalReport {
    /// (metric name, mean value), names like `f1@5`, `ndcg@10`, `gauc`.
    pub metrics: Vec<(String, f64)>,
    pub n_values: Vec<usize>,
    pub users_evaluated: usize,
}

impl EvalReport {
    pub fn get(&self, name: &str) -> Option<f64> {
        self.metrics
            .iter()
            .find(|(n, _)| n == name)
            .map(|(_, v)| *v)
    }
}

/// F1 of the first `n` recommendations against a non-empty relevant set.
pub fn f1_at_n(recommended: &[u32], relevant: &[u32], n: usize) -> f64 {
    debug_assert!(!relevant.is_empty());
    debug_assert!(relevant.windows(2).all(|w| w[0] <= w[1]));
    let hits = recommended
        .iter()
        .take(n)
        .filter(|i| relevant.binary_search(i).is_ok())
        .count() as f64;
    let precision = hits / n as f64;
    let recall = hits / relevant.len() as f64;
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

/// Binary-relevance NDCG with 1/log2(rank+1) discounts.
pub fn ndcg_at_n(recommended: &[u32], relevant: &[u32], n: usize) -> f64 {
    debug_assert!(!relevant.is_empty());
    debug_assert!(relevant.windows(2).all(|w| w[0] <= w[1]));
    let mut dcg = 0.0;
    for (rank0, item) in recommended.iter().take(n).enumerate() {
        if relevant.binary_search(item).is_ok() {
            dcg += 1.0 / ((rank0 + 2) as f64).log2();
        }
    }
    let ideal = relevant.len().min(n);
    let idcg: f64 = (0..ideal).map(|k| 1.0 / ((k + 2) as f64).log2()).sum();
    if idcg == 0.0 {
        0.0
    } else {
        dcg / idcg
    }
}

/// Fraction of (positive, negative) score pairs strictly ordered the right
/// way; ties count zero. Both lists must be non-empty.
pub fn auc(pos_scores: &[f64], neg_scores: &[f64]) -> f64 {
    debug_assert!(!pos_scores.is_empty() && !neg_scores.is_empty());
    let mut ordered = 0usize;
    for &p in pos_scores {
        for &n in neg_scores {
            if p > n {
                ordered += 1;
            }
        }
    }
    ordered as f64 / (pos_scores.len() * neg_scores.len()) as f64
}

/// Generalized AUC: mean over users of
/// AUC(I+, I-) + eta1 AUC(I+, P) + eta2 AUC(P, I-),
/// terms with an empty operand set contributing zero. Quadratic per user;
/// diagnostics and small instances only.
pub fn gauc<P: Predictor + ?Sized>(predictor: &P, sets: &PreferenceSets, eta1: f64, eta2: f64) -> f64 {
    let n_users = sets.n_users();
    if n_users == 0 {
        return 0.0;
    }
    let mut total = 0.0;
    for u in 0..n_users {
        let score_all = |items: &[u32]| -> Vec<f64> {
            items.iter().map(|&i| predictor.score(u, i as usize)).collect()
        };
        let pos = score_all(sets.positive(u));
        let pot = score_all(sets.potential(u));
        let neg = score_all(&sets.negative_items(u));
        if !pos.is_empty() && !neg.is_empty() {
            total += auc(&pos, &neg);
        }
        if eta1 != 0.0 && !pos.is_empty() && !pot.is_empty() {
            total += eta1 * auc(&pos, &pot);
        }
        if eta2 != 0.0 && !pot.is_empty() && !neg.is_empty() {
            total += eta2 * auc(&pot, &neg);
        }
    }
    total / n_users as f64
}

/// Ranks the catalog for every user with held-out items (minus the user's
/// training positives) and reports mean `f1@n` / `ndcg@n` for each cutoff.
/// `sample` caps the evaluated user set by a seeded draw.
pub fn evaluate_run<P: Predictor + ?Sized>(
    predictor: &P,
    train: &InteractionMatrix,
    heldout: &InteractionMatrix,
    n_values: &[usize],
    sample: Option<usize>,
    seed: u64,
) -> Result<EvalReport> {
    if heldout.n_records() == 0 {
        return Err(Error::InvalidArgument(
            "held-out split has no records".into(),
        ));
    }
    if heldout.n_users() != train.n_users() || heldout.n_items() != train.n_items() {
        return Err(Error::InvalidArgument(
            "held-out split and train must share one index space".into(),
        ));
    }
    let train_positives = train.items_by_user();
    let heldout_items = heldout.items_by_user();

    // Users with at least one held-out item not excluded by training.
    let mut eligible: Vec<u32> = (0..train.n_users() as u32)
        .filter(|&u| {
            heldout_items[u as usize]
                .iter()
                .any(|i| train_positives[u as usize].binary_search(i).is_err())
        })
        .collect();
    if let Some(cap) = sample {
        if cap == 0 {
            return Err(Error::InvalidArgument("sample size must be positive".into()));
        }
        if cap < eligible.len() {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            eligible.shuffle(&mut rng);
            eligible.truncate(cap);
            eligible.sort_unstable();
        }
    }
    if eligible.is_empty() {
        return Err(Error::InvalidArgument(
            "no users with evaluable held-out items".into(),
        ));
    }

    let max_n = n_values.iter().copied().max().unwrap_or(0);
    let mut f1_sums = vec![0.0; n_values.len()];
    let mut ndcg_sums = vec![0.0; n_values.len()];
    for &u in &eligible {
        let exclude = &train_positives[u as usize];
        let relevant: Vec<u32> = heldout_items[u as usize]
            .iter()
            .copied()
            .filter(|i| exclude.binary_search(i).is_err())
            .collect();
        let recommended = recommend_top_n(predictor, u as usize, max_n, exclude);
        for (slot, &n) in n_values.iter().enumerate() {
            f1_sums[slot] += f1_at_n(&recommended, &relevant, n);
            ndcg_sums[slot] += ndcg_at_n(&recommended, &relevant, n);
        }
    }

    let count = eligible.len() as f64;
    let mut metrics = Vec::with_capacity(2 * n_values.len());
    for (slot, &n) in n_values.iter().enumerate() {
        metrics.push((format!("f1@{n}"), f1_sums[slot] / count));
    }
    for (slot, &n) in n_values.iter().enumerate() {
        metrics.push((format!("ndcg@{n}"), ndcg_sums[slot] / count));
    }
    Ok(EvalReport {
        metrics,
        n_values: n_values.to_vec(),
        users_evaluated: eligible.len(),
    })
}
