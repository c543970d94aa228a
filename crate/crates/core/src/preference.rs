//! Per-user positive / potential / negative item sets and weighted
//! training-pair sampling.
//!
//! For a user u the positive set is her purchase history, the potential set
//! collects items bought by her latent-community mates plus items sharing a
//! latent category with her purchases, and the negative set is everything
//! else. The negative set is never materialized: it is the complement of
//! the two explicit sets, queried by binary search and sampled by
//! rejection.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::InteractionMatrix;
use crate::error::{Error, Result};
use crate::spectral::ClusterAssignment;

/// Positive and potential item sets for every user; negatives are implicit.
#[derive(Debug, Clone)]
pub struct PreferenceSets {
    n_items: usize,
    /// Sorted positive items per user.
    positive: Vec<Vec<u32>>,
    /// Sorted potential items per user, disjoint from the positives.
    potential: Vec<Vec<u32>>,
}

impl PreferenceSets {
    pub fn n_users(&self) -> usize {
        self.positive.len()
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn positive(&self, user: usize) -> &[u32] {
        &self.positive[user]
    }

    pub fn potential(&self, user: usize) -> &[u32] {
        &self.potential[user]
    }

    pub fn negative_len(&self, user: usize) -> usize {
        self.n_items - self.positive[user].len() - self.potential[user].len()
    }

    pub fn is_positive(&self, user: usize, item: u32) -> bool {
        self.positive[user].binary_search(&item).is_ok()
    }

    pub fn is_potential(&self, user: usize, item: u32) -> bool {
        self.potential[user].binary_search(&item).is_ok()
    }

    pub fn is_negative(&self, user: usize, item: u32) -> bool {
        (item as usize) < self.n_items
            && !self.is_positive(user, item)
            && !self.is_potential(user, item)
    }

    /// Items of the negative complement, materialized; test and diagnostic
    /// use only.
    pub fn negative_items(&self, user: usize) -> Vec<u32> {
        (0..self.n_items as u32)
            .filter(|&i| self.is_negative(user, i))
            .collect()
    }
}

/// One weighted ranking constraint: `user` prefers `preferred` over
/// `dispreferred`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainingPair {
    pub user: u32,
    pub preferred: u32,
    pub dispreferred: u32,
    pub weight: f64,
}

/// Builds preference sets from training interactions and one clustering per
/// side.
pub fn build_preference_sets(
    train: &InteractionMatrix,
    user_clusters: &ClusterAssignment,
    item_clusters: &ClusterAssignment,
) -> Result<PreferenceSets> {
    build_preference_sets_multi(
        train,
        std::slice::from_ref(user_clusters),
        std::slice::from_ref(item_clusters),
    )
}

/// Multi-feature generalization: potential sets union over any number of
/// clusterings per side.
pub fn build_preference_sets_multi(
    train: &InteractionMatrix,
    user_clusterings: &[ClusterAssignment],
    item_clusterings: &[ClusterAssignment],
) -> Result<PreferenceSets> {
    let n_users = train.n_users();
    let n_items = train.n_items();
    for a in user_clusterings {
        if a.labels.len() != n_users {
            return Err(Error::InvalidArgument(format!(
                "user clustering covers {} vertices, expected {n_users}",
                a.labels.len()
            )));
        }
    }
    for a in item_clusterings {
        if a.labels.len() != n_items {
            return Err(Error::InvalidArgument(format!(
                "item clustering covers {} vertices, expected {n_items}",
                a.labels.len()
            )));
        }
    }

    let positive = train.items_by_user();

    // Union of cluster members' purchases, per user cluster of each
    // clustering.
    let mut cluster_items: Vec<Vec<Vec<u32>>> = Vec::with_capacity(user_clusterings.len());
    for assignment in user_clusterings {
        let mut per_cluster: Vec<Vec<u32>> = vec![Vec::new(); assignment.n_clusters];
        for (u, items) in positive.iter().enumerate() {
            per_cluster[assignment.labels[u] as usize].extend_from_slice(items);
        }
        for items in &mut per_cluster {
            items.sort_unstable();
            items.dedup();
        }
        cluster_items.push(per_cluster);
    }
    // Member lists of each item cluster of each clustering.
    let item_members: Vec<Vec<Vec<u32>>> = item_clusterings.iter().map(|a| a.members()).collect();

    let mut potential = Vec::with_capacity(n_users);
    let mut mark = vec![false; n_items];
    for u in 0..n_users {
        let mut touched: Vec<u32> = Vec::new();
        // User-based route: items purchased by any community mate.
        for (ci, assignment) in user_clusterings.iter().enumerate() {
            let cluster = assignment.labels[u] as usize;
            for &i in &cluster_items[ci][cluster] {
                if !mark[i as usize] {
                    mark[i as usize] = true;
                    touched.push(i);
                }
            }
        }
        // Item-based route: category mates of the user's purchases.
        for &pos in &positive[u] {
            for (ci, assignment) in item_clusterings.iter().enumerate() {
                let cluster = assignment.labels[pos as usize] as usize;
                for &i in &item_members[ci][cluster] {
                    if !mark[i as usize] {
                        mark[i as usize] = true;
                        touched.push(i);
                    }
                }
            }
        }
        let mut items: Vec<u32> = touched
            .iter()
            .copied()
            .filter(|&i| positive[u].binary_search(&i).is_err())
            .collect();
        items.sort_unstable();
        for &i in &touched {
            mark[i as usize] = false;
        }
        potential.push(items);
    }

    Ok(PreferenceSets {
        n_items,
        positive,
        potential,
    })
}

/// Draws `m` potential and `m` negative items for one purchase record and
/// emits the weighted pairs: (positive, potential) at `eta1`, (positive,
/// negative) at 1, (potential, negative) at `eta2`. Zero-weight classes are
/// omitted; empty source sets drop the classes that need them. Draws are
/// distinct when the set is large enough, with replacement otherwise.
pub fn sample_training_pairs(
    sets: &PreferenceSets,
    record: (u32, u32),
    m: usize,
    eta1: f64,
    eta2: f64,
    rng: &mut ChaCha8Rng,
) -> Vec<TrainingPair> {
    let (user, item) = record;
    let u = user as usize;
    debug_assert!(sets.is_positive(u, item), "record must be a positive");
    if m == 0 {
        return Vec::new();
    }

    let need_potential = (eta1 > 0.0 || eta2 > 0.0) && !sets.potential(u).is_empty();
    let negative_len = sets.negative_len(u);

    let potentials: Vec<u32> = if need_potential {
        sample_from_slice(sets.potential(u), m, rng)
    } else {
        Vec::new()
    };
    let negatives: Vec<u32> = if negative_len > 0 {
        sample_negatives(sets, u, m, rng)
    } else {
        Vec::new()
    };

    let mut pairs = Vec::new();
    if eta1 > 0.0 {
        for &j in &potentials {
            pairs.push(TrainingPair {
                user,
                preferred: item,
                dispreferred: j,
                weight: eta1,
            });
        }
    }
    for &k in &negatives {
        pairs.push(TrainingPair {
            user,
            preferred: item,
            dispreferred: k,
            weight: 1.0,
        });
    }
    if eta2 > 0.0 {
        for (&j, &k) in potentials.iter().zip(&negatives) {
            pairs.push(TrainingPair {
                user,
                preferred: j,
                dispreferred: k,
                weight: eta2,
            });
        }
    }
    pairs
}

/// Uniform draws from an explicit sorted set: distinct items when the set
/// has at least `m`, i.i.d. with replacement otherwise.
fn sample_from_slice(set: &[u32], m: usize, rng: &mut ChaCha8Rng) -> Vec<u32> {
    let mut out = Vec::with_capacity(m);
    if set.len() >= m {
        let mut chosen = vec![false; set.len()];
        while out.len() < m {
            let idx = rng.gen_range(0..set.len());
            if !chosen[idx] {
                chosen[idx] = true;
                out.push(set[idx]);
            }
        }
    } else {
        for _ in 0..m {
            out.push(set[rng.gen_range(0..set.len())]);
        }
    }
    out
}

/// Uniform draws from the implicit negative complement by rejection.
fn sample_negatives(
    sets: &PreferenceSets,
    user: usize,
    m: usize,
    rng: &mut ChaCha8Rng,
) -> Vec<u32> {
    let n_items = sets.n_items() as u32;
    let negative_len = sets.negative_len(user);
    let distinct = negative_len >= m;
    let mut out: Vec<u32> = Vec::with_capacity(m);
    let mut misses = 0usize;
    while out.len() < m {
        let candidate = rng.gen_range(0..n_items);
        let fresh = !distinct || !out.contains(&candidate);
        if fresh && sets.is_negative(user, candidate) {
            out.push(candidate);
            misses = 0;
        } else {
            misses += 1;
            if misses > 64 {
                // Dense complement: fall back to an indexed uniform draw.
                let all = sets.negative_items(user);
                let remaining: Vec<u32> = if distinct {
                    all.into_iter().filter(|i| !out.contains(i)).collect()
                } else {
                    all
                };
                out.push(remaining[rng.gen_range(0..remaining.len())]);
                misses = 0;
            }
        }
    }
    out
}
