//! Planted-structure synthetic dataset generator.
//!
//! Users are split into communities and items into categories; a user
//! purchases items of the matching category with probability `p_in` and
//! all other items with probability `p_out`. The planted labels are
//! returned so clustering quality can be scored against ground truth.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataset::InteractionMatrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct PlantedConfig {
    pub n_users: usize,
    pub n_items: usize,
    pub user_blocks: usize,
    pub item_blocks: usize,
    /// Purchase probability when the user's community matches the item's
    /// category.
    pub p_in: f64,
    /// Purchase probability across blocks.
    pub p_out: f64,
    pub seed: u64,
}

impl Default for PlantedConfig {
    fn default() -> Self {
        Self {
            n_users: 400,
            n_items: 200,
            user_blocks: 4,
            item_blocks: 4,
            p_in: 0.3,
            p_out: 0.01,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PlantedDataset {
    pub interactions: InteractionMatrix,
    /// Community index per user.
    pub user_labels: Vec<u32>,
    /// Category index per item.
    pub item_labels: Vec<u32>,
}

/// Samples a planted block dataset. Blocks are assigned round-robin so
/// every block is populated; matching (community, category) pairs share a
/// block index.
pub fn planted_dataset(cfg: &PlantedConfig) -> Result<PlantedDataset> {
    if cfg.n_users == 0 || cfg.n_items == 0 {
        return Err(Error::InvalidArgument("need users and items".into()));
    }
    if cfg.user_blocks == 0
        || cfg.item_blocks == 0
        || cfg.user_blocks > cfg.n_users
        || cfg.item_blocks > cfg.n_items
    {
        return Err(Error::InvalidArgument("bad block counts".into()));
    }
    for p in [cfg.p_in, cfg.p_out] {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidArgument(
                "probabilities must lie in [0, 1]".into(),
            ));
        }
    }

    let user_labels: Vec<u32> = (0..cfg.n_users)
        .map(|u| (u % cfg.user_blocks) as u32)
        .collect();
    let item_labels: Vec<u32> = (0..cfg.n_items)
        .map(|i| (i % cfg.item_blocks) as u32)
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut records = Vec::new();
    for u in 0..cfg.n_users {
        for i in 0..cfg.n_items {
            let p = if user_labels[u] == item_labels[i] {
                cfg.p_in
            } else {
                cfg.p_out
            };
            if rng.gen_range(0.0..1.0) < p {
                records.push((u as u32, i as u32));
            }
        }
    }
    if records.is_empty() {
        return Err(Error::InvalidArgument(
            "sampled dataset is empty; raise the probabilities".into(),
        ));
    }
    let interactions = InteractionMatrix::from_index_pairs(cfg.n_users, cfg.n_items, records)?;
    Ok(PlantedDataset {
        interactions,
        user_labels,
        item_labels,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn planting_is_deterministic_and_block_heavy() {
        let cfg = PlantedConfig {
            n_users: 60,
            n_items: 40,
            user_blocks: 3,
            item_blocks: 3,
            p_in: 0.4,
            p_out: 0.02,
            seed: 5,
        };
        let a = planted_dataset(&cfg).unwrap();
        let b = planted_dataset(&cfg).unwrap();
        assert_eq!(a.interactions.records(), b.interactions.records());

        let mut in_block = 0usize;
        let mut cross = 0usize;
        for &(u, i) in a.interactions.records() {
            if a.user_labels[u as usize] == a.item_labels[i as usize] {
                in_block += 1;
            } else {
                cross += 1;
            }
        }
        assert!(in_block > cross * 2, "{in_block} in-block vs {cross} cross");
    }

    #[test]
    fn rejects_bad_configs() {
        let bad_p = PlantedConfig {
            p_in: 1.5,
            ..PlantedConfig::default()
        };
        assert!(planted_dataset(&bad_p).is_err());
        let bad_blocks = PlantedConfig {
            user_blocks: 0,
            ..PlantedConfig::default()
        };
        assert!(planted_dataset(&bad_blocks).is_err());
    }
}
