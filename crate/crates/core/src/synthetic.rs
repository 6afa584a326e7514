//! Deterministic synthetic interaction logs with two user communities.
//!
//! Users and items are split into two halves. Each user draws most of its
//! items from its own community's half, with popularity decaying by item
//! rank inside each half.

use std::collections::BTreeSet;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;

use crate::data::InteractionDataset;
use crate::rng::{stream, Phase};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CommunitySpec {
    pub n_users: usize,
    pub n_items: usize,
    /// Inclusive range of distinct items per user.
    pub min_items: usize,
    pub max_items: usize,
    /// Probability that a draw comes from the user's own community.
    pub in_community: f64,
    /// Popularity exponent inside a community: weight `1 / (rank + 1)^s`.
    pub popularity_skew: f64,
}

impl CommunitySpec {
    /// The bundled benchmark: 200 users, 100 items.
    pub const BUNDLED: Self = Self {
        n_users: 200,
        n_items: 100,
        min_items: 8,
        max_items: 20,
        in_community: 0.9,
        popularity_skew: 0.8,
    };

    pub fn generate(&self, seed: u64) -> InteractionDataset {
        assert!(
            self.n_users >= 2 && self.n_items >= 2,
            "two communities need two users and two items"
        );
        assert!(self.min_items >= 3 && self.min_items <= self.max_items);
        assert!(
            self.max_items <= self.n_items,
            "users cannot hold more items than exist"
        );
        let half = self.n_items / 2;
        let halves = [0..half, half..self.n_items];
        let samplers: Vec<WeightedIndex<f64>> = halves
            .iter()
            .map(|r| {
                WeightedIndex::new((0..r.len()).map(|j| 1.0 / ((j + 1) as f64).powf(self.popularity_skew)))
                    .expect("positive weights")
            })
            .collect();

        let mut rows = Vec::new();
        let mut ts = 0u64;
        for u in 0..self.n_users {
            let mut rng = stream(seed, Phase::Synthetic, &[u as u64]);
            let community = usize::from(u >= self.n_users / 2);
            let count = rng.random_range(self.min_items..=self.max_items);
            let mut held = BTreeSet::new();
            let mut order = Vec::with_capacity(count);
            while order.len() < count {
                let c = if rng.random::<f64>() < self.in_community {
                    community
                } else {
                    1 - community
                };
                let item = halves[c].start + samplers[c].sample(&mut rng);
                if held.insert(item) {
                    order.push(item);
                }
            }
            for item in order {
                ts += 1;
                rows.push((u as u64, item as u64, ts));
            }
        }
        InteractionDataset::from_raw(rows).expect("generator emits interactions")
    }
}

/// Shorthand for a small two-community dataset with `per_user` items each.
pub fn two_communities(
    n_users: usize,
    n_items: usize,
    per_user: usize,
    in_community: f64,
    seed: u64,
) -> InteractionDataset {
    CommunitySpec {
        n_users,
        n_items,
        min_items: per_user,
        max_items: per_user,
        in_community,
        popularity_skew: 0.8,
    }
    .generate(seed)
}

/// Seed of the bundled benchmark file.
pub const BUNDLED_SEED: u64 = 2024;

/// Text of the bundled benchmark file.
pub fn bundled_tsv() -> String {
    let ds = CommunitySpec::BUNDLED.generate(BUNDLED_SEED);
    format!(
        "# two-community synthetic benchmark: {} users, {} items\n# user\titem\ttimestamp\n{}",
        ds.n_users,
        ds.n_items,
        ds.to_tsv()
    )
}
