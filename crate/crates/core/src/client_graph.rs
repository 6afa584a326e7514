//! A client's local ego-graph and its compact re-indexing for propagation.

use std::collections::BTreeSet;

use rand::Rng;

use crate::data::SplitDataset;
use crate::embedding::EmbeddingTable;
use crate::lightgnn::{BipartiteGraph, PropagationOperator};
use crate::privacy::{mask_interacted_items, sample_pseudo_items};
use crate::server::matcher::UserToken;

/// How a client expands its local graph.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LocalGraphConfig {
    /// Fraction of training items hidden per round, `[0, 1)`.
    pub mask_ratio: f64,
    /// Number of pseudo items per round.
    pub pseudo_items: usize,
    /// One-hop neighbor expansion through the matcher.
    pub neighbor_expansion: bool,
}

impl LocalGraphConfig {
    pub fn plain() -> Self {
        Self {
            mask_ratio: 0.0,
            pseudo_items: 0,
            neighbor_expansion: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ClientGraph {
    pub user: usize,
    pub true_items: BTreeSet<usize>,
    pub pseudo_items: BTreeSet<usize>,
    pub masked_items: BTreeSet<usize>,
    /// `(anonymous neighbor, shared item)` pairs.
    pub neighbor_users: BTreeSet<(UserToken, usize)>,
}

impl ClientGraph {
    /// Items a BPR negative must avoid.
    pub fn is_blocked(&self, item: usize) -> bool {
        self.true_items.contains(&item) || self.pseudo_items.contains(&item) || self.masked_items.contains(&item)
    }
}

/// Mask, then sample pseudo items, then attach matcher neighbors that share
/// a kept item. `neighbors` is the decoded matcher reply for this user.
pub fn build_client_graph<R: Rng + ?Sized>(
    split: &SplitDataset,
    user: usize,
    cfg: &LocalGraphConfig,
    neighbors: &[(UserToken, usize)],
    rng: &mut R,
) -> ClientGraph {
    let train: BTreeSet<usize> = split.train[user].iter().copied().collect();
    let (true_items, masked_items) = mask_interacted_items(&train, cfg.mask_ratio, rng);
    let pseudo_items = sample_pseudo_items(split.n_items, &train, cfg.pseudo_items, rng);
    let neighbor_users = if cfg.neighbor_expansion {
        neighbors
            .iter()
            .filter(|(_, i)| true_items.contains(i))
            .copied()
            .collect()
    } else {
        BTreeSet::new()
    };
    ClientGraph {
        user,
        true_items,
        pseudo_items,
        masked_items,
        neighbor_users,
    }
}

/// Owner of a compact user slot.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LocalUser {
    Own(usize),
    Neighbor(UserToken),
}

/// Compact index space over the nodes a client touches. User slot 0 is the
/// client itself; items are sorted global ids.
#[derive(Clone, Debug)]
pub struct LocalSubgraph {
    pub users: Vec<LocalUser>,
    pub items: Vec<usize>,
    pub op: PropagationOperator,
}

impl LocalSubgraph {
    /// `graph_items` are linked to the client; `extra_items` are present in
    /// the index but isolated (e.g. sampled negatives).
    pub fn new(
        user: usize,
        graph_items: &BTreeSet<usize>,
        neighbor_pairs: &BTreeSet<(UserToken, usize)>,
        extra_items: &BTreeSet<usize>,
        n_layers: usize,
    ) -> Self {
        let items: Vec<usize> = graph_items.union(extra_items).copied().collect();
        let neighbor_tokens: BTreeSet<UserToken> = neighbor_pairs.iter().map(|p| p.0).collect();
        let mut users = vec![LocalUser::Own(user)];
        users.extend(neighbor_tokens.iter().map(|&t| LocalUser::Neighbor(t)));

        let item_slot = |i: usize| items.binary_search(&i).expect("item indexed");
        let mut edges: Vec<(usize, usize)> = graph_items.iter().map(|&i| (0, item_slot(i))).collect();
        for (tok, item) in neighbor_pairs {
            let slot = 1 + neighbor_tokens.range(..tok).count();
            edges.push((slot, item_slot(*item)));
        }
        let graph = BipartiteGraph::new(users.len(), items.len(), edges).expect("compact edges are in range");
        let op = PropagationOperator::new(&graph, n_layers);
        Self { users, items, op }
    }

    pub fn item_slot(&self, item: usize) -> Option<usize> {
        self.items.binary_search(&item).ok()
    }

    /// Gather raw rows into a compact table.
    pub fn gather<'a>(
        &self,
        own_row: &[f64],
        item_rows: &[f64],
        dim: usize,
        neighbor_row: impl Fn(&UserToken) -> &'a [f64],
    ) -> EmbeddingTable {
        let mut users = Vec::with_capacity(self.users.len() * dim);
        for u in &self.users {
            match u {
                LocalUser::Own(_) => users.extend_from_slice(own_row),
                LocalUser::Neighbor(t) => users.extend_from_slice(neighbor_row(t)),
            }
        }
        let mut items = Vec::with_capacity(self.items.len() * dim);
        for &i in &self.items {
            items.extend_from_slice(&item_rows[i * dim..(i + 1) * dim]);
        }
        EmbeddingTable::from_parts(dim, self.users.len(), self.items.len(), users, items)
            .expect("gathered rows have matching shape")
    }
}
