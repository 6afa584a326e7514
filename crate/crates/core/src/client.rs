//! Simulated client: local graph construction, BPR training on the local
//! subgraph, privacy of the upload, and the three-way personalization mix.

use std::collections::{BTreeMap, BTreeSet};

use rand::Rng;

use crate::client_graph::{build_client_graph, ClientGraph, LocalGraphConfig, LocalSubgraph};
use crate::data::SplitDataset;
use crate::error::{Error, Result};
use crate::lightgnn::{bpr_loss_and_gradients, BprTriple, GradientUpdate};
use crate::privacy::{ldp_randomize, pseudo_item_gradients, LdpConfig};
use crate::server::matcher::UserToken;

/// Weights of the local, cluster and global item tables.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PersonalizationWeights {
    pub alpha_local: f64,
    pub alpha_cluster: f64,
    pub alpha_global: f64,
}

impl Default for PersonalizationWeights {
    fn default() -> Self {
        Self {
            alpha_local: 1.0 / 3.0,
            alpha_cluster: 1.0 / 3.0,
            alpha_global: 1.0 / 3.0,
        }
    }
}

impl PersonalizationWeights {
    pub fn global_only() -> Self {
        Self {
            alpha_local: 0.0,
            alpha_cluster: 0.0,
            alpha_global: 1.0,
        }
    }

    pub fn is_global_only(&self) -> bool {
        self.alpha_local == 0.0 && self.alpha_cluster == 0.0 && self.alpha_global == 1.0
    }
}

/// A client's mixed item table and its own user row.
#[derive(Clone, Debug, PartialEq)]
pub struct PersonalizedModel {
    pub dim: usize,
    pub item_rows: Vec<f64>,
    pub user_row: Vec<f64>,
}

/// `a_local * local + a_cluster * cluster + a_global * global` over item
/// rows; the user row comes from the local model.
pub fn personalize(
    local: &[f64],
    cluster: &[f64],
    global: &[f64],
    user_row: &[f64],
    w: &PersonalizationWeights,
) -> Result<PersonalizedModel> {
    if local.len() != cluster.len() || local.len() != global.len() {
        return Err(Error::ShapeMismatch(format!(
            "item tables have {}, {} and {} values",
            local.len(),
            cluster.len(),
            global.len()
        )));
    }
    let dim = user_row.len();
    if dim == 0 || local.len() % dim != 0 {
        return Err(Error::ShapeMismatch(format!(
            "user row of length {dim} does not divide item table of {} values",
            local.len()
        )));
    }
    if w.is_global_only() {
        return Ok(PersonalizedModel {
            dim,
            item_rows: global.to_vec(),
            user_row: user_row.to_vec(),
        });
    }
    let item_rows = local
        .iter()
        .zip(cluster)
        .zip(global)
        .map(|((l, c), g)| w.alpha_local * l + w.alpha_cluster * c + w.alpha_global * g)
        .collect();
    Ok(PersonalizedModel {
        dim,
        item_rows,
        user_row: user_row.to_vec(),
    })
}

/// Draw `batch` triples: positives uniform over the kept true items,
/// negatives uniform over items that are neither true, pseudo nor masked.
pub fn sample_bpr_triples<R: Rng + ?Sized>(
    cg: &ClientGraph,
    n_items: usize,
    batch: usize,
    rng: &mut R,
) -> Result<Vec<BprTriple>> {
    if cg.true_items.is_empty() {
        return Err(Error::NoPositiveItem);
    }
    let positives: Vec<usize> = cg.true_items.iter().copied().collect();
    let blocked = cg.true_items.len() + cg.pseudo_items.len() + cg.masked_items.len();
    if blocked >= n_items {
        return Err(Error::NoNegativeItem { user: cg.user });
    }
    // Rejection sampling is cheap while most of the catalog is valid.
    let negatives: Option<Vec<usize>> =
        (2 * blocked > n_items).then(|| (0..n_items).filter(|&i| !cg.is_blocked(i)).collect());

    let mut out = Vec::with_capacity(batch);
    for _ in 0..batch {
        let pos_item = positives[rng.random_range(0..positives.len())];
        let neg_item = match &negatives {
            Some(pool) => pool[rng.random_range(0..pool.len())],
            None => loop {
                let j = rng.random_range(0..n_items);
                if !cg.is_blocked(j) {
                    break j;
                }
            },
        };
        out.push(BprTriple {
            user: cg.user,
            pos_item,
            neg_item,
        });
    }
    Ok(out)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ClientConfig {
    pub n_layers: usize,
    /// L2 weight on touched raw rows.
    pub gamma: f64,
    /// Triples per round; `None` means one per kept true item.
    pub batch_size: Option<usize>,
    pub graph: LocalGraphConfig,
    pub ldp: LdpConfig,
}

/// Read-only inputs a client downloads for one round.
pub struct ClientContext<'a> {
    pub split: &'a SplitDataset,
    pub dim: usize,
    /// Global item table, row-major.
    pub item_rows: &'a [f64],
    pub own_user_row: &'a [f64],
    /// Decoded matcher reply for this user.
    pub neighbors: &'a [(UserToken, usize)],
    pub neighbor_row: &'a (dyn Fn(&UserToken) -> &'a [f64] + Sync),
}

/// Everything one `client_update` produces.
#[derive(Clone, Debug)]
pub struct ClientOutcome {
    /// Server-visible item gradients after pseudo items and LDP.
    pub update: GradientUpdate,
    /// Gradient of the client's own user row; applied locally.
    pub user_grad: Vec<f64>,
    /// Pre-privacy gradients of real items, for the local fine-tuned model.
    pub local_item_grads: BTreeMap<usize, Vec<f64>>,
    pub graph: ClientGraph,
    pub triples: Vec<BprTriple>,
    pub loss: f64,
}

/// One local training pass for `user` against the downloaded tables.
pub fn client_update<R: Rng + ?Sized>(
    user: usize,
    ctx: &ClientContext<'_>,
    cfg: &ClientConfig,
    rng: &mut R,
) -> Result<ClientOutcome> {
    let graph = build_client_graph(ctx.split, user, &cfg.graph, ctx.neighbors, rng);
    let batch = cfg.batch_size.unwrap_or(graph.true_items.len()).max(1);
    let triples = sample_bpr_triples(&graph, ctx.split.n_items, batch, rng)?;

    let negatives: BTreeSet<usize> = triples.iter().map(|t| t.neg_item).collect();
    let linked: BTreeSet<usize> = graph.true_items.union(&graph.pseudo_items).copied().collect();
    let sub = LocalSubgraph::new(user, &linked, &graph.neighbor_users, &negatives, cfg.n_layers);
    let raw = sub.gather(ctx.own_user_row, ctx.item_rows, ctx.dim, ctx.neighbor_row);
    let slot = |i: usize| sub.item_slot(i).expect("triple item indexed");
    let local_triples: Vec<BprTriple> = triples
        .iter()
        .map(|t| BprTriple {
            user: 0,
            pos_item: slot(t.pos_item),
            neg_item: slot(t.neg_item),
        })
        .collect();

    let (loss, grads) = bpr_loss_and_gradients(&sub.op, &raw, &local_triples, cfg.gamma);
    let user_grad = grads.user_grads.get(&0).cloned().unwrap_or_else(|| vec![0.0; ctx.dim]);
    let local_item_grads: BTreeMap<usize, Vec<f64>> = grads
        .item_grads
        .into_iter()
        .map(|(s, g)| (sub.items[s], g))
        .filter(|(i, _)| !graph.pseudo_items.contains(i))
        .collect();

    let mut update = GradientUpdate::empty(ctx.dim);
    update.data_count = graph.true_items.len();
    update.item_grads = local_item_grads.clone();
    update.item_grads.extend(pseudo_item_gradients(
        &graph.pseudo_items,
        &local_item_grads,
        ctx.dim,
        rng,
    ));
    if cfg.ldp.enabled {
        update = ldp_randomize(&update, &cfg.ldp, rng);
    }

    Ok(ClientOutcome {
        update,
        user_grad,
        local_item_grads,
        graph,
        triples,
        loss,
    })
}
