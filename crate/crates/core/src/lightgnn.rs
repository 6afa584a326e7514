//! Linear graph propagation over the user-item bipartite graph.
//!
//! One propagation step maps user `u` to `sum_{i in N(u)} x_i / sqrt(|N(u)| |N(i)|)`
//! and item `i` symmetrically. There is no transform, no nonlinearity and no
//! self-loop; the readout is the mean of layers `0..=L`. Because the stacked
//! normalized adjacency is symmetric, the forward map is its own adjoint, and
//! gradients with respect to the raw table are obtained by running the same
//! propagation on the gradient with respect to the final table.

use std::collections::{BTreeMap, BTreeSet};

use crate::embedding::{dot, EmbeddingTable};
use crate::error::{Error, Result};

/// Deduplicated user-item edge list.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BipartiteGraph {
    pub n_users: usize,
    pub n_items: usize,
    edges: Vec<(usize, usize)>,
}

impl BipartiteGraph {
    pub fn new(n_users: usize, n_items: usize, edges: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut edges: Vec<(usize, usize)> = edges.into_iter().collect();
        if let Some(&(user, item)) = edges.iter().find(|&&(u, i)| u >= n_users || i >= n_items) {
            return Err(Error::EdgeOutOfRange {
                user,
                item,
                n_users,
                n_items,
            });
        }
        edges.sort_unstable();
        edges.dedup();
        Ok(Self {
            n_users,
            n_items,
            edges,
        })
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn contains(&self, user: usize, item: usize) -> bool {
        self.edges.binary_search(&(user, item)).is_ok()
    }
}

#[derive(Clone, Debug)]
struct Adjacency {
    offsets: Vec<usize>,
    targets: Vec<usize>,
    weights: Vec<f64>,
}

impl Adjacency {
    fn neighbors(&self, node: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (a, b) = (self.offsets[node], self.offsets[node + 1]);
        self.targets[a..b]
            .iter()
            .copied()
            .zip(self.weights[a..b].iter().copied())
    }
}

/// Symmetric-normalized bipartite propagation with `n_layers` steps.
#[derive(Clone, Debug)]
pub struct PropagationOperator {
    n_users: usize,
    n_items: usize,
    n_layers: usize,
    edges: Vec<(usize, usize)>,
    degree_u: Vec<usize>,
    degree_i: Vec<usize>,
    user_adj: Adjacency,
    item_adj: Adjacency,
}

impl PropagationOperator {
    pub fn new(graph: &BipartiteGraph, n_layers: usize) -> Self {
        let (n_users, n_items) = (graph.n_users, graph.n_items);
        let mut degree_u = vec![0usize; n_users];
        let mut degree_i = vec![0usize; n_items];
        for &(u, i) in graph.edges() {
            degree_u[u] += 1;
            degree_i[i] += 1;
        }
        let weight = |u: usize, i: usize| 1.0 / ((degree_u[u] * degree_i[i]) as f64).sqrt();

        // Edges are sorted by (user, item), so the user side is already CSR order.
        let mut user_offsets = vec![0usize; n_users + 1];
        for u in 0..n_users {
            user_offsets[u + 1] = user_offsets[u] + degree_u[u];
        }
        let user_adj = Adjacency {
            offsets: user_offsets,
            targets: graph.edges().iter().map(|&(_, i)| i).collect(),
            weights: graph.edges().iter().map(|&(u, i)| weight(u, i)).collect(),
        };

        let mut item_offsets = vec![0usize; n_items + 1];
        for i in 0..n_items {
            item_offsets[i + 1] = item_offsets[i] + degree_i[i];
        }
        let mut fill = item_offsets.clone();
        let mut targets = vec![0usize; graph.n_edges()];
        let mut weights = vec![0.0; graph.n_edges()];
        for &(u, i) in graph.edges() {
            targets[fill[i]] = u;
            weights[fill[i]] = weight(u, i);
            fill[i] += 1;
        }
        let item_adj = Adjacency {
            offsets: item_offsets,
            targets,
            weights,
        };

        Self {
            n_users,
            n_items,
            n_layers,
            edges: graph.edges().to_vec(),
            degree_u,
            degree_i,
            user_adj,
            item_adj,
        }
    }

    pub fn from_edges(
        n_users: usize,
        n_items: usize,
        edges: impl IntoIterator<Item = (usize, usize)>,
        n_layers: usize,
    ) -> Result<Self> {
        Ok(Self::new(&BipartiteGraph::new(n_users, n_items, edges)?, n_layers))
    }

    pub fn n_layers(&self) -> usize {
        self.n_layers
    }

    pub fn n_users(&self) -> usize {
        self.n_users
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn degree_user(&self, u: usize) -> usize {
        self.degree_u[u]
    }

    pub fn degree_item(&self, i: usize) -> usize {
        self.degree_i[i]
    }

    fn check_shape(&self, table: &EmbeddingTable) {
        assert!(
            table.n_users() == self.n_users && table.n_items() == self.n_items,
            "table shape {}x{} does not match operator {}x{}",
            table.n_users(),
            table.n_items(),
            self.n_users,
            self.n_items
        );
    }

    /// One application of the normalized adjacency.
    pub fn step(&self, x: &EmbeddingTable) -> EmbeddingTable {
        self.check_shape(x);
        let d = x.dim();
        let mut out = EmbeddingTable::zeros(d, self.n_users, self.n_items);
        for u in 0..self.n_users {
            let row = out.user_mut(u);
            for (i, w) in self.user_adj.neighbors(u) {
                for (r, v) in row.iter_mut().zip(x.item(i)) {
                    *r += w * v;
                }
            }
        }
        for i in 0..self.n_items {
            let row = out.item_mut(i);
            for (u, w) in self.item_adj.neighbors(i) {
                for (r, v) in row.iter_mut().zip(x.user(u)) {
                    *r += w * v;
                }
            }
        }
        out
    }

    /// Layers `0..=L`; layer 0 is the input.
    pub fn propagate(&self, table: &EmbeddingTable) -> Vec<EmbeddingTable> {
        self.check_shape(table);
        let mut layers = Vec::with_capacity(self.n_layers + 1);
        layers.push(table.clone());
        for l in 0..self.n_layers {
            let next = self.step(&layers[l]);
            layers.push(next);
        }
        layers
    }

    /// `readout(propagate(table))` without keeping every layer alive.
    pub fn forward(&self, table: &EmbeddingTable) -> EmbeddingTable {
        self.check_shape(table);
        let mut acc = table.clone();
        let mut cur = table.clone();
        for _ in 0..self.n_layers {
            cur = self.step(&cur);
            acc.add_scaled(&cur, 1.0);
        }
        acc.scale(1.0 / (self.n_layers + 1) as f64);
        acc
    }

    /// Pull a gradient with respect to the final table back to the raw table.
    ///
    /// The operator is self-adjoint, so this is `forward` applied to the
    /// gradient.
    pub fn adjoint(&self, grad_final: &EmbeddingTable) -> EmbeddingTable {
        self.forward(grad_final)
    }

    /// Nodes within `L` hops of the seeds: `(users, items)` masks.
    pub fn reach(&self, seed_users: &[bool], seed_items: &[bool]) -> (Vec<bool>, Vec<bool>) {
        let mut users = seed_users.to_vec();
        let mut items = seed_items.to_vec();
        let mut frontier_u: Vec<usize> = (0..self.n_users).filter(|&u| users[u]).collect();
        let mut frontier_i: Vec<usize> = (0..self.n_items).filter(|&i| items[i]).collect();
        for _ in 0..self.n_layers {
            let mut next_u = Vec::new();
            let mut next_i = Vec::new();
            for &u in &frontier_u {
                for (i, _) in self.user_adj.neighbors(u) {
                    if !items[i] {
                        items[i] = true;
                        next_i.push(i);
                    }
                }
            }
            for &i in &frontier_i {
                for (u, _) in self.item_adj.neighbors(i) {
                    if !users[u] {
                        users[u] = true;
                        next_u.push(u);
                    }
                }
            }
            if next_u.is_empty() && next_i.is_empty() {
                break;
            }
            frontier_u = next_u;
            frontier_i = next_i;
        }
        (users, items)
    }
}

/// Elementwise mean over the layers.
pub fn readout(layers: &[EmbeddingTable]) -> EmbeddingTable {
    assert!(!layers.is_empty(), "readout needs at least one layer");
    let mut acc = layers[0].clone();
    for l in &layers[1..] {
        acc.add_scaled(l, 1.0);
    }
    acc.scale(1.0 / layers.len() as f64);
    acc
}

/// Inner-product preference score.
pub fn score(final_table: &EmbeddingTable, user: usize, item: usize) -> f64 {
    dot(final_table.user(user), final_table.item(item))
}

/// `(user, positive item, negative item)` for the pairwise ranking loss.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct BprTriple {
    pub user: usize,
    pub pos_item: usize,
    pub neg_item: usize,
}

/// Sparse gradient over embedding rows plus the sender's data count.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct GradientUpdate {
    pub dim: usize,
    pub user_grads: BTreeMap<usize, Vec<f64>>,
    pub item_grads: BTreeMap<usize, Vec<f64>>,
    pub data_count: usize,
}

impl GradientUpdate {
    pub fn empty(dim: usize) -> Self {
        Self { dim, ..Self::default() }
    }

    pub fn is_finite(&self) -> bool {
        self.user_grads
            .values()
            .chain(self.item_grads.values())
            .flatten()
            .all(|v| v.is_finite())
    }

    /// Dense copy, zero outside the support.
    pub fn to_dense(&self, n_users: usize, n_items: usize) -> EmbeddingTable {
        let mut t = EmbeddingTable::zeros(self.dim, n_users, n_items);
        for (&u, g) in &self.user_grads {
            t.user_mut(u).copy_from_slice(g);
        }
        for (&i, g) in &self.item_grads {
            t.item_mut(i).copy_from_slice(g);
        }
        t
    }
}

/// `-ln(sigmoid(x))`, stable for large `|x|`.
#[inline]
pub fn neg_log_sigmoid(x: f64) -> f64 {
    if x > 0.0 {
        (-x).exp().ln_1p()
    } else {
        -x + x.exp().ln_1p()
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn touched_rows(triples: &[BprTriple]) -> (BTreeSet<usize>, BTreeSet<usize>) {
    let users = triples.iter().map(|t| t.user).collect();
    let items = triples.iter().flat_map(|t| [t.pos_item, t.neg_item]).collect();
    (users, items)
}

fn sq_norm(v: &[f64]) -> f64 {
    dot(v, v)
}

/// Mean pairwise ranking loss over `triples` on the final table, plus
/// `gamma` times the squared norm of the raw rows the batch touches.
pub fn bpr_loss(final_table: &EmbeddingTable, triples: &[BprTriple], gamma: f64, raw: &EmbeddingTable) -> f64 {
    assert!(!triples.is_empty(), "bpr_loss needs at least one triple");
    let data: f64 = triples
        .iter()
        .map(|t| {
            let x = score(final_table, t.user, t.pos_item) - score(final_table, t.user, t.neg_item);
            neg_log_sigmoid(x)
        })
        .sum::<f64>()
        / triples.len() as f64;
    if gamma == 0.0 {
        return data;
    }
    let (users, items) = touched_rows(triples);
    let reg: f64 = users.iter().map(|&u| sq_norm(raw.user(u))).sum::<f64>()
        + items.iter().map(|&i| sq_norm(raw.item(i))).sum::<f64>();
    data + gamma * reg
}

/// Exact gradient of [`bpr_loss`] (evaluated on `op.forward(raw)`) with
/// respect to the raw table.
pub fn bpr_gradients(
    op: &PropagationOperator,
    raw: &EmbeddingTable,
    triples: &[BprTriple],
    gamma: f64,
) -> GradientUpdate {
    bpr_loss_and_gradients(op, raw, triples, gamma).1
}

pub fn bpr_loss_and_gradients(
    op: &PropagationOperator,
    raw: &EmbeddingTable,
    triples: &[BprTriple],
    gamma: f64,
) -> (f64, GradientUpdate) {
    assert!(!triples.is_empty(), "bpr_gradients needs at least one triple");
    let final_table = op.forward(raw);
    let loss = bpr_loss(&final_table, triples, gamma, raw);

    let d = raw.dim();
    let inv_b = 1.0 / triples.len() as f64;
    let mut grad_final = EmbeddingTable::zeros(d, raw.n_users(), raw.n_items());
    for t in triples {
        let fu = final_table.user(t.user).to_vec();
        let fp = final_table.item(t.pos_item).to_vec();
        let fn_ = final_table.item(t.neg_item).to_vec();
        let x = dot(&fu, &fp) - dot(&fu, &fn_);
        let c = (sigmoid(x) - 1.0) * inv_b;
        for (g, (p, n)) in grad_final.user_mut(t.user).iter_mut().zip(fp.iter().zip(&fn_)) {
            *g += c * (p - n);
        }
        for (g, u) in grad_final.item_mut(t.pos_item).iter_mut().zip(&fu) {
            *g += c * u;
        }
        for (g, u) in grad_final.item_mut(t.neg_item).iter_mut().zip(&fu) {
            *g -= c * u;
        }
    }
    let mut grad_raw = op.adjoint(&grad_final);

    let (users, items) = touched_rows(triples);
    if gamma != 0.0 {
        for &u in &users {
            for (g, v) in grad_raw.user_mut(u).iter_mut().zip(raw.user(u)) {
                *g += 2.0 * gamma * v;
            }
        }
        for &i in &items {
            for (g, v) in grad_raw.item_mut(i).iter_mut().zip(raw.item(i)) {
                *g += 2.0 * gamma * v;
            }
        }
    }

    let mut seed_u = vec![false; raw.n_users()];
    let mut seed_i = vec![false; raw.n_items()];
    users.iter().for_each(|&u| seed_u[u] = true);
    items.iter().for_each(|&i| seed_i[i] = true);
    let (reach_u, reach_i) = op.reach(&seed_u, &seed_i);

    let mut update = GradientUpdate::empty(d);
    update.data_count = triples.len();
    for (u, _) in reach_u.iter().enumerate().filter(|(_, &r)| r) {
        update.user_grads.insert(u, grad_raw.user(u).to_vec());
    }
    for (i, _) in reach_i.iter().enumerate().filter(|(_, &r)| r) {
        update.item_grads.insert(i, grad_raw.item(i).to_vec());
    }
    (loss, update)
}

/// Top-`k` items by descending score, skipping `excluded`; ties go to the
/// lower item id. Returns every candidate when fewer than `k` exist.
pub fn rank_by_scores(scores: &[f64], excluded: impl Fn(usize) -> bool, k: usize) -> Vec<usize> {
    let mut candidates: Vec<usize> = (0..scores.len()).filter(|&i| !excluded(i)).collect();
    let cmp = |a: &usize, b: &usize| scores[*b].total_cmp(&scores[*a]).then(a.cmp(b));
    if k < candidates.len() {
        candidates.select_nth_unstable_by(k, cmp);
        candidates.truncate(k);
    }
    candidates.sort_unstable_by(cmp);
    candidates
}

pub fn rank_items(final_table: &EmbeddingTable, user: usize, excluded: &BTreeSet<usize>, k: usize) -> Vec<usize> {
    assert!(k >= 1, "k must be at least 1");
    let u = final_table.user(user);
    let scores: Vec<f64> = (0..final_table.n_items())
        .map(|i| dot(u, final_table.item(i)))
        .collect();
    rank_by_scores(&scores, |i| excluded.contains(&i), k)
}
