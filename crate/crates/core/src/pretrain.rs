//! Contrastive pre-training of the embedding table.
//!
//! Each epoch builds two augmented views of the interaction graph (node
//! dropout, random extra edges, unit-norm noise on the raw rows), propagates
//! the table through each view, and takes a gradient step on the InfoNCE loss
//! between the two views. Gradients flow through propagation; the discrete
//! draws are resampled every epoch and not differentiated.

use std::collections::HashSet;

use log::warn;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, StandardNormal};

use crate::embedding::{dot, EmbeddingTable};
use crate::error::{Error, Result};
use crate::lightgnn::{BipartiteGraph, PropagationOperator};
use crate::rng::StreamRng;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AugmentationOps {
    pub node_dropout: bool,
    pub edge_perturbation: bool,
    pub noise_injection: bool,
}

impl AugmentationOps {
    pub const ALL: Self = Self {
        node_dropout: true,
        edge_perturbation: true,
        noise_injection: true,
    };
    pub const NONE: Self = Self {
        node_dropout: false,
        edge_perturbation: false,
        noise_injection: false,
    };
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AugmentationConfig {
    pub node_keep_prob: f64,
    pub edge_add_count: usize,
    pub noise_magnitude: f64,
    pub temperature: f64,
    pub ops: AugmentationOps,
}

impl AugmentationConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.node_keep_prob > 0.0 && self.node_keep_prob <= 1.0) {
            return Err(Error::config("pretrain.node_keep_prob", "must be in (0, 1]"));
        }
        if !(self.noise_magnitude >= 0.0) {
            return Err(Error::config("pretrain.noise_magnitude", "must be >= 0"));
        }
        if !(self.temperature > 0.0) {
            return Err(Error::config("pretrain.tau", "must be > 0"));
        }
        Ok(())
    }
}

/// An augmented graph: surviving-node masks over the original node set and
/// the (possibly extended) edge list.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphView {
    pub n_users: usize,
    pub n_items: usize,
    pub surviving_users: Vec<bool>,
    pub surviving_items: Vec<bool>,
    pub edges: Vec<(usize, usize)>,
    pub added_edges: usize,
    pub noise_applied: bool,
}

impl GraphView {
    pub fn identity(graph: &BipartiteGraph) -> Self {
        Self {
            n_users: graph.n_users,
            n_items: graph.n_items,
            surviving_users: vec![true; graph.n_users],
            surviving_items: vec![true; graph.n_items],
            edges: graph.edges().to_vec(),
            added_edges: 0,
            noise_applied: false,
        }
    }

    pub fn n_surviving(&self) -> usize {
        self.surviving_users
            .iter()
            .chain(&self.surviving_items)
            .filter(|&&s| s)
            .count()
    }

    /// Propagation over edges whose endpoints both survive; degrees are
    /// recomputed on that subgraph.
    pub fn operator(&self, n_layers: usize) -> PropagationOperator {
        let edges = self
            .edges
            .iter()
            .copied()
            .filter(|&(u, i)| self.surviving_users[u] && self.surviving_items[i]);
        PropagationOperator::from_edges(self.n_users, self.n_items, edges, n_layers).expect("view edges are in range")
    }

    fn drop_nodes<R: Rng + ?Sized>(&mut self, keep_prob: f64, rng: &mut R) {
        for s in self.surviving_users.iter_mut().chain(self.surviving_items.iter_mut()) {
            *s = rng.random::<f64>() < keep_prob;
        }
    }

    fn add_edges<R: Rng + ?Sized>(&mut self, add_count: usize, rng: &mut R) {
        if add_count == 0 {
            return;
        }
        let total = self.n_users * self.n_items;
        let existing: HashSet<usize> = self.edges.iter().map(|&(u, i)| u * self.n_items + i).collect();
        let available = total - existing.len();
        let mut chosen: Vec<usize> = if add_count >= available {
            if add_count > available {
                warn!("requested {add_count} extra edges but only {available} non-edges exist; adding all");
            }
            (0..total).filter(|c| !existing.contains(c)).collect()
        } else if 2 * add_count <= available {
            let mut picked = HashSet::with_capacity(add_count);
            let mut order = Vec::with_capacity(add_count);
            while order.len() < add_count {
                let c = rng.random_range(0..total);
                if !existing.contains(&c) && picked.insert(c) {
                    order.push(c);
                }
            }
            order
        } else {
            let non_edges: Vec<usize> = (0..total).filter(|c| !existing.contains(c)).collect();
            index::sample(rng, non_edges.len(), add_count)
                .into_iter()
                .map(|k| non_edges[k])
                .collect()
        };
        chosen.sort_unstable();
        self.added_edges += chosen.len();
        self.edges
            .extend(chosen.into_iter().map(|c| (c / self.n_items, c % self.n_items)));
        self.edges.sort_unstable();
    }
}

/// Keep each node independently with probability `keep_prob`.
pub fn node_dropout_view<R: Rng + ?Sized>(graph: &BipartiteGraph, keep_prob: f64, rng: &mut R) -> GraphView {
    let mut v = GraphView::identity(graph);
    v.drop_nodes(keep_prob, rng);
    v
}

/// Add `add_count` edges drawn uniformly without replacement from the
/// missing user-item pairs. If fewer exist, all are added and a warning is
/// logged.
pub fn edge_perturbation_view<R: Rng + ?Sized>(graph: &BipartiteGraph, add_count: usize, rng: &mut R) -> GraphView {
    let mut v = GraphView::identity(graph);
    v.add_edges(add_count, rng);
    v
}

/// Add `magnitude * delta / |delta|` to every row, `delta ~ N(0, I)`.
pub fn noise_injection<R: Rng + ?Sized>(table: &EmbeddingTable, magnitude: f64, rng: &mut R) -> EmbeddingTable {
    let mut out = table.clone();
    if magnitude == 0.0 {
        return out;
    }
    let d = table.dim();
    let mut noise = vec![0.0; d];
    for block in [true, false] {
        let flat = if block {
            out.users_flat_mut()
        } else {
            out.items_flat_mut()
        };
        for row in flat.chunks_mut(d) {
            let n = loop {
                noise.iter_mut().for_each(|v| *v = StandardNormal.sample(rng));
                let n = dot(&noise, &noise).sqrt();
                if n > 0.0 {
                    break n;
                }
            };
            for (r, z) in row.iter_mut().zip(&noise) {
                *r += magnitude * z / n;
            }
        }
    }
    out
}

/// One augmented view: its operator and the propagated table.
#[derive(Clone, Debug)]
pub struct AugmentedView {
    pub graph: GraphView,
    pub op: PropagationOperator,
    pub embeddings: EmbeddingTable,
}

fn make_view<R: Rng + ?Sized>(
    graph: &BipartiteGraph,
    table: &EmbeddingTable,
    cfg: &AugmentationConfig,
    n_layers: usize,
    rng: &mut R,
) -> AugmentedView {
    let mut view = GraphView::identity(graph);
    if cfg.ops.node_dropout {
        view.drop_nodes(cfg.node_keep_prob, rng);
    }
    if cfg.ops.edge_perturbation {
        view.add_edges(cfg.edge_add_count, rng);
    }
    let op = view.operator(n_layers);
    let embeddings = if cfg.ops.noise_injection {
        view.noise_applied = true;
        op.forward(&noise_injection(table, cfg.noise_magnitude, rng))
    } else {
        op.forward(table)
    };
    AugmentedView {
        graph: view,
        op,
        embeddings,
    }
}

/// Two independently augmented views. `rngs` are the streams of the first
/// and second view.
pub fn make_views<R: Rng + ?Sized>(
    graph: &BipartiteGraph,
    table: &EmbeddingTable,
    cfg: &AugmentationConfig,
    n_layers: usize,
    rngs: (&mut R, &mut R),
) -> (AugmentedView, AugmentedView) {
    let a = make_view(graph, table, cfg, n_layers, rngs.0);
    let b = make_view(graph, table, cfg, n_layers, rngs.1);
    (a, b)
}

/// InfoNCE value with per-entity terms.
#[derive(Clone, Debug, PartialEq)]
pub struct InfoNce {
    pub loss: f64,
    pub user_terms: Vec<f64>,
    pub item_terms: Vec<f64>,
    /// Rows whose cosine was undefined and treated as zero similarity.
    pub zero_norm_rows: usize,
}

struct BlockResult {
    terms: Vec<f64>,
    grad_a: Vec<f64>,
    grad_b: Vec<f64>,
    zero_rows: usize,
}

fn unit_rows(x: &[f64], d: usize) -> (Vec<f64>, Vec<f64>, usize) {
    let n = x.len() / d.max(1);
    let mut unit = vec![0.0; x.len()];
    let mut inv = vec![0.0; n];
    let mut zeros = 0;
    for r in 0..n {
        let row = &x[r * d..(r + 1) * d];
        let nr = dot(row, row).sqrt();
        if nr > 0.0 {
            inv[r] = 1.0 / nr;
            for (o, v) in unit[r * d..(r + 1) * d].iter_mut().zip(row) {
                *o = v / nr;
            }
        } else {
            zeros += 1;
        }
    }
    (unit, inv, zeros)
}

fn block_infonce(a: &[f64], b: &[f64], d: usize, tau: f64, want_grad: bool) -> BlockResult {
    let n = if d == 0 { 0 } else { a.len() / d };
    let (ua, inv_a, za) = unit_rows(a, d);
    let (ub, inv_b, zb) = unit_rows(b, d);
    let mut terms = vec![0.0; n];
    let mut grad_a = if want_grad { vec![0.0; a.len()] } else { Vec::new() };
    let mut grad_b = if want_grad { vec![0.0; b.len()] } else { Vec::new() };
    let mut sims = vec![0.0; n];
    let mut coef = vec![0.0; n];

    for u in 0..n {
        let au = &ua[u * d..(u + 1) * d];
        for v in 0..n {
            sims[v] = dot(au, &ub[v * d..(v + 1) * d]);
        }
        let max = sims.iter().fold(f64::NEG_INFINITY, |m, &s| m.max(s / tau));
        let z: f64 = sims.iter().map(|&s| (s / tau - max).exp()).sum();
        let lse = max + z.ln();
        terms[u] = lse - sims[u] / tau;

        if !want_grad {
            continue;
        }
        // dL/ds_uv = (softmax_uv - [u == v]) / tau
        for v in 0..n {
            coef[v] = ((sims[v] / tau - lse).exp() - if u == v { 1.0 } else { 0.0 }) / tau;
        }
        if inv_a[u] > 0.0 {
            let cs: f64 = coef.iter().zip(&sims).map(|(c, s)| c * s).sum();
            let ga = &mut grad_a[u * d..(u + 1) * d];
            for v in 0..n {
                if coef[v] == 0.0 {
                    continue;
                }
                for (g, bv) in ga.iter_mut().zip(&ub[v * d..(v + 1) * d]) {
                    *g += coef[v] * bv;
                }
            }
            for (g, av) in ga.iter_mut().zip(au) {
                *g = inv_a[u] * (*g - cs * av);
            }
        }
        for v in 0..n {
            if inv_b[v] == 0.0 || coef[v] == 0.0 {
                continue;
            }
            let scale = coef[v] * inv_b[v];
            let bv = &ub[v * d..(v + 1) * d];
            let gb = &mut grad_b[v * d..(v + 1) * d];
            for ((g, &x), &y) in gb.iter_mut().zip(au).zip(bv) {
                *g += scale * (x - sims[v] * y);
            }
        }
    }
    BlockResult {
        terms,
        grad_a,
        grad_b,
        zero_rows: za + zb,
    }
}

fn check_views(a: &EmbeddingTable, b: &EmbeddingTable, tau: f64) {
    assert!(a.same_shape(b), "views must have matching row sets");
    assert!(tau > 0.0, "temperature must be positive");
}

/// Sum over users and items of `log sum_v exp(s(a_u, b_v)/tau) - s(a_u, b_u)/tau`
/// with cosine similarity `s`.
pub fn infonce_loss(a: &EmbeddingTable, b: &EmbeddingTable, tau: f64) -> InfoNce {
    check_views(a, b, tau);
    let d = a.dim();
    let users = block_infonce(a.users_flat(), b.users_flat(), d, tau, false);
    let items = block_infonce(a.items_flat(), b.items_flat(), d, tau, false);
    let zero_norm_rows = users.zero_rows + items.zero_rows;
    if zero_norm_rows > 0 {
        warn!("{zero_norm_rows} zero-norm rows in contrastive views; similarity treated as 0");
    }
    InfoNce {
        loss: users.terms.iter().sum::<f64>() + items.terms.iter().sum::<f64>(),
        user_terms: users.terms,
        item_terms: items.terms,
        zero_norm_rows,
    }
}

/// Gradients of [`infonce_loss`] with respect to both views.
pub fn infonce_gradients(a: &EmbeddingTable, b: &EmbeddingTable, tau: f64) -> (EmbeddingTable, EmbeddingTable) {
    check_views(a, b, tau);
    let d = a.dim();
    let users = block_infonce(a.users_flat(), b.users_flat(), d, tau, true);
    let items = block_infonce(a.items_flat(), b.items_flat(), d, tau, true);
    let ga =
        EmbeddingTable::from_parts(d, a.n_users(), a.n_items(), users.grad_a, items.grad_a).expect("gradient shape");
    let gb =
        EmbeddingTable::from_parts(d, a.n_users(), a.n_items(), users.grad_b, items.grad_b).expect("gradient shape");
    (ga, gb)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PretrainConfig {
    pub epochs: usize,
    pub eta: f64,
    pub n_layers: usize,
    pub augmentation: AugmentationConfig,
}

#[derive(Clone, Debug)]
pub struct PretrainOutcome {
    pub table: EmbeddingTable,
    /// Contrastive loss on a fixed pair of monitoring views, before each
    /// step and after the last one. Empty when `epochs == 0`.
    pub losses: Vec<f64>,
}

fn view_streams<R: Rng + ?Sized>(rng: &mut R) -> (StreamRng, StreamRng) {
    (
        StreamRng::seed_from_u64(rng.random()),
        StreamRng::seed_from_u64(rng.random()),
    )
}

fn loss_on_views(
    graph: &BipartiteGraph,
    table: &EmbeddingTable,
    cfg: &PretrainConfig,
    streams: (StreamRng, StreamRng),
    want_grad: bool,
) -> (f64, Option<EmbeddingTable>) {
    let (mut r1, mut r2) = streams;
    let (v1, v2) = make_views(graph, table, &cfg.augmentation, cfg.n_layers, (&mut r1, &mut r2));
    let tau = cfg.augmentation.temperature;
    let loss = infonce_loss(&v1.embeddings, &v2.embeddings, tau).loss;
    if !want_grad {
        return (loss, None);
    }
    let (g1, g2) = infonce_gradients(&v1.embeddings, &v2.embeddings, tau);
    let mut grad = v1.op.adjoint(&g1);
    grad.add_scaled(&v2.op.adjoint(&g2), 1.0);
    (loss, Some(grad))
}

/// Contrastive loss of `table` on one fresh pair of views, with the
/// gradient with respect to the raw table.
pub fn contrastive_step<R: Rng + ?Sized>(
    graph: &BipartiteGraph,
    table: &EmbeddingTable,
    cfg: &PretrainConfig,
    rng: &mut R,
    want_grad: bool,
) -> (f64, Option<EmbeddingTable>) {
    loss_on_views(graph, table, cfg, view_streams(rng), want_grad)
}

/// Run `cfg.epochs` steps of plain gradient descent on the contrastive
/// loss, each on fresh views drawn from `rng`. Reported losses use one pair
/// of views drawn from `monitor`, so they are comparable across epochs.
pub fn pretrain<R: Rng + ?Sized, M: Rng + ?Sized>(
    graph: &BipartiteGraph,
    table: &EmbeddingTable,
    cfg: &PretrainConfig,
    rng: &mut R,
    monitor: &mut M,
) -> Result<PretrainOutcome> {
    cfg.augmentation.validate()?;
    let mut current = table.clone();
    let mut losses = Vec::with_capacity(cfg.epochs + 1);
    if cfg.epochs == 0 {
        return Ok(PretrainOutcome { table: current, losses });
    }
    let fixed = view_streams(monitor);
    let monitored = |t: &EmbeddingTable| loss_on_views(graph, t, cfg, fixed.clone(), false).0;
    for _ in 0..cfg.epochs {
        losses.push(monitored(&current));
        let (_, grad) = contrastive_step(graph, &current, cfg, rng, true);
        current.add_scaled(&grad.expect("gradient requested"), -cfg.eta);
        if !current.is_finite() {
            return Err(Error::NonFinite("pre-trained embeddings".into()));
        }
    }
    losses.push(monitored(&current));
    Ok(PretrainOutcome { table: current, losses })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Phase};

    fn graph() -> BipartiteGraph {
        BipartiteGraph::new(3, 3, [(0, 0), (1, 1)]).unwrap()
    }

    #[test]
    fn keep_all_is_identity() {
        let g = graph();
        let v = node_dropout_view(&g, 1.0, &mut stream(1, Phase::Pretrain, &[]));
        assert_eq!(v, GraphView::identity(&g));
    }

    #[test]
    fn tiny_keep_prob_drops_everything() {
        let g = graph();
        let v = node_dropout_view(&g, 1e-300, &mut stream(1, Phase::Pretrain, &[]));
        assert_eq!(v.n_surviving(), 0);
        let mut rng = stream(2, Phase::Init, &[]);
        let t = EmbeddingTable::random_normal(2, 3, 3, 1.0, &mut rng);
        let layers = v.operator(2).propagate(&t);
        for l in &layers[1..] {
            assert!(l.users_flat().iter().chain(l.items_flat()).all(|&x| x == 0.0));
        }
    }

    #[test]
    fn half_keep_prob_binomial_bound() {
        let g = BipartiteGraph::new(5000, 5000, []).unwrap();
        let v = node_dropout_view(&g, 0.5, &mut stream(3, Phase::Pretrain, &[]));
        let frac = v.n_surviving() as f64 / 10_000.0;
        assert!((0.48..=0.52).contains(&frac), "{frac}");
    }

    #[test]
    fn edge_perturbation_examples() {
        let g = graph();
        let v = edge_perturbation_view(&g, 0, &mut stream(1, Phase::Pretrain, &[]));
        assert_eq!(v.edges, g.edges());

        let full = BipartiteGraph::new(2, 2, [(0, 0), (0, 1), (1, 0), (1, 1)]).unwrap();
        let v = edge_perturbation_view(&full, 5, &mut stream(1, Phase::Pretrain, &[]));
        assert_eq!(v.edges, full.edges());
        assert_eq!(v.added_edges, 0);

        let non_edges: Vec<(usize, usize)> = (0..3)
            .flat_map(|u| (0..3).map(move |i| (u, i)))
            .filter(|e| !g.contains(e.0, e.1))
            .collect();
        assert_eq!(non_edges.len(), 7);
        for seed in 0..30 {
            let v = edge_perturbation_view(&g, 2, &mut stream(seed, Phase::Pretrain, &[]));
            assert_eq!(v.edges.len(), 4);
            let new: Vec<_> = v.edges.iter().filter(|e| !g.contains(e.0, e.1)).collect();
            assert_eq!(new.len(), 2);
            assert!(new.iter().all(|e| non_edges.contains(e)));
        }
        // Enumeration branch: more than half of the non-edges requested.
        let v = edge_perturbation_view(&g, 6, &mut stream(4, Phase::Pretrain, &[]));
        assert_eq!(v.edges.len(), 8);
    }

    #[test]
    fn noise_rows_have_exact_magnitude() {
        let mut rng = stream(5, Phase::Init, &[]);
        let t = EmbeddingTable::random_normal(6, 4, 5, 1.0, &mut rng);
        assert_eq!(noise_injection(&t, 0.0, &mut rng), t);
        let out = noise_injection(&t, 0.37, &mut stream(6, Phase::Pretrain, &[]));
        for u in 0..4 {
            let d: Vec<f64> = out.user(u).iter().zip(t.user(u)).map(|(a, b)| a - b).collect();
            assert!((dot(&d, &d).sqrt() - 0.37).abs() < 1e-9);
        }
        for i in 0..5 {
            let d: Vec<f64> = out.item(i).iter().zip(t.item(i)).map(|(a, b)| a - b).collect();
            assert!((dot(&d, &d).sqrt() - 0.37).abs() < 1e-9);
        }
        let other = noise_injection(&t, 0.37, &mut stream(7, Phase::Pretrain, &[]));
        assert_ne!(out, other);
    }

    #[test]
    fn disabled_views_are_plain_propagation() {
        let g = graph();
        let mut rng = stream(8, Phase::Init, &[]);
        let t = EmbeddingTable::random_normal(3, 3, 3, 1.0, &mut rng);
        let cfg = AugmentationConfig {
            node_keep_prob: 0.5,
            edge_add_count: 3,
            noise_magnitude: 0.5,
            temperature: 0.2,
            ops: AugmentationOps::NONE,
        };
        let (a, b) = make_views(&g, &t, &cfg, 2, (&mut rng.clone(), &mut rng));
        let plain = PropagationOperator::new(&g, 2).forward(&t);
        assert_eq!(a.embeddings, plain);
        assert_eq!(b.embeddings, plain);
    }

    #[test]
    fn noise_only_views_without_layers() {
        let g = graph();
        let mut rng = stream(9, Phase::Init, &[]);
        let t = EmbeddingTable::random_normal(3, 3, 3, 1.0, &mut rng);
        let cfg = AugmentationConfig {
            node_keep_prob: 1.0,
            edge_add_count: 0,
            noise_magnitude: 0.25,
            temperature: 0.2,
            ops: AugmentationOps {
                noise_injection: true,
                ..AugmentationOps::NONE
            },
        };
        let (a, _) = make_views(&g, &t, &cfg, 0, (&mut stream(1, Phase::Pretrain, &[]), &mut rng));
        let expect = noise_injection(&t, 0.25, &mut stream(1, Phase::Pretrain, &[]));
        assert_eq!(a.embeddings, expect);
    }

    #[test]
    fn infonce_closed_forms() {
        let one = EmbeddingTable::from_rows(&[vec![0.3, -1.0]], &[]).unwrap();
        let r = infonce_loss(&one, &one, 0.7);
        assert!(r.user_terms[0].abs() < 1e-15);

        let two = EmbeddingTable::from_rows(&[vec![1.0, 0.0], vec![0.0, 2.0]], &[]).unwrap();
        let r = infonce_loss(&two, &two, 1.0);
        let e = std::f64::consts::E;
        let term = -(e / (e + 1.0)).ln();
        assert!((term - 0.3133).abs() < 1e-4);
        for t in &r.user_terms {
            assert!((t - term).abs() < 1e-12);
        }
        assert!((r.loss - 0.6266).abs() < 1e-4);
    }

    #[test]
    fn zero_norm_rows_are_flagged() {
        let a = EmbeddingTable::from_rows(&[vec![0.0, 0.0], vec![1.0, 0.0]], &[]).unwrap();
        let r = infonce_loss(&a, &a, 0.5);
        assert_eq!(r.zero_norm_rows, 2);
        assert!(r.loss.is_finite());
        let (ga, gb) = infonce_gradients(&a, &a, 0.5);
        assert!(ga.is_finite() && gb.is_finite());
        assert_eq!(ga.user(0), &[0.0, 0.0]);
    }

    #[test]
    fn uniform_similarities_give_log_n() {
        // Every pair has the same cosine: all rows identical.
        let rows = vec![vec![1.0, 1.0]; 5];
        let t = EmbeddingTable::from_rows(&rows, &[]).unwrap();
        for tau in [0.05, 0.3, 2.0] {
            let r = infonce_loss(&t, &t, tau);
            for term in r.user_terms {
                assert!((term - 5f64.ln()).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn identical_views_have_no_radial_gradient() {
        let mut rng = stream(10, Phase::Init, &[]);
        let t = EmbeddingTable::random_normal(4, 5, 3, 1.0, &mut rng);
        let (ga, gb) = infonce_gradients(&t, &t, 0.3);
        for u in 0..5 {
            assert!(dot(ga.user(u), t.user(u)).abs() < 1e-12);
            assert!(dot(gb.user(u), t.user(u)).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_epochs_leave_table_unchanged() {
        let g = graph();
        let mut rng = stream(11, Phase::Init, &[]);
        let t = EmbeddingTable::random_normal(3, 3, 3, 0.1, &mut rng);
        let cfg = PretrainConfig {
            epochs: 0,
            eta: 0.1,
            n_layers: 2,
            augmentation: AugmentationConfig {
                node_keep_prob: 0.9,
                edge_add_count: 1,
                noise_magnitude: 0.1,
                temperature: 0.2,
                ops: AugmentationOps::ALL,
            },
        };
        let out = pretrain(&g, &t, &cfg, &mut rng, &mut stream(12, Phase::Pretrain, &[])).unwrap();
        assert_eq!(out.table, t);
        assert!(out.losses.is_empty());
    }
}
