use std::collections::{BTreeMap, BTreeSet};

use proptest::prelude::*;

use fedrec_core::client_graph::{build_client_graph, LocalGraphConfig};
use fedrec_core::eval::evaluate;
use fedrec_core::privacy::{ldp_randomize, sample_pseudo_items};
use fedrec_core::rng::{stream, Phase};
use fedrec_core::server::selection::apportion;
use fedrec_core::synthetic::two_communities;
use fedrec_core::{
    aggregate, leave_one_out_split, EmbeddingTable, EvalPhase, GradientUpdate, LdpConfig, PropagationOperator,
};

fn table(seed: u64, d: usize, n_users: usize, n_items: usize) -> EmbeddingTable {
    EmbeddingTable::random_normal(d, n_users, n_items, 1.0, &mut stream(seed, Phase::Init, &[]))
}

fn update(seed: u64, dim: usize, rows: &[usize], count: usize) -> GradientUpdate {
    let t = table(seed, dim, 1, 16);
    let mut u = GradientUpdate::empty(dim);
    u.data_count = count;
    u.item_grads = rows.iter().map(|&i| (i, t.item(i).to_vec())).collect();
    u
}

fn close(a: &BTreeMap<usize, Vec<f64>>, b: &BTreeMap<usize, Vec<f64>>) -> bool {
    a.keys().eq(b.keys())
        && a.values()
            .flatten()
            .zip(b.values().flatten())
            .all(|(x, y)| (x - y).abs() < 1e-12)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn propagation_is_self_adjoint(
        seed in 0u64..1000,
        n_users in 1usize..8,
        n_items in 1usize..8,
        layers in 0usize..4,
        edges in proptest::collection::vec((0usize..8, 0usize..8), 0..30),
    ) {
        let edges: Vec<(usize, usize)> = edges.into_iter().filter(|&(u, i)| u < n_users && i < n_items).collect();
        let op = PropagationOperator::from_edges(n_users, n_items, edges, layers).unwrap();
        let x = table(seed, 3, n_users, n_items);
        let y = table(seed + 1, 3, n_users, n_items);
        let lhs = op.forward(&x).inner(&y);
        let rhs = x.inner(&op.adjoint(&y));
        prop_assert!((lhs - rhs).abs() < 1e-10 * (1.0 + lhs.abs()));
    }

    #[test]
    fn aggregation_ignores_client_order(
        seed in 0u64..1000,
        counts in proptest::collection::vec(1usize..20, 1..8),
        shift in 0usize..8,
    ) {
        let updates: Vec<GradientUpdate> = counts
            .iter()
            .enumerate()
            .map(|(n, &c)| update(seed + n as u64, 4, &[n % 16, (n * 7 + 3) % 16], c))
            .collect();
        let mut rotated = updates.clone();
        rotated.rotate_left(shift % updates.len());
        let a = aggregate(&updates).unwrap();
        let b = aggregate(&rotated).unwrap();
        prop_assert!(close(&a.item_grads, &b.item_grads));
        prop_assert_eq!(a.data_count, counts.iter().sum::<usize>());
    }

    #[test]
    fn equal_counts_aggregate_to_the_mean(seed in 0u64..1000, n in 1usize..8, count in 1usize..10) {
        let rows: Vec<usize> = (0..16).collect();
        let updates: Vec<GradientUpdate> = (0..n).map(|j| update(seed + j as u64, 3, &rows, count)).collect();
        let got = aggregate(&updates).unwrap();
        let mut mean: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
        for u in &updates {
            for (&i, g) in &u.item_grads {
                let acc = mean.entry(i).or_insert_with(|| vec![0.0; 3]);
                for (a, v) in acc.iter_mut().zip(g) {
                    *a += v / n as f64;
                }
            }
        }
        prop_assert!(close(&got.item_grads, &mean));
    }

    #[test]
    fn apportion_fills_budget_without_overflow(
        sizes in proptest::collection::vec(0usize..50, 1..8),
        budget in 0usize..200,
    ) {
        let q = apportion(&sizes, budget);
        let total: usize = sizes.iter().sum();
        prop_assert_eq!(q.iter().sum::<usize>(), budget.min(total));
        prop_assert!(q.iter().zip(&sizes).all(|(q, s)| q <= s));
        let nonempty = sizes.iter().filter(|&&s| s > 0).count();
        if budget.min(total) >= nonempty {
            prop_assert!(q.iter().zip(&sizes).all(|(&q, &s)| s == 0 || q >= 1));
        }
    }

    #[test]
    fn clipping_without_noise_bounds_entries(seed in 0u64..1000, delta in 0.01f64..2.0) {
        let cfg = LdpConfig::new(delta, 0.0).unwrap();
        let u = update(seed, 5, &[0, 3, 9], 4);
        let out = ldp_randomize(&u, &cfg, &mut stream(seed, Phase::Upload, &[]));
        prop_assert_eq!(out.data_count, 4);
        for (g, r) in out.item_grads.values().flatten().zip(u.item_grads.values().flatten()) {
            prop_assert!(g.abs() <= delta);
            prop_assert_eq!(*g, r.clamp(-delta, delta));
        }
    }

    #[test]
    fn pseudo_items_avoid_true_items(seed in 0u64..1000, n_items in 1usize..40, p in 0usize..10) {
        let true_items: BTreeSet<usize> = (0..n_items).filter(|i| i % 3 == 0).collect();
        let pseudo = sample_pseudo_items(n_items, &true_items, p, &mut stream(seed, Phase::Client, &[]));
        prop_assert!(pseudo.is_disjoint(&true_items));
        prop_assert_eq!(pseudo.len(), p.min(n_items - true_items.len()));
    }

    #[test]
    fn metrics_grow_with_cutoff_and_ignore_scale(seed in 0u64..200, scale in 0.1f64..10.0) {
        let split = leave_one_out_split(&two_communities(20, 16, 5, 0.8, seed)).unwrap();
        let t = table(seed, 4, split.n_users, split.n_items);
        let mut scaled = t.clone();
        scaled.scale(scale);
        let cutoffs = [1, 2, 5, 10];
        let r = evaluate(&t, &split, EvalPhase::Test, &cutoffs);
        for w in r.recall.windows(2).chain(r.ndcg.windows(2)) {
            prop_assert!(w[0] <= w[1]);
        }
        prop_assert!(r.ndcg.iter().zip(&r.recall).all(|(n, c)| n <= c));
        prop_assert_eq!(evaluate(&scaled, &split, EvalPhase::Test, &cutoffs).ranks, r.ranks);
    }

    #[test]
    fn split_partitions_each_history(seed in 0u64..500) {
        let ds = two_communities(12, 10, 4, 0.7, seed);
        let split = leave_one_out_split(&ds).unwrap();
        prop_assert_eq!(split.n_train() + 2 * split.n_users, ds.interactions.len());
        for u in 0..split.n_users {
            prop_assert!(split.train[u].windows(2).all(|w| w[0] < w[1]));
            prop_assert!(!split.train[u].contains(&split.validation[u]));
            prop_assert!(!split.train[u].contains(&split.test[u]));
            prop_assert_ne!(split.validation[u], split.test[u]);
        }
    }

    #[test]
    fn client_graph_hides_and_pads(seed in 0u64..500, p in 0usize..6, mask in 0.0f64..0.6) {
        let split = leave_one_out_split(&two_communities(10, 30, 8, 0.8, seed)).unwrap();
        let cfg = LocalGraphConfig { mask_ratio: mask, pseudo_items: p, neighbor_expansion: false };
        let g = build_client_graph(&split, 3, &cfg, &[], &mut stream(seed, Phase::Client, &[3]));
        let train: BTreeSet<usize> = split.train[3].iter().copied().collect();
        let union: BTreeSet<usize> = g.true_items.union(&g.masked_items).copied().collect();
        prop_assert_eq!(union, train.clone());
        prop_assert!(g.true_items.is_disjoint(&g.masked_items));
        prop_assert!(g.pseudo_items.is_disjoint(&train));
        prop_assert_eq!(g.pseudo_items.len(), p);
        prop_assert_eq!(g.masked_items.len(), (mask * train.len() as f64).floor() as usize);
    }
}
