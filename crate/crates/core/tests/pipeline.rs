use std::collections::BTreeSet;
use std::path::Path;

use fedrec_core::client::PersonalizationWeights;
use fedrec_core::data::parse_interactions;
use fedrec_core::server::training::{initial_table, Simulator};
use fedrec_core::synthetic::{bundled_tsv, two_communities};
use fedrec_core::{evaluate, leave_one_out_split, run_training, EvalPhase, ExperimentConfig, PropagationOperator};

#[test]
fn bundled_file_matches_generator() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/two_communities.tsv");
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text, bundled_tsv());
    let ds = parse_interactions(&text, &path).unwrap();
    assert_eq!((ds.n_users, ds.n_items), (200, 100));
}

fn small() -> (ExperimentConfig, fedrec_core::SplitDataset) {
    let split = leave_one_out_split(&two_communities(40, 30, 6, 0.9, 3)).unwrap();
    let mut cfg = ExperimentConfig::default();
    cfg.dim = 8;
    cfg.max_rounds = 3;
    cfg.eta = 1.0;
    cfg.pretrain_epochs = 1;
    (cfg, split)
}

#[test]
fn negatives_are_unlabeled_and_uploads_are_padded() {
    let (mut cfg, split) = small();
    cfg.pseudo_items = 2;
    cfg.mask_ratio = 0.0;
    let sim = Simulator::new(&cfg, &split).unwrap();
    let mut state = sim.init_state(initial_table(&cfg, &split)).unwrap();
    let selected = sim.begin_round(&mut state, 0).unwrap();
    let outcomes = sim.run_clients(&state, 0, &selected).unwrap();
    for (&u, o) in selected.iter().zip(&outcomes) {
        let train: BTreeSet<usize> = split.train[u].iter().copied().collect();
        for t in &o.triples {
            assert!(train.contains(&t.pos_item));
            assert!(!o.graph.is_blocked(t.neg_item));
        }
        let negatives: BTreeSet<usize> = o.triples.iter().map(|t| t.neg_item).collect();
        let support: BTreeSet<usize> = o.update.item_grads.keys().copied().collect();
        let extra: BTreeSet<usize> = support
            .difference(&train)
            .filter(|i| !negatives.contains(i))
            .copied()
            .collect();
        assert_eq!(extra, o.graph.pseudo_items);
        assert_eq!(extra.len(), 2);
    }
}

#[test]
fn global_only_evaluation_is_the_plain_model_without_neighbors() {
    let (mut cfg, split) = small();
    cfg.no_personalization = true;
    cfg.neighbor_expansion = false;
    cfg.privacy_enabled = false;
    assert!(cfg.weights().is_global_only());
    assert_ne!(PersonalizationWeights::default(), PersonalizationWeights::global_only());
    let out = run_training(&cfg, &split, None).unwrap();
    let sim = Simulator::new(&cfg, &split).unwrap();
    let personalized = sim.evaluate(&out.state, EvalPhase::Test);
    // Without neighbors a user's local graph is just its own training edges.
    for u in 0..split.n_users {
        let edges = split.train[u].iter().map(|&i| (u, i));
        let op = PropagationOperator::from_edges(split.n_users, split.n_items, edges, cfg.layers).unwrap();
        let fin = op.forward(&out.state.table);
        let scores = sim.user_scores(&out.state, u);
        for (i, s) in scores.iter().enumerate() {
            let want: f64 = fin.user(u).iter().zip(fin.item(i)).map(|(a, b)| a * b).sum();
            assert!((s - want).abs() < 1e-12, "user {u} item {i}");
        }
    }
    assert_eq!(personalized.n_users, split.n_users);
}

#[test]
fn runs_are_reproducible_and_seed_sensitive() {
    let (cfg, split) = small();
    let a = run_training(&cfg, &split, None).unwrap();
    let b = run_training(&cfg, &split, None).unwrap();
    assert_eq!(a.state.table, b.state.table);
    assert_eq!(a.pretrain_losses, b.pretrain_losses);
    let mut other = cfg.clone();
    other.seed = 1;
    assert_ne!(run_training(&other, &split, None).unwrap().state.table, a.state.table);
}

#[test]
fn training_beats_the_random_start() {
    let (mut cfg, split) = small();
    cfg.max_rounds = 30;
    cfg.privacy_enabled = false;
    cfg.pretrain_epochs = 0;
    let start = initial_table(&cfg, &split);
    let op = PropagationOperator::from_edges(split.n_users, split.n_items, split.train_edges(), cfg.layers).unwrap();
    let before = evaluate(&op.forward(&start), &split, EvalPhase::Validation, &[10]).ndcg[0];
    let out = run_training(&cfg, &split, None).unwrap();
    let first = out.reports.first().unwrap().train_loss;
    let last = out.reports.last().unwrap().train_loss;
    assert!(last < first, "{first} -> {last}");
    let sim = Simulator::new(&cfg, &split).unwrap();
    let after = sim.evaluate(&out.state, EvalPhase::Validation).at(10).unwrap().1;
    assert!(after > before, "{before} -> {after}");
}
