//! The federated round loop: clustering, selection, parallel client updates,
//! global and per-cluster aggregation, and periodic personalized evaluation.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use log::{debug, info};
use rayon::prelude::*;
use serde::Serialize;

use crate::client::{client_update, ClientConfig, ClientContext, ClientOutcome, PersonalizationWeights};
use crate::client_graph::{build_client_graph, LocalSubgraph};
use crate::config::ExperimentConfig;
use crate::data::SplitDataset;
use crate::embedding::{dot, EmbeddingTable};
use crate::error::{Error, Result};
use crate::eval::{evaluate_with, EvalPhase, EvalResult};
use crate::lightgnn::{BipartiteGraph, GradientUpdate};
use crate::pretrain::{pretrain, PretrainOutcome};
use crate::privacy::{randomize_in_place, LdpConfig};
use crate::rng::{derive_key, stream, Phase};
use crate::server::aggregation::{aggregate, apply_item_update};
use crate::server::clustering::{cluster_users, recluster, Clustering};
use crate::server::matcher::{match_all, Directory, TokenKey, UserToken};
use crate::server::selection::select_clients;

/// One line of `rounds.jsonl`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RoundReport {
    pub round: usize,
    pub k: usize,
    /// Selected clients, ascending dense user ids.
    pub selected: Vec<usize>,
    pub train_loss: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub val_recall: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub val_ndcg: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_time: Option<f64>,
}

/// Everything the simulator keeps between rounds.
#[derive(Clone, Debug)]
pub struct TrainingState {
    /// Client-held user rows and the global item table.
    pub table: EmbeddingTable,
    /// One item table per cluster, row-major.
    pub cluster_items: Vec<Vec<f64>>,
    pub clustering: Clustering,
    /// Per-client offset of the fine-tuned local item table from the global one.
    pub local_deltas: Vec<BTreeMap<usize, Vec<f64>>>,
    /// Pseudo items each client last reported, excluded when it ranks.
    pub last_pseudo: Vec<BTreeSet<usize>>,
    /// Server-visible user rows, randomized when privacy is on.
    pub uploads: Vec<f64>,
}

#[derive(Clone, Debug)]
pub struct TrainingOutcome {
    pub state: TrainingState,
    pub reports: Vec<RoundReport>,
    /// Contrastive losses when pre-training ran inside this call.
    pub pretrain_losses: Vec<f64>,
    /// Round whose state was restored as best on validation.
    pub best_round: Option<usize>,
}

/// Shared, read-only inputs derived once from the config and split.
pub struct Simulator<'a> {
    pub cfg: &'a ExperimentConfig,
    pub split: &'a SplitDataset,
    pub neighbors: Vec<Vec<(UserToken, usize)>>,
    pub directory: Directory,
    client: ClientConfig,
    ldp: LdpConfig,
    weights: PersonalizationWeights,
}

/// Random initial table for a run.
pub fn initial_table(cfg: &ExperimentConfig, split: &SplitDataset) -> EmbeddingTable {
    EmbeddingTable::random_normal(
        cfg.dim,
        split.n_users,
        split.n_items,
        cfg.init_std,
        &mut stream(cfg.seed, Phase::Init, &[]),
    )
}

/// The graph the server sees before federation: each client's kept training
/// items plus its pseudo items, or the plain training edges.
pub fn pretrain_graph(cfg: &ExperimentConfig, split: &SplitDataset) -> Result<BipartiteGraph> {
    if !cfg.privacy_enabled || cfg.pretrain_on_true_edges {
        return BipartiteGraph::new(split.n_users, split.n_items, split.train_edges());
    }
    let local = cfg.local_graph();
    let mut edges = Vec::new();
    for u in 0..split.n_users {
        let g = build_client_graph(
            split,
            u,
            &local,
            &[],
            &mut stream(cfg.seed, Phase::PretrainGraph, &[u as u64]),
        );
        edges.extend(g.true_items.iter().chain(&g.pseudo_items).map(|&i| (u, i)));
    }
    BipartiteGraph::new(split.n_users, split.n_items, edges)
}

/// Contrastive pre-training of `table` on the upload graph.
pub fn run_pretrain(cfg: &ExperimentConfig, split: &SplitDataset, table: &EmbeddingTable) -> Result<PretrainOutcome> {
    let graph = pretrain_graph(cfg, split)?;
    let pcfg = cfg.pretrain_config(split.n_users);
    let mut monitor = stream(cfg.seed, Phase::Pretrain, &[1]);
    pretrain(
        &graph,
        table,
        &pcfg,
        &mut stream(cfg.seed, Phase::Pretrain, &[]),
        &mut monitor,
    )
}

fn row(flat: &[f64], dim: usize, r: usize) -> &[f64] {
    &flat[r * dim..(r + 1) * dim]
}

impl<'a> Simulator<'a> {
    pub fn new(cfg: &'a ExperimentConfig, split: &'a SplitDataset) -> Result<Self> {
        cfg.validate()?;
        let key = TokenKey(derive_key(cfg.seed, Phase::TokenKey, &[]));
        let (neighbors, directory) = match_all(&key, &split.train);
        let ldp = cfg.ldp()?;
        Ok(Self {
            cfg,
            split,
            neighbors,
            directory,
            client: ClientConfig {
                n_layers: cfg.layers,
                gamma: cfg.gamma,
                batch_size: (cfg.batch_size > 0).then_some(cfg.batch_size),
                graph: cfg.local_graph(),
                ldp,
            },
            ldp,
            weights: cfg.weights(),
        })
    }

    fn randomized_user_row(&self, user_row: &[f64], epoch: u64, user: usize) -> Vec<f64> {
        let mut v = user_row.to_vec();
        if self.ldp.enabled {
            randomize_in_place(
                &mut v,
                &self.ldp,
                &mut stream(self.cfg.seed, Phase::Upload, &[epoch, user as u64]),
            );
        }
        v
    }

    fn cluster_points<'s>(&self, state: &'s TrainingState) -> &'s [f64] {
        if self.ldp.enabled && self.cfg.cluster_on_noised {
            &state.uploads
        } else {
            state.table.users_flat()
        }
    }

    /// Fresh state around a starting table: uploads of every user row,
    /// cold-start clustering, and cluster tables copied from the global one.
    pub fn init_state(&self, table: EmbeddingTable) -> Result<TrainingState> {
        let d = self.cfg.dim;
        let n = self.split.n_users;
        if table.dim() != d || table.n_users() != n || table.n_items() != self.split.n_items {
            return Err(Error::ShapeMismatch(format!(
                "table is {}x({}+{}), run needs {}x({}+{})",
                table.dim(),
                table.n_users(),
                table.n_items(),
                d,
                n,
                self.split.n_items
            )));
        }
        let uploads: Vec<f64> = (0..n)
            .flat_map(|u| self.randomized_user_row(table.user(u), 0, u))
            .collect();
        let k = self.cfg.effective_k();
        let mut state = TrainingState {
            cluster_items: vec![table.items_flat().to_vec(); k],
            table,
            clustering: Clustering {
                k: 1,
                dim: d,
                assignment: vec![0; n],
                centroids: Vec::new(),
                inertia_history: Vec::new(),
                converged: true,
            },
            local_deltas: vec![BTreeMap::new(); n],
            last_pseudo: vec![BTreeSet::new(); n],
            uploads,
        };
        state.clustering = self.cluster(&state, 0, None)?;
        Ok(state)
    }

    fn cluster(&self, state: &TrainingState, round: usize, previous: Option<&Clustering>) -> Result<Clustering> {
        let k = self.cfg.effective_k();
        let points = self.cluster_points(state);
        match previous {
            Some(p) if p.k == k => recluster(points, self.cfg.dim, &p.assignment, k),
            _ => cluster_users(
                points,
                self.cfg.dim,
                k,
                &mut stream(self.cfg.seed, Phase::Cluster, &[round as u64]),
            ),
        }
    }

    fn client_round(&self, state: &TrainingState, round: usize, user: usize) -> Result<ClientOutcome> {
        let d = self.cfg.dim;
        let uploads = &state.uploads;
        let directory = &self.directory;
        let neighbor_row = move |t: &UserToken| -> &[f64] {
            let slot = directory.slot(t).expect("matched token is registered");
            row(uploads, d, slot)
        };
        let ctx = ClientContext {
            split: self.split,
            dim: d,
            item_rows: state.table.items_flat(),
            own_user_row: state.table.user(user),
            neighbors: &self.neighbors[user],
            neighbor_row: &neighbor_row,
        };
        client_update(
            user,
            &ctx,
            &self.client,
            &mut stream(self.cfg.seed, Phase::Client, &[round as u64, user as u64]),
        )
    }

    /// Re-cluster if due and draw this round's clients.
    pub fn begin_round(&self, state: &mut TrainingState, round: usize) -> Result<Vec<usize>> {
        if round > 0 && round % self.cfg.recluster_every == 0 {
            state.clustering = self.cluster(state, round, Some(&state.clustering))?;
        }
        let budget = self.cfg.clients_per_round.min(self.split.n_users);
        Ok(select_clients(
            &state.clustering.assignment,
            state.clustering.k,
            budget,
            &mut stream(self.cfg.seed, Phase::Select, &[round as u64]),
        ))
    }

    /// Local training of every selected client against a read-only state.
    pub fn run_clients(&self, state: &TrainingState, round: usize, selected: &[usize]) -> Result<Vec<ClientOutcome>> {
        selected
            .par_iter()
            .map(|&u| self.client_round(state, round, u))
            .collect()
    }

    /// Run one round in place and return its report (without metrics).
    pub fn step(&self, state: &mut TrainingState, round: usize) -> Result<RoundReport> {
        let selected = self.begin_round(state, round)?;
        let outcomes = self.run_clients(state, round, &selected)?;
        self.finish_round(state, round, selected, &outcomes)
    }

    /// Aggregate and apply the clients' results.
    pub fn finish_round(
        &self,
        state: &mut TrainingState,
        round: usize,
        selected: Vec<usize>,
        outcomes: &[ClientOutcome],
    ) -> Result<RoundReport> {
        let d = self.cfg.dim;
        let k = state.clustering.k;
        let train_loss = outcomes.iter().map(|o| o.loss).sum::<f64>() / outcomes.len().max(1) as f64;
        let updates: Vec<GradientUpdate> = outcomes.iter().map(|o| o.update.clone()).collect();
        let global = aggregate(&updates)?;
        let mut per_cluster: Vec<Vec<GradientUpdate>> = vec![Vec::new(); k];
        for (&u, upd) in selected.iter().zip(&updates) {
            per_cluster[state.clustering.assignment[u]].push(upd.clone());
        }

        let eta = self.cfg.eta;
        apply_item_update(state.table.items_flat_mut(), d, &global.item_grads, eta);
        for (c, ups) in per_cluster.iter().enumerate() {
            if ups.is_empty() {
                continue;
            }
            let g = aggregate(ups)?;
            apply_item_update(&mut state.cluster_items[c], d, &g.item_grads, eta);
        }
        for (&u, o) in selected.iter().zip(outcomes) {
            for (x, g) in state.table.user_mut(u).iter_mut().zip(&o.user_grad) {
                *x -= eta * g;
            }
            state.local_deltas[u] = o
                .local_item_grads
                .iter()
                .map(|(&i, g)| (i, g.iter().map(|v| -eta * v).collect()))
                .collect();
            state.last_pseudo[u] = o.graph.pseudo_items.clone();
            let up = self.randomized_user_row(state.table.user(u), round as u64 + 1, u);
            state.uploads[u * d..(u + 1) * d].copy_from_slice(&up);
        }
        if !state.table.is_finite() || !train_loss.is_finite() {
            return Err(Error::NonFinite(format!("embeddings after round {round}")));
        }
        debug!("round {round}: {} clients, loss {train_loss:.6}", selected.len());
        Ok(RoundReport {
            round,
            k,
            selected,
            train_loss,
            val_recall: None,
            val_ndcg: None,
            wall_time: None,
        })
    }

    /// Item rows `user` ranks with: the weighted mix of its local, cluster
    /// and global tables.
    pub fn personalized_items(&self, state: &TrainingState, user: usize) -> Vec<f64> {
        let global = state.table.items_flat();
        let w = &self.weights;
        if w.is_global_only() {
            return global.to_vec();
        }
        let cluster = &state.cluster_items[state.clustering.assignment[user]];
        let mut mixed: Vec<f64> = global
            .iter()
            .zip(cluster)
            .map(|(g, c)| (w.alpha_local + w.alpha_global) * g + w.alpha_cluster * c)
            .collect();
        let d = self.cfg.dim;
        for (&i, delta) in &state.local_deltas[user] {
            for (m, v) in mixed[i * d..(i + 1) * d].iter_mut().zip(delta) {
                *m += w.alpha_local * v;
            }
        }
        mixed
    }

    /// Scores of every item for `user`, propagating on its local graph
    /// (training items and matched neighbors, no pseudo items).
    pub fn user_scores(&self, state: &TrainingState, user: usize) -> Vec<f64> {
        let d = self.cfg.dim;
        let items = self.personalized_items(state, user);
        let train: BTreeSet<usize> = self.split.train[user].iter().copied().collect();
        let pairs: BTreeSet<(UserToken, usize)> = if self.cfg.neighbor_expansion {
            self.neighbors[user].iter().copied().collect()
        } else {
            BTreeSet::new()
        };
        let sub = LocalSubgraph::new(user, &train, &pairs, &BTreeSet::new(), self.cfg.layers);
        let uploads = &state.uploads;
        let directory = &self.directory;
        let raw = sub.gather(state.table.user(user), &items, d, |t: &UserToken| {
            row(uploads, d, directory.slot(t).expect("matched token is registered"))
        });
        let fin = sub.op.forward(&raw);
        let u = fin.user(0);
        let isolated = 1.0 / (self.cfg.layers + 1) as f64;
        (0..self.split.n_items)
            .map(|i| match sub.item_slot(i) {
                Some(s) => dot(u, fin.item(s)),
                None => isolated * dot(u, row(&items, d, i)),
            })
            .collect()
    }

    pub fn evaluate(&self, state: &TrainingState, phase: EvalPhase) -> EvalResult {
        evaluate_with(self.split, phase, &self.cfg.cutoffs, |u| {
            (self.user_scores(state, u), state.last_pseudo[u].clone())
        })
    }

    /// Rounds until `max_rounds` or early stopping. The best state on
    /// validation is restored when evaluation ran.
    pub fn train(&self, mut state: TrainingState) -> Result<(TrainingState, Vec<RoundReport>, Option<usize>)> {
        let primary = self.cfg.primary_cutoff();
        let mut reports = Vec::with_capacity(self.cfg.max_rounds);
        let mut best: Option<(f64, usize, TrainingState)> = None;
        let mut stale = 0;
        for round in 0..self.cfg.max_rounds {
            let start = Instant::now();
            let mut report = self.step(&mut state, round)?;
            if (round + 1) % self.cfg.eval_every == 0 || round + 1 == self.cfg.max_rounds {
                let r = self.evaluate(&state, EvalPhase::Validation);
                let (recall, ndcg) = r.at(primary).expect("primary cutoff evaluated");
                report.val_recall = Some(recall);
                report.val_ndcg = Some(ndcg);
                info!(
                    "round {round}: loss {:.5} val ndcg@{primary} {ndcg:.4}",
                    report.train_loss
                );
                if best.as_ref().is_none_or(|b| ndcg > b.0) {
                    best = Some((ndcg, round, state.clone()));
                    stale = 0;
                } else {
                    stale += 1;
                }
            }
            if self.cfg.timing {
                report.wall_time = Some(start.elapsed().as_secs_f64());
            }
            reports.push(report);
            if self.cfg.patience > 0 && stale >= self.cfg.patience {
                info!("stopping after round {round}: no validation gain in {stale} evaluations");
                break;
            }
        }
        Ok(match best {
            Some((_, r, s)) => (s, reports, Some(r)),
            None => (state, reports, None),
        })
    }
}

/// Pre-train (unless disabled or a warm start is given), then federate.
pub fn run_training(
    cfg: &ExperimentConfig,
    split: &SplitDataset,
    warm_start: Option<&EmbeddingTable>,
) -> Result<TrainingOutcome> {
    let sim = Simulator::new(cfg, split)?;
    let mut pretrain_losses = Vec::new();
    let table = match warm_start {
        Some(t) if !cfg.no_pretrain => t.clone(),
        _ if cfg.pretrain_enabled() => {
            let out = run_pretrain(cfg, split, &initial_table(cfg, split))?;
            pretrain_losses = out.losses;
            out.table
        }
        _ => initial_table(cfg, split),
    };
    let state = sim.init_state(table)?;
    let (state, reports, best_round) = sim.train(state)?;
    Ok(TrainingOutcome {
        state,
        reports,
        pretrain_losses,
        best_round,
    })
}
