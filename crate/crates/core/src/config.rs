//! Experiment configuration as a flat `key = value` file.
//!
//! Every key can also be set from the command line under the same name.
//! `dump` followed by `parse` reproduces the configuration exactly.

use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::client::PersonalizationWeights;
use crate::client_graph::LocalGraphConfig;
use crate::error::{Error, Result};
use crate::pretrain::{AugmentationConfig, AugmentationOps, PretrainConfig};
use crate::privacy::LdpConfig;

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub data_path: Option<PathBuf>,

    pub dim: usize,
    pub layers: usize,
    pub init_std: f64,
    pub gamma: f64,

    pub eta: f64,
    pub clients_per_round: usize,
    pub max_rounds: usize,
    pub seed: u64,
    /// Triples per client per round; 0 means one per kept training item.
    pub batch_size: usize,
    pub eval_every: usize,
    pub patience: usize,

    pub pretrain_epochs: usize,
    pub pretrain_eta: f64,
    pub tau: f64,
    pub node_keep_prob: f64,
    /// `None` means one extra edge per pseudo item per user.
    pub edge_add_count: Option<usize>,
    pub noise_magnitude: f64,
    pub augmentations: AugmentationOps,
    pub pretrain_on_true_edges: bool,

    pub privacy_enabled: bool,
    pub clip_delta: f64,
    pub laplace_lambda: f64,
    pub pseudo_items: usize,
    pub mask_ratio: f64,
    pub cluster_on_noised: bool,

    pub neighbor_expansion: bool,

    pub k: usize,
    pub recluster_every: usize,

    pub alpha: [f64; 3],
    pub cutoffs: Vec<usize>,

    pub no_pretrain: bool,
    pub no_personalization: bool,
    pub no_clustering: bool,

    /// Record wall-clock time in round reports.
    pub timing: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            data_path: None,
            dim: 64,
            layers: 3,
            init_std: 0.1,
            gamma: 1e-4,
            eta: 0.01,
            clients_per_round: 256,
            max_rounds: 200,
            seed: 0,
            batch_size: 0,
            eval_every: 5,
            patience: 10,
            pretrain_epochs: 5,
            pretrain_eta: 0.01,
            tau: 0.2,
            node_keep_prob: 0.9,
            edge_add_count: None,
            noise_magnitude: 0.1,
            augmentations: AugmentationOps::ALL,
            pretrain_on_true_edges: false,
            privacy_enabled: true,
            clip_delta: 0.1,
            laplace_lambda: 0.2,
            pseudo_items: 5,
            mask_ratio: 0.1,
            cluster_on_noised: true,
            neighbor_expansion: true,
            k: 4,
            recluster_every: 1,
            alpha: [1.0 / 3.0; 3],
            cutoffs: vec![10, 20],
            no_pretrain: false,
            no_personalization: false,
            no_clustering: false,
            timing: false,
        }
    }
}

/// Every recognized key with a one-line description.
pub const KEYS: &[(&str, &str)] = &[
    (
        "data.path",
        "interaction file, one `user<TAB>item<TAB>timestamp` per line",
    ),
    ("model.dim", "embedding dimension"),
    ("model.layers", "propagation layers"),
    ("model.init_std", "standard deviation of the random initial embeddings"),
    ("model.gamma", "L2 weight on embedding rows touched by a batch"),
    ("train.eta", "learning rate"),
    ("train.clients_per_round", "clients selected per round"),
    ("train.max_rounds", "maximum federated rounds"),
    ("train.seed", "run seed"),
    (
        "train.batch_size",
        "triples per client per round, 0 = one per training item",
    ),
    ("train.eval_every", "rounds between validation passes"),
    (
        "train.patience",
        "validation passes without improvement before stopping, 0 = never stop",
    ),
    ("pretrain.epochs", "contrastive pre-training epochs"),
    ("pretrain.eta", "pre-training learning rate"),
    ("pretrain.tau", "contrastive temperature"),
    ("pretrain.node_keep_prob", "node survival probability in dropout views"),
    (
        "pretrain.edge_add_count",
        "extra edges per view, `auto` = pseudo items per user times users",
    ),
    ("pretrain.noise_magnitude", "norm of the noise added to each row"),
    (
        "pretrain.ops",
        "comma-separated augmentations: node_dropout, edge_perturbation, noise_injection, or none",
    ),
    (
        "pretrain.on_true_edges",
        "pre-train on unperturbed training edges instead of client uploads",
    ),
    ("privacy.enabled", "masking, pseudo items and randomized uploads"),
    ("privacy.clip_delta", "clip bound of uploaded values"),
    ("privacy.laplace_lambda", "Laplace noise scale of uploaded values"),
    ("privacy.pseudo_items_p", "pseudo items per client per round"),
    ("privacy.mask_ratio", "fraction of training items hidden per round"),
    (
        "privacy.noised_clustering",
        "cluster on randomized user uploads instead of raw rows",
    ),
    ("graph.neighbor_expansion", "add matched neighbor users to local graphs"),
    ("cluster.k", "number of user clusters"),
    ("cluster.recluster_every", "rounds between re-clustering"),
    (
        "personalization.alpha",
        "weights of local, cluster and global item tables",
    ),
    ("eval.cutoffs", "comma-separated ranking cutoffs"),
    ("ablation.no_pretrain", "skip pre-training and warm starts"),
    ("ablation.no_personalization", "rank with the global item table only"),
    ("ablation.no_clustering", "one cluster and uniform client selection"),
    ("output.timing", "record wall-clock seconds in round reports"),
];

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: Display,
{
    value
        .trim()
        .parse()
        .map_err(|e: T::Err| Error::config(key, format!("cannot parse {value:?}: {e}")))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>>
where
    T::Err: Display,
{
    value
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| parse_value(key, s))
        .collect()
}

fn join<T: Display>(values: &[T]) -> String {
    values.iter().map(T::to_string).collect::<Vec<_>>().join(",")
}

fn ops_to_string(ops: &AugmentationOps) -> String {
    let mut names = Vec::new();
    if ops.node_dropout {
        names.push("node_dropout");
    }
    if ops.edge_perturbation {
        names.push("edge_perturbation");
    }
    if ops.noise_injection {
        names.push("noise_injection");
    }
    if names.is_empty() {
        "none".into()
    } else {
        names.join(",")
    }
}

fn parse_ops(key: &str, value: &str) -> Result<AugmentationOps> {
    let mut ops = AugmentationOps::NONE;
    for name in value.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        match name {
            "none" => {}
            "node_dropout" => ops.node_dropout = true,
            "edge_perturbation" => ops.edge_perturbation = true,
            "noise_injection" => ops.noise_injection = true,
            other => return Err(Error::config(key, format!("unknown augmentation {other:?}"))),
        }
    }
    Ok(ops)
}

impl ExperimentConfig {
    /// Set one key from its text form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "data.path" => self.data_path = (!v.is_empty()).then(|| PathBuf::from(v)),
            "model.dim" => self.dim = parse_value(key, v)?,
            "model.layers" => self.layers = parse_value(key, v)?,
            "model.init_std" => self.init_std = parse_value(key, v)?,
            "model.gamma" => self.gamma = parse_value(key, v)?,
            "train.eta" => self.eta = parse_value(key, v)?,
            "train.clients_per_round" => self.clients_per_round = parse_value(key, v)?,
            "train.max_rounds" => self.max_rounds = parse_value(key, v)?,
            "train.seed" => self.seed = parse_value(key, v)?,
            "train.batch_size" => self.batch_size = parse_value(key, v)?,
            "train.eval_every" => self.eval_every = parse_value(key, v)?,
            "train.patience" => self.patience = parse_value(key, v)?,
            "pretrain.epochs" => self.pretrain_epochs = parse_value(key, v)?,
            "pretrain.eta" => self.pretrain_eta = parse_value(key, v)?,
            "pretrain.tau" => self.tau = parse_value(key, v)?,
            "pretrain.node_keep_prob" => self.node_keep_prob = parse_value(key, v)?,
            "pretrain.edge_add_count" => {
                self.edge_add_count = if v == "auto" { None } else { Some(parse_value(key, v)?) }
            }
            "pretrain.noise_magnitude" => self.noise_magnitude = parse_value(key, v)?,
            "pretrain.ops" => self.augmentations = parse_ops(key, v)?,
            "pretrain.on_true_edges" => self.pretrain_on_true_edges = parse_value(key, v)?,
            "privacy.enabled" => self.privacy_enabled = parse_value(key, v)?,
            "privacy.clip_delta" => self.clip_delta = parse_value(key, v)?,
            "privacy.laplace_lambda" => self.laplace_lambda = parse_value(key, v)?,
            "privacy.pseudo_items_p" => self.pseudo_items = parse_value(key, v)?,
            "privacy.mask_ratio" => self.mask_ratio = parse_value(key, v)?,
            "privacy.noised_clustering" => self.cluster_on_noised = parse_value(key, v)?,
            "graph.neighbor_expansion" => self.neighbor_expansion = parse_value(key, v)?,
            "cluster.k" => self.k = parse_value(key, v)?,
            "cluster.recluster_every" => self.recluster_every = parse_value(key, v)?,
            "personalization.alpha" => {
                let a: Vec<f64> = parse_list(key, v)?;
                self.alpha = a
                    .try_into()
                    .map_err(|_| Error::config(key, "expects three comma-separated weights"))?;
            }
            "eval.cutoffs" => self.cutoffs = parse_list(key, v)?,
            "ablation.no_pretrain" => self.no_pretrain = parse_value(key, v)?,
            "ablation.no_personalization" => self.no_personalization = parse_value(key, v)?,
            "ablation.no_clustering" => self.no_clustering = parse_value(key, v)?,
            "output.timing" => self.timing = parse_value(key, v)?,
            _ => return Err(Error::config(key, "unknown key")),
        }
        Ok(())
    }

    /// Text form of one key, as accepted by [`set`](Self::set).
    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "data.path" => self
                .data_path
                .as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_default(),
            "model.dim" => self.dim.to_string(),
            "model.layers" => self.layers.to_string(),
            "model.init_std" => self.init_std.to_string(),
            "model.gamma" => self.gamma.to_string(),
            "train.eta" => self.eta.to_string(),
            "train.clients_per_round" => self.clients_per_round.to_string(),
            "train.max_rounds" => self.max_rounds.to_string(),
            "train.seed" => self.seed.to_string(),
            "train.batch_size" => self.batch_size.to_string(),
            "train.eval_every" => self.eval_every.to_string(),
            "train.patience" => self.patience.to_string(),
            "pretrain.epochs" => self.pretrain_epochs.to_string(),
            "pretrain.eta" => self.pretrain_eta.to_string(),
            "pretrain.tau" => self.tau.to_string(),
            "pretrain.node_keep_prob" => self.node_keep_prob.to_string(),
            "pretrain.edge_add_count" => self
                .edge_add_count
                .map_or_else(|| "auto".to_string(), |c| c.to_string()),
            "pretrain.noise_magnitude" => self.noise_magnitude.to_string(),
            "pretrain.ops" => ops_to_string(&self.augmentations),
            "pretrain.on_true_edges" => self.pretrain_on_true_edges.to_string(),
            "privacy.enabled" => self.privacy_enabled.to_string(),
            "privacy.clip_delta" => self.clip_delta.to_string(),
            "privacy.laplace_lambda" => self.laplace_lambda.to_string(),
            "privacy.pseudo_items_p" => self.pseudo_items.to_string(),
            "privacy.mask_ratio" => self.mask_ratio.to_string(),
            "privacy.noised_clustering" => self.cluster_on_noised.to_string(),
            "graph.neighbor_expansion" => self.neighbor_expansion.to_string(),
            "cluster.k" => self.k.to_string(),
            "cluster.recluster_every" => self.recluster_every.to_string(),
            "personalization.alpha" => join(&self.alpha),
            "eval.cutoffs" => join(&self.cutoffs),
            "ablation.no_pretrain" => self.no_pretrain.to_string(),
            "ablation.no_personalization" => self.no_personalization.to_string(),
            "ablation.no_clustering" => self.no_clustering.to_string(),
            "output.timing" => self.timing.to_string(),
            _ => return None,
        })
    }

    /// All keys, one `key = value` line each.
    pub fn dump(&self) -> String {
        KEYS.iter()
            .map(|(k, _)| format!("{k} = {}\n", self.get(k).expect("listed key")))
            .collect()
    }

    /// Apply a config file's assignments on top of `self`. Blank lines and
    /// `#` comments are ignored.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::config(
                    format!("line {}", n + 1),
                    format!("expected `key = value`, got {line:?}"),
                )
            })?;
            self.set(k.trim(), v)?;
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut c = Self::default();
        c.apply_text(text)?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, key: &str, reason: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::config(key, reason))
            }
        };
        check(self.dim >= 1, "model.dim", "must be >= 1")?;
        check(
            self.init_std >= 0.0 && self.init_std.is_finite(),
            "model.init_std",
            "must be finite and >= 0",
        )?;
        check(self.gamma >= 0.0, "model.gamma", "must be >= 0")?;
        check(self.eta > 0.0 && self.eta.is_finite(), "train.eta", "must be > 0")?;
        check(self.clients_per_round >= 1, "train.clients_per_round", "must be >= 1")?;
        check(self.eval_every >= 1, "train.eval_every", "must be >= 1")?;
        check(self.pretrain_eta > 0.0, "pretrain.eta", "must be > 0")?;
        check(self.tau > 0.0, "pretrain.tau", "must be > 0")?;
        check(
            self.node_keep_prob > 0.0 && self.node_keep_prob <= 1.0,
            "pretrain.node_keep_prob",
            "must be in (0, 1]",
        )?;
        check(self.noise_magnitude >= 0.0, "pretrain.noise_magnitude", "must be >= 0")?;
        check(self.clip_delta > 0.0, "privacy.clip_delta", "must be > 0")?;
        check(self.laplace_lambda >= 0.0, "privacy.laplace_lambda", "must be >= 0")?;
        check(
            (0.0..1.0).contains(&self.mask_ratio),
            "privacy.mask_ratio",
            "must be in [0, 1)",
        )?;
        check(self.k >= 1, "cluster.k", "must be >= 1")?;
        check(self.recluster_every >= 1, "cluster.recluster_every", "must be >= 1")?;
        check(
            self.alpha.iter().all(|a| *a >= 0.0 && a.is_finite()),
            "personalization.alpha",
            "weights must be finite and >= 0",
        )?;
        check(
            !self.cutoffs.is_empty() && self.cutoffs.iter().all(|&k| k >= 1),
            "eval.cutoffs",
            "needs at least one cutoff >= 1",
        )?;
        Ok(())
    }

    pub fn pretrain_enabled(&self) -> bool {
        !self.no_pretrain && self.pretrain_epochs > 0
    }

    pub fn effective_k(&self) -> usize {
        if self.no_clustering {
            1
        } else {
            self.k
        }
    }

    pub fn weights(&self) -> PersonalizationWeights {
        if self.no_personalization {
            PersonalizationWeights::global_only()
        } else {
            PersonalizationWeights {
                alpha_local: self.alpha[0],
                alpha_cluster: self.alpha[1],
                alpha_global: self.alpha[2],
            }
        }
    }

    /// Cutoff used for early stopping: the largest one.
    pub fn primary_cutoff(&self) -> usize {
        self.cutoffs.iter().copied().max().unwrap_or(20)
    }

    pub fn local_graph(&self) -> LocalGraphConfig {
        if self.privacy_enabled {
            LocalGraphConfig {
                mask_ratio: self.mask_ratio,
                pseudo_items: self.pseudo_items,
                neighbor_expansion: self.neighbor_expansion,
            }
        } else {
            LocalGraphConfig {
                neighbor_expansion: self.neighbor_expansion,
                ..LocalGraphConfig::plain()
            }
        }
    }

    pub fn ldp(&self) -> Result<LdpConfig> {
        if self.privacy_enabled {
            LdpConfig::new(self.clip_delta, self.laplace_lambda)
        } else {
            Ok(LdpConfig::disabled())
        }
    }

    pub fn pretrain_config(&self, n_users: usize) -> PretrainConfig {
        PretrainConfig {
            epochs: self.pretrain_epochs,
            eta: self.pretrain_eta,
            n_layers: self.layers,
            augmentation: AugmentationConfig {
                node_keep_prob: self.node_keep_prob,
                edge_add_count: self.edge_add_count.unwrap_or(self.pseudo_items * n_users),
                noise_magnitude: self.noise_magnitude,
                temperature: self.tau,
                ops: self.augmentations,
            },
        }
    }
}
