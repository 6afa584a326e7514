//! Simulation of privacy-preserving, personalized federated recommendation
//! with a linear graph-propagation model.
//!
//! The crate covers data loading and the leave-one-out split, graph
//! propagation with exact gradients, contrastive pre-training, client-side
//! privacy (pseudo items, masking, clipped Laplace noise), server-side
//! clustering, selection and aggregation, and ranking evaluation.

pub mod client;
pub mod client_graph;
pub mod config;
pub mod data;
pub mod embedding;
pub mod error;
pub mod eval;
pub mod lightgnn;
pub mod pretrain;
pub mod privacy;
pub mod rng;
pub mod server;
pub mod synthetic;

pub use client::{
    client_update, personalize, sample_bpr_triples, ClientConfig, PersonalizationWeights, PersonalizedModel,
};
pub use client_graph::{build_client_graph, ClientGraph, LocalGraphConfig};
pub use config::ExperimentConfig;
pub use data::{density, leave_one_out_split, load_interactions, Interaction, InteractionDataset, SplitDataset};
pub use embedding::{Checkpoint, EmbeddingTable};
pub use error::{Error, Result};
pub use eval::{evaluate, EvalPhase, EvalResult};
pub use lightgnn::{bpr_gradients, bpr_loss, BipartiteGraph, BprTriple, GradientUpdate, PropagationOperator};
pub use pretrain::{infonce_gradients, infonce_loss, pretrain, AugmentationConfig, AugmentationOps, PretrainConfig};
pub use privacy::{ldp_randomize, privacy_budget, LdpConfig};
pub use server::{aggregate, cluster_users, run_training, select_clients, Clustering, RoundReport, TrainingOutcome};
