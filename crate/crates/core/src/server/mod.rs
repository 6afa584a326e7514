//! Server side: matching, clustering, selection, aggregation and the round loop.

pub mod aggregation;
pub mod clustering;
pub mod matcher;
pub mod selection;
pub mod training;

pub use aggregation::{aggregate, apply_item_update, apply_update};
pub use clustering::{cluster_users, recluster, Clustering};
pub use matcher::{match_all, neighborhood_match, Directory, ItemToken, TokenKey, TokenUpload, UserToken};
pub use selection::{apportion, select_clients};
pub use training::{run_pretrain, run_training, RoundReport, Simulator, TrainingOutcome, TrainingState};
