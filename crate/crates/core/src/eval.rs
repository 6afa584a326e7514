//! Leave-one-out ranking metrics.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::SplitDataset;
use crate::embedding::{dot, EmbeddingTable};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvalPhase {
    Validation,
    Test,
}

impl EvalPhase {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Validation => "validation",
            Self::Test => "test",
        }
    }
}

/// 1-based position of `target` among non-excluded items ordered by
/// descending score, lower id first on ties.
pub fn target_rank(scores: &[f64], target: usize, excluded: impl Fn(usize) -> bool) -> usize {
    let t = scores[target];
    1 + (0..scores.len())
        .filter(|&i| i != target && !excluded(i))
        .filter(|&i| scores[i] > t || (scores[i] == t && i < target))
        .count()
}

/// Hit indicator: a single held-out item is either in the top `k` or not.
pub fn recall_at_k(rank: usize, k: usize) -> f64 {
    if rank <= k {
        1.0
    } else {
        0.0
    }
}

/// `1 / log2(rank + 1)` inside the cutoff; the ideal DCG is 1.
pub fn ndcg_at_k(rank: usize, k: usize) -> f64 {
    if rank <= k {
        1.0 / ((rank + 1) as f64).log2()
    } else {
        0.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalResult {
    pub phase: EvalPhase,
    pub cutoffs: Vec<usize>,
    /// Mean recall per cutoff.
    pub recall: Vec<f64>,
    /// Mean NDCG per cutoff.
    pub ndcg: Vec<f64>,
    pub n_users: usize,
    /// Rank of each user's held-out item.
    #[serde(skip)]
    pub ranks: Vec<usize>,
}

impl EvalResult {
    pub fn at(&self, k: usize) -> Option<(f64, f64)> {
        let j = self.cutoffs.iter().position(|&c| c == k)?;
        Some((self.recall[j], self.ndcg[j]))
    }

    fn from_ranks(phase: EvalPhase, cutoffs: &[usize], ranks: Vec<usize>) -> Self {
        let n = ranks.len().max(1) as f64;
        let recall = cutoffs
            .iter()
            .map(|&k| ranks.iter().map(|&r| recall_at_k(r, k)).sum::<f64>() / n)
            .collect();
        let ndcg = cutoffs
            .iter()
            .map(|&k| ranks.iter().map(|&r| ndcg_at_k(r, k)).sum::<f64>() / n)
            .collect();
        Self {
            phase,
            cutoffs: cutoffs.to_vec(),
            recall,
            ndcg,
            n_users: ranks.len(),
            ranks,
        }
    }
}

/// Held-out item for `user` in `phase`.
pub fn held_out(split: &SplitDataset, user: usize, phase: EvalPhase) -> usize {
    match phase {
        EvalPhase::Validation => split.validation[user],
        EvalPhase::Test => split.test[user],
    }
}

/// Items skipped when ranking: training items, the validation item when
/// testing, and `extra`.
pub fn is_excluded(split: &SplitDataset, user: usize, phase: EvalPhase, extra: &BTreeSet<usize>, item: usize) -> bool {
    split.train[user].binary_search(&item).is_ok()
        || (phase == EvalPhase::Test && item == split.validation[user])
        || extra.contains(&item)
}

/// Evaluate per-user scores. `scorer(u)` returns one score per item and the
/// extra items to exclude for that user.
pub fn evaluate_with<F>(split: &SplitDataset, phase: EvalPhase, cutoffs: &[usize], scorer: F) -> EvalResult
where
    F: Fn(usize) -> (Vec<f64>, BTreeSet<usize>) + Sync,
{
    let ranks: Vec<usize> = (0..split.n_users)
        .into_par_iter()
        .map(|u| {
            let (scores, extra) = scorer(u);
            let target = held_out(split, u, phase);
            target_rank(&scores, target, |i| is_excluded(split, u, phase, &extra, i))
        })
        .collect();
    EvalResult::from_ranks(phase, cutoffs, ranks)
}

/// Evaluate a single propagated table shared by all users.
pub fn evaluate(final_table: &EmbeddingTable, split: &SplitDataset, phase: EvalPhase, cutoffs: &[usize]) -> EvalResult {
    let none = BTreeSet::new();
    evaluate_with(split, phase, cutoffs, |u| {
        let x = final_table.user(u);
        let scores = (0..final_table.n_items())
            .map(|i| dot(x, final_table.item(i)))
            .collect();
        (scores, none.clone())
    })
}
