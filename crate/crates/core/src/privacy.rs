//! Client-side privacy mechanisms: pseudo items, interacted-item masking,
//! clipped Laplace randomization of uploads and the per-upload budget.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::lightgnn::GradientUpdate;

/// Clip-and-noise parameters for uploaded values.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LdpConfig {
    /// Elementwise clip bound.
    pub clip_threshold: f64,
    /// Laplace scale.
    pub laplace_scale: f64,
    pub enabled: bool,
}

impl LdpConfig {
    pub fn new(clip_threshold: f64, laplace_scale: f64) -> Result<Self> {
        if !(clip_threshold > 0.0) {
            return Err(Error::config("privacy.clip_delta", "must be > 0"));
        }
        if !(laplace_scale >= 0.0) {
            return Err(Error::config("privacy.laplace_lambda", "must be >= 0"));
        }
        Ok(Self {
            clip_threshold,
            laplace_scale,
            enabled: true,
        })
    }

    pub fn disabled() -> Self {
        Self {
            clip_threshold: f64::INFINITY,
            laplace_scale: 0.0,
            enabled: false,
        }
    }
}

/// Per-upload budget bound `2 * delta / lambda`.
pub fn privacy_budget(cfg: &LdpConfig) -> Result<f64> {
    if cfg.laplace_scale == 0.0 {
        return Err(Error::UnboundedBudget);
    }
    Ok(2.0 * cfg.clip_threshold / cfg.laplace_scale)
}

/// One draw from `Laplace(0, scale)` by inverting the CDF of a uniform draw.
pub fn sample_laplace<R: Rng + ?Sized>(rng: &mut R, scale: f64) -> f64 {
    if scale == 0.0 {
        return 0.0;
    }
    loop {
        let u: f64 = rng.random::<f64>() - 0.5;
        let tail = 1.0 - 2.0 * u.abs();
        if tail > 0.0 {
            return -scale * u.signum() * tail.ln();
        }
    }
}

/// Clip each entry to `[-delta, delta]` and add independent Laplace noise.
pub fn randomize_in_place<R: Rng + ?Sized>(values: &mut [f64], cfg: &LdpConfig, rng: &mut R) {
    if !cfg.enabled {
        return;
    }
    let delta = cfg.clip_threshold;
    for v in values {
        *v = v.clamp(-delta, delta) + sample_laplace(rng, cfg.laplace_scale);
    }
}

/// Randomize every entry of an update. `data_count` passes through.
pub fn ldp_randomize<R: Rng + ?Sized>(update: &GradientUpdate, cfg: &LdpConfig, rng: &mut R) -> GradientUpdate {
    let mut out = update.clone();
    for g in out.user_grads.values_mut().chain(out.item_grads.values_mut()) {
        randomize_in_place(g, cfg, rng);
    }
    out
}

/// Draw up to `p` items uniformly without replacement from outside
/// `true_items`.
pub fn sample_pseudo_items<R: Rng + ?Sized>(
    n_items: usize,
    true_items: &BTreeSet<usize>,
    p: usize,
    rng: &mut R,
) -> BTreeSet<usize> {
    if p == 0 {
        return BTreeSet::new();
    }
    let complement: Vec<usize> = (0..n_items).filter(|i| !true_items.contains(i)).collect();
    if complement.len() <= p {
        return complement.into_iter().collect();
    }
    index::sample(rng, complement.len(), p)
        .into_iter()
        .map(|k| complement[k])
        .collect()
}

/// Hide `floor(mask_ratio * |true_items|)` items. Returns `(kept, masked)`.
pub fn mask_interacted_items<R: Rng + ?Sized>(
    true_items: &BTreeSet<usize>,
    mask_ratio: f64,
    rng: &mut R,
) -> (BTreeSet<usize>, BTreeSet<usize>) {
    debug_assert!((0.0..1.0).contains(&mask_ratio));
    let n_mask = (mask_ratio * true_items.len() as f64).floor() as usize;
    if n_mask == 0 {
        return (true_items.clone(), BTreeSet::new());
    }
    let items: Vec<usize> = true_items.iter().copied().collect();
    let masked: BTreeSet<usize> = index::sample(rng, items.len(), n_mask)
        .into_iter()
        .map(|k| items[k])
        .collect();
    let kept = true_items.difference(&masked).copied().collect();
    (kept, masked)
}

/// Synthetic gradients for pseudo items: zero-mean Gaussian entries whose
/// standard deviation matches the pooled per-entry deviation of the real
/// item gradients.
pub fn pseudo_item_gradients<R: Rng + ?Sized>(
    pseudo_items: &BTreeSet<usize>,
    real_item_grads: &BTreeMap<usize, Vec<f64>>,
    dim: usize,
    rng: &mut R,
) -> BTreeMap<usize, Vec<f64>> {
    let n = real_item_grads.values().map(Vec::len).sum::<usize>();
    let std = if n == 0 {
        0.0
    } else {
        let mean = real_item_grads.values().flatten().sum::<f64>() / n as f64;
        let var = real_item_grads
            .values()
            .flatten()
            .map(|v| (v - mean).powi(2))
            .sum::<f64>()
            / n as f64;
        var.sqrt()
    };
    let normal = Normal::new(0.0, std).expect("finite std");
    pseudo_items
        .iter()
        .map(|&i| (i, (0..dim).map(|_| normal.sample(rng)).collect()))
        .collect()
}
