//! Per-round client sampling, stratified by cluster.

use rand::seq::index;
use rand::Rng;

/// Split `budget` over clusters in proportion to their sizes by largest
/// remainder, then move slots so every nonempty cluster gets at least one.
/// Slots are taken from the cluster with the largest quota (lowest id on
/// ties). A quota never exceeds its cluster size.
pub fn apportion(sizes: &[usize], budget: usize) -> Vec<usize> {
    let total: usize = sizes.iter().sum();
    let budget = budget.min(total);
    if budget == 0 {
        return vec![0; sizes.len()];
    }
    let mut quotas: Vec<usize> = sizes.iter().map(|&s| s * budget / total).collect();
    let assigned: usize = quotas.iter().sum();
    let mut order: Vec<usize> = (0..sizes.len()).collect();
    // Remainder `s * budget mod total` ranks the fractional parts exactly.
    order.sort_by_key(|&c| (std::cmp::Reverse((sizes[c] * budget) % total), c));
    for &c in order.iter().take(budget - assigned) {
        quotas[c] += 1;
    }
    loop {
        let Some(starved) = (0..sizes.len()).find(|&c| sizes[c] > 0 && quotas[c] == 0) else {
            break;
        };
        let donor = (0..sizes.len())
            .filter(|&c| quotas[c] > 1)
            .max_by_key(|&c| (quotas[c], std::cmp::Reverse(c)));
        match donor {
            Some(d) => {
                quotas[d] -= 1;
                quotas[starved] += 1;
            }
            // More nonempty clusters than slots: nothing left to move.
            None => break,
        }
    }
    quotas
}

/// Sample each cluster's quota uniformly without replacement. Returns the
/// selected point ids in ascending order.
pub fn select_clients<R: Rng + ?Sized>(assignment: &[usize], k: usize, budget: usize, rng: &mut R) -> Vec<usize> {
    let mut members: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (p, &c) in assignment.iter().enumerate() {
        members[c].push(p);
    }
    let sizes: Vec<usize> = members.iter().map(Vec::len).collect();
    let quotas = apportion(&sizes, budget);
    let mut out = Vec::with_capacity(quotas.iter().sum());
    for (m, &q) in members.iter().zip(&quotas) {
        out.extend(index::sample(rng, m.len(), q).into_iter().map(|j| m[j]));
    }
    out.sort_unstable();
    out
}
