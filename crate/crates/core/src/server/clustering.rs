//! k-means over uploaded user embeddings.

use rand::Rng;

use crate::error::{Error, Result};

/// Maximum Lloyd iterations per clustering call.
pub const MAX_ITERATIONS: usize = 100;

#[derive(Clone, Debug, PartialEq)]
pub struct Clustering {
    pub k: usize,
    pub dim: usize,
    /// Cluster id per point.
    pub assignment: Vec<usize>,
    /// `k * dim` centroid coordinates, row-major.
    pub centroids: Vec<f64>,
    /// Within-cluster sum of squares after each Lloyd iteration.
    pub inertia_history: Vec<f64>,
    pub converged: bool,
}

impl Clustering {
    pub fn centroid(&self, c: usize) -> &[f64] {
        &self.centroids[c * self.dim..(c + 1) * self.dim]
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.k];
        for &c in &self.assignment {
            s[c] += 1;
        }
        s
    }

    pub fn members(&self, c: usize) -> Vec<usize> {
        (0..self.assignment.len())
            .filter(|&p| self.assignment[p] == c)
            .collect()
    }

    pub fn inertia(&self) -> f64 {
        self.inertia_history.last().copied().unwrap_or(0.0)
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn check_input(points: &[f64], dim: usize, k: usize) -> Result<usize> {
    if dim == 0 || points.len() % dim != 0 {
        return Err(Error::ShapeMismatch(format!(
            "{} values do not form rows of dimension {dim}",
            points.len()
        )));
    }
    let n = points.len() / dim;
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    if k == 0 || k > n {
        return Err(Error::config("cluster.k", format!("must be in 1..={n}")));
    }
    Ok(n)
}

/// k-means++ seeding. Once every remaining point coincides with a chosen
/// center, further centers are drawn uniformly from the unchosen points.
pub fn kmeans_plus_plus<R: Rng + ?Sized>(points: &[f64], dim: usize, k: usize, rng: &mut R) -> Vec<f64> {
    let n = points.len() / dim;
    let row = |p: usize| &points[p * dim..(p + 1) * dim];
    let mut chosen = vec![false; n];
    let first = rng.random_range(0..n);
    chosen[first] = true;
    let mut centroids = row(first).to_vec();
    let mut d2: Vec<f64> = (0..n).map(|p| sq_dist(row(p), row(first))).collect();
    while centroids.len() < k * dim {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = None;
            for (p, &w) in d2.iter().enumerate() {
                if w > 0.0 {
                    pick = Some(p);
                    if target < w {
                        break;
                    }
                    target -= w;
                }
            }
            pick.expect("positive total weight")
        } else {
            let free: Vec<usize> = (0..n).filter(|&p| !chosen[p]).collect();
            free[rng.random_range(0..free.len())]
        };
        chosen[pick] = true;
        centroids.extend_from_slice(row(pick));
        for p in 0..n {
            d2[p] = d2[p].min(sq_dist(row(p), row(pick)));
        }
    }
    centroids
}

fn assign(points: &[f64], dim: usize, centroids: &[f64], out: &mut [usize]) {
    let k = centroids.len() / dim;
    for (p, slot) in out.iter_mut().enumerate() {
        let x = &points[p * dim..(p + 1) * dim];
        let mut best = (f64::INFINITY, 0);
        for c in 0..k {
            let d = sq_dist(x, &centroids[c * dim..(c + 1) * dim]);
            if d < best.0 {
                best = (d, c);
            }
        }
        *slot = best.1;
    }
}

/// Give every empty cluster the point farthest from its centroid among
/// clusters that can spare one.
fn repair_empty(points: &[f64], dim: usize, centroids: &mut [f64], assignment: &mut [usize], k: usize) {
    loop {
        let mut sizes = vec![0usize; k];
        for &c in assignment.iter() {
            sizes[c] += 1;
        }
        let Some(empty) = sizes.iter().position(|&s| s == 0) else {
            return;
        };
        let mut best: Option<(f64, usize)> = None;
        for (p, &c) in assignment.iter().enumerate() {
            if sizes[c] < 2 {
                continue;
            }
            let d = sq_dist(&points[p * dim..(p + 1) * dim], &centroids[c * dim..(c + 1) * dim]);
            if best.is_none_or(|(bd, _)| d > bd) {
                best = Some((d, p));
            }
        }
        let (_, p) = best.expect("k <= n leaves a cluster with two members");
        assignment[p] = empty;
        centroids[empty * dim..(empty + 1) * dim].copy_from_slice(&points[p * dim..(p + 1) * dim]);
    }
}

fn update_centroids(points: &[f64], dim: usize, assignment: &[usize], k: usize) -> Vec<f64> {
    let mut sums = vec![0.0; k * dim];
    let mut counts = vec![0usize; k];
    for (p, &c) in assignment.iter().enumerate() {
        counts[c] += 1;
        for (s, x) in sums[c * dim..(c + 1) * dim]
            .iter_mut()
            .zip(&points[p * dim..(p + 1) * dim])
        {
            *s += x;
        }
    }
    for c in 0..k {
        let inv = 1.0 / counts[c] as f64;
        sums[c * dim..(c + 1) * dim].iter_mut().for_each(|s| *s *= inv);
    }
    sums
}

fn wcss(points: &[f64], dim: usize, centroids: &[f64], assignment: &[usize]) -> f64 {
    assignment
        .iter()
        .enumerate()
        .map(|(p, &c)| sq_dist(&points[p * dim..(p + 1) * dim], &centroids[c * dim..(c + 1) * dim]))
        .sum()
}

/// Lloyd iterations from the given centroids.
pub fn lloyd(points: &[f64], dim: usize, initial: Vec<f64>) -> Result<Clustering> {
    let k = initial.len() / dim.max(1);
    let n = check_input(points, dim, k)?;
    if initial.len() != k * dim {
        return Err(Error::ShapeMismatch("centroid rows".into()));
    }
    let mut centroids = initial;
    let mut assignment = vec![usize::MAX; n];
    let mut next = vec![0; n];
    let mut history = Vec::new();
    let mut converged = false;
    for _ in 0..MAX_ITERATIONS {
        assign(points, dim, &centroids, &mut next);
        repair_empty(points, dim, &mut centroids, &mut next, k);
        if next == assignment {
            converged = true;
            break;
        }
        assignment.copy_from_slice(&next);
        centroids = update_centroids(points, dim, &assignment, k);
        history.push(wcss(points, dim, &centroids, &assignment));
    }
    Ok(Clustering {
        k,
        dim,
        assignment,
        centroids,
        inertia_history: history,
        converged,
    })
}

/// k-means with k-means++ seeding. `points` is row-major `n * dim`.
pub fn cluster_users<R: Rng + ?Sized>(points: &[f64], dim: usize, k: usize, rng: &mut R) -> Result<Clustering> {
    check_input(points, dim, k)?;
    lloyd(points, dim, kmeans_plus_plus(points, dim, k, rng))
}

/// Re-cluster starting from the centroids of a previous assignment, so
/// cluster `c` keeps its identity across rounds.
pub fn recluster(points: &[f64], dim: usize, previous: &[usize], k: usize) -> Result<Clustering> {
    let n = check_input(points, dim, k)?;
    if previous.len() != n || previous.iter().any(|&c| c >= k) {
        return Err(Error::ShapeMismatch("previous assignment".into()));
    }
    let mut assignment = previous.to_vec();
    let mut centroids = vec![0.0; k * dim];
    repair_empty(points, dim, &mut centroids, &mut assignment, k);
    lloyd(points, dim, update_centroids(points, dim, &assignment, k))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{stream, Phase};

    #[test]
    fn two_blobs() {
        let pts = [0.0, 0.0, 0.0, 1.0, 10.0, 10.0, 10.0, 11.0];
        let c = cluster_users(&pts, 2, 2, &mut stream(1, Phase::Cluster, &[])).unwrap();
        assert_eq!(c.assignment[0], c.assignment[1]);
        assert_eq!(c.assignment[2], c.assignment[3]);
        assert_ne!(c.assignment[0], c.assignment[2]);
        let a = c.assignment[0];
        assert_eq!(c.centroid(a), &[0.0, 0.5]);
        assert_eq!(c.centroid(1 - a), &[10.0, 10.5]);
        assert!(c.converged);
    }

    #[test]
    fn k_one_is_the_mean() {
        let pts = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let c = cluster_users(&pts, 1, 1, &mut stream(2, Phase::Cluster, &[])).unwrap();
        assert!(c.assignment.iter().all(|&a| a == 0));
        assert!((c.centroid(0)[0] - 3.5).abs() < 1e-12);
    }

    #[test]
    fn k_equals_n_gives_singletons() {
        let pts = [0.0, 1.0, 5.0, 9.0, 20.0];
        let c = cluster_users(&pts, 1, 5, &mut stream(3, Phase::Cluster, &[])).unwrap();
        assert!(c.sizes().iter().all(|&s| s == 1));
        assert_eq!(c.inertia(), 0.0);
    }

    #[test]
    fn duplicates_never_leave_empty_clusters() {
        let pts = [1.0; 12];
        let c = cluster_users(&pts, 2, 4, &mut stream(4, Phase::Cluster, &[])).unwrap();
        assert!(c.sizes().iter().all(|&s| s >= 1));
    }

    #[test]
    fn inertia_never_increases() {
        for seed in 0..20 {
            let mut rng = stream(seed, Phase::Init, &[]);
            let pts: Vec<f64> = (0..300).map(|_| rand::Rng::random::<f64>(&mut rng)).collect();
            let c = cluster_users(&pts, 3, 6, &mut stream(seed, Phase::Cluster, &[])).unwrap();
            for w in c.inertia_history.windows(2) {
                assert!(w[1] <= w[0] + 1e-12, "{w:?}");
            }
            assert!(c.sizes().iter().all(|&s| s >= 1));
        }
    }

    #[test]
    fn invalid_k() {
        let pts = [0.0, 1.0];
        assert!(cluster_users(&pts, 1, 0, &mut stream(5, Phase::Cluster, &[])).is_err());
        assert!(cluster_users(&pts, 1, 3, &mut stream(5, Phase::Cluster, &[])).is_err());
    }

    #[test]
    fn warm_start_keeps_labels() {
        let pts = [0.0, 0.1, 10.0, 10.2];
        let c = recluster(&pts, 1, &[1, 1, 0, 0], 2).unwrap();
        assert_eq!(c.assignment, vec![1, 1, 0, 0]);
    }
}
