//! Data-weighted gradient averaging and the server-side update step.

use std::collections::BTreeMap;

use crate::embedding::EmbeddingTable;
use crate::error::{Error, Result};
use crate::lightgnn::GradientUpdate;

fn accumulate(out: &mut BTreeMap<usize, Vec<f64>>, rows: &BTreeMap<usize, Vec<f64>>, w: f64, dim: usize) {
    for (&r, g) in rows {
        let acc = out.entry(r).or_insert_with(|| vec![0.0; dim]);
        for (a, v) in acc.iter_mut().zip(g) {
            *a += w * v;
        }
    }
}

/// `sum_n (D_n / sum_m D_m) * g_n`, rows absent from an update counting as
/// zero. The result's `data_count` is the total.
pub fn aggregate(updates: &[GradientUpdate]) -> Result<GradientUpdate> {
    let total: usize = updates.iter().map(|u| u.data_count).sum();
    if total == 0 {
        return Err(Error::ZeroDataCount);
    }
    let dim = updates[0].dim;
    if let Some(u) = updates.iter().find(|u| u.dim != dim) {
        return Err(Error::ShapeMismatch(format!(
            "updates of dimension {} and {}",
            dim, u.dim
        )));
    }
    let mut out = GradientUpdate::empty(dim);
    out.data_count = total;
    for u in updates {
        let w = u.data_count as f64 / total as f64;
        accumulate(&mut out.user_grads, &u.user_grads, w, dim);
        accumulate(&mut out.item_grads, &u.item_grads, w, dim);
    }
    Ok(out)
}

/// Gradient step on item rows of a row-major table.
pub fn apply_item_update(items: &mut [f64], dim: usize, grads: &BTreeMap<usize, Vec<f64>>, eta: f64) {
    for (&i, g) in grads {
        for (x, v) in items[i * dim..(i + 1) * dim].iter_mut().zip(g) {
            *x -= eta * v;
        }
    }
}

/// `table -= eta * update` on every row in the update.
pub fn apply_update(table: &mut EmbeddingTable, update: &GradientUpdate, eta: f64) {
    for (&u, g) in &update.user_grads {
        for (x, v) in table.user_mut(u).iter_mut().zip(g) {
            *x -= eta * v;
        }
    }
    let dim = table.dim();
    apply_item_update(table.items_flat_mut(), dim, &update.item_grads, eta);
}

#[cfg(test)]
mod tests {
    use super::*;

    fn item_update(rows: &[(usize, Vec<f64>)], count: usize) -> GradientUpdate {
        let mut u = GradientUpdate::empty(rows[0].1.len());
        u.item_grads = rows.iter().cloned().collect();
        u.data_count = count;
        u
    }

    #[test]
    fn weighted_by_data_count() {
        let a = item_update(&[(0, vec![1.0, 1.0])], 1);
        let b = item_update(&[(0, vec![3.0, 3.0])], 3);
        let g = aggregate(&[a, b]).unwrap();
        assert_eq!(g.item_grads[&0], vec![2.5, 2.5]);
        assert_eq!(g.data_count, 4);
    }

    #[test]
    fn missing_rows_count_as_zero() {
        let a = item_update(&[(0, vec![2.0])], 1);
        let b = item_update(&[(1, vec![4.0])], 1);
        let g = aggregate(&[a, b]).unwrap();
        assert_eq!(g.item_grads[&0], vec![1.0]);
        assert_eq!(g.item_grads[&1], vec![2.0]);
    }

    #[test]
    fn single_update_passes_through() {
        let a = item_update(&[(3, vec![0.25, -1.5])], 7);
        let g = aggregate(std::slice::from_ref(&a)).unwrap();
        assert_eq!(g.item_grads, a.item_grads);
    }

    #[test]
    fn zero_total_is_an_error() {
        let a = item_update(&[(0, vec![1.0])], 0);
        assert!(matches!(aggregate(&[a]), Err(Error::ZeroDataCount)));
        assert!(matches!(aggregate(&[]), Err(Error::ZeroDataCount)));
    }

    #[test]
    fn update_step() {
        let mut t = EmbeddingTable::from_rows(&[vec![1.0]], &[vec![1.0], vec![2.0]]).unwrap();
        let g = item_update(&[(1, vec![10.0])], 1);
        apply_update(&mut t, &g, 0.1);
        assert_eq!(t.item(0), &[1.0]);
        assert!((t.item(1)[0] - 1.0).abs() < 1e-15);
    }
}
