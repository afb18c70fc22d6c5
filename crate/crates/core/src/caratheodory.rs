//! Exact convex-combination sparsification.
//!
//! [`caratheodory_reduce`] repeatedly finds an affine dependence among the
//! weighted points and shifts weight along it until one point reaches zero.
//! [`fast_caratheodory`] applies the same reduction to cluster means, keeps
//! the members of surviving clusters and recurses, so most of the work is
//! done on a few small matrices. Both preserve the weighted sum and the
//! total weight and return at most `rank + 1` points.

use nalgebra::{DMatrix, DVector};

use crate::error::{CoresetError, Result};
use crate::numerics::{ensure_finite, null_space_basis};
use crate::par;

/// Weights at or below this fraction of the largest input weight are dropped.
const ZERO_WEIGHT_RATIO: f64 = 1e-12;

/// A borrowed point matrix (one point per row) with positive row weights.
///
/// Rows given zero weight are stripped on construction; [`rows`](Self::rows)
/// maps the retained entries back to row indices of `points`.
#[derive(Debug, Clone)]
pub struct WeightedPointSet<'a> {
    points: &'a DMatrix<f64>,
    rows: Vec<usize>,
    weights: Vec<f64>,
}

impl<'a> WeightedPointSet<'a> {
    pub fn new(points: &'a DMatrix<f64>, weights: &[f64]) -> Result<Self> {
        if weights.len() != points.nrows() {
            return Err(CoresetError::DimensionMismatch {
                expected: points.nrows(),
                found: weights.len(),
            });
        }
        ensure_finite(points, "point matrix")?;
        if let Some(i) = weights.iter().position(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(CoresetError::InvalidInput(format!(
                "weight {i} must be finite and nonnegative, got {}",
                weights[i]
            )));
        }
        let (rows, weights): (Vec<usize>, Vec<f64>) = weights
            .iter()
            .enumerate()
            .filter(|(_, &w)| w > 0.0)
            .map(|(i, &w)| (i, w))
            .unzip();
        if rows.is_empty() {
            return Err(CoresetError::InvalidArgument(
                "point set has no positively weighted rows".into(),
            ));
        }
        Ok(WeightedPointSet {
            points,
            rows,
            weights,
        })
    }

    /// Every row with weight 1.
    pub fn unit(points: &'a DMatrix<f64>) -> Result<Self> {
        Self::new(points, &vec![1.0; points.nrows()])
    }

    pub fn points(&self) -> &DMatrix<f64> {
        self.points
    }

    pub fn rows(&self) -> &[usize] {
        &self.rows
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    pub fn weighted_sum(&self) -> DVector<f64> {
        weighted_row_sum(self.points, &self.rows, &self.weights)
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }
}

/// Selected row indices (strictly increasing) and their positive weights.
#[derive(Debug, Clone, PartialEq)]
pub struct CoresetSelection {
    pub indices: Vec<usize>,
    pub weights: Vec<f64>,
}

impl CoresetSelection {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn total_weight(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// `sum_i w_i * points[indices[i]]`.
    pub fn weighted_sum(&self, points: &DMatrix<f64>) -> DVector<f64> {
        weighted_row_sum(points, &self.indices, &self.weights)
    }

    fn from_pairs(mut pairs: Vec<(usize, f64)>) -> Self {
        pairs.sort_by_key(|&(i, _)| i);
        let (indices, weights) = pairs.into_iter().unzip();
        CoresetSelection { indices, weights }
    }
}

fn weighted_row_sum(points: &DMatrix<f64>, rows: &[usize], weights: &[f64]) -> DVector<f64> {
    let mut acc = DVector::zeros(points.ncols());
    for (&r, &w) in rows.iter().zip(weights) {
        for c in 0..points.ncols() {
            acc[c] += w * points[(r, c)];
        }
    }
    acc
}

/// Anything that exposes a matrix of kernelized rows.
pub trait KernelRows {
    fn kernel_rows(&self) -> &DMatrix<f64>;
}

impl KernelRows for DMatrix<f64> {
    fn kernel_rows(&self) -> &DMatrix<f64> {
        self
    }
}

/// Default number of clusters for [`fast_caratheodory`]: `2 (m + 2)`, capped at `n`.
pub fn default_clusters(n: usize, dim: usize) -> usize {
    (2 * (dim + 2)).min(n).max(2)
}

/// Base Carathéodory reduction on a weighted point set.
pub fn caratheodory_reduce(p: &WeightedPointSet<'_>) -> Result<CoresetSelection> {
    let pairs = reduce_rows(p.points, p.rows.clone(), p.weights.clone())?;
    Ok(CoresetSelection::from_pairs(pairs))
}

/// Carathéodory on `rows` of `points`. Returns `(row, weight)` pairs with
/// strictly positive weights.
///
/// Works on windows of the active set. One factorization of a window gives
/// every affine dependence among its points. Each dependence removes one
/// point, and that point is then eliminated from the dependences still
/// pending, so a window of `2 (m + 1)` points sheds up to `m + 1` of them.
fn reduce_rows(
    points: &DMatrix<f64>,
    rows: Vec<usize>,
    weights: Vec<f64>,
) -> Result<Vec<(usize, f64)>> {
    let dim = points.ncols();
    let n = rows.len();
    if n == 0 {
        return Err(CoresetError::InvalidArgument("empty point set".into()));
    }
    let max_weight = weights.iter().cloned().fold(0.0, f64::max);
    let floor = ZERO_WEIGHT_RATIO * max_weight;
    let mut active: Vec<(usize, f64)> = rows.into_iter().zip(weights).collect();

    // Any dim + 2 points are affinely dependent, so every full window
    // yields at least one dependence.
    let window_cap = 2 * (dim + 1);
    let mut windows = 0;

    while active.len() > 1 {
        let window = active.len().min(window_cap);
        let pivot = active[0].0;
        let diffs = DMatrix::from_fn(dim, window - 1, |r, c| {
            points[(active[c + 1].0, r)] - points[(pivot, r)]
        });
        let null = null_space_basis(&diffs)?;
        if null.ncols() == 0 {
            if window == active.len() {
                break;
            }
            return Err(CoresetError::NumericalFailure(format!(
                "no affine dependence among {window} points in dimension {dim}"
            )));
        }

        windows += 1;
        if windows > n {
            return Err(CoresetError::NumericalFailure(format!(
                "reduction did not terminate after {n} windows; \
                 {} of {n} points remain in dimension {dim}",
                active.len()
            )));
        }

        let mut pending: Vec<Vec<f64>> = null
            .column_iter()
            .map(|col| {
                let mut v = Vec::with_capacity(window);
                v.push(-col.sum());
                v.extend(col.iter().copied());
                v
            })
            .collect();

        for next in 0..pending.len() {
            let mut coeffs = std::mem::take(&mut pending[next]);
            let scale = coeffs.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if !(scale > 0.0) {
                continue;
            }
            // Entries at the noise level of the elimination are zeros.
            for v in coeffs.iter_mut() {
                if v.abs() <= 1e-13 * scale {
                    *v = 0.0;
                }
            }
            if !coeffs.iter().any(|&v| v > 0.0) {
                coeffs.iter_mut().for_each(|v| *v = -*v);
            }

            // Smallest ratio wins; ties keep the earliest position.
            let mut step: Option<(usize, f64)> = None;
            for (j, &v) in coeffs.iter().enumerate() {
                if v > 0.0 {
                    let ratio = active[j].1 / v;
                    if step.is_none_or(|(_, best)| ratio < best) {
                        step = Some((j, ratio));
                    }
                }
            }
            let Some((hit, alpha)) = step else { continue };

            for (j, &v) in coeffs.iter().enumerate() {
                if v != 0.0 {
                    active[j].1 = (active[j].1 - alpha * v).max(0.0);
                }
            }
            active[hit].1 = 0.0;

            let pivot_value = coeffs[hit];
            for other in pending.iter_mut().skip(next + 1) {
                let f = other[hit] / pivot_value;
                if f != 0.0 {
                    for (o, &c) in other.iter_mut().zip(&coeffs) {
                        *o -= f * c;
                    }
                }
                other[hit] = 0.0;
            }
        }
        active.retain(|&(_, w)| w > floor);
    }

    Ok(active)
}

/// Clustered Carathéodory: reduce cluster means, keep the members of the
/// surviving clusters with rescaled weights, and repeat.
pub fn fast_caratheodory(p: &WeightedPointSet<'_>, clusters: usize) -> Result<CoresetSelection> {
    if clusters < 2 {
        return Err(CoresetError::InvalidArgument(format!(
            "need at least 2 clusters, got {clusters}"
        )));
    }
    let points = p.points;
    let dim = points.ncols();
    let mut rows = p.rows.clone();
    let mut weights = p.weights.clone();

    loop {
        let n = rows.len();
        if n <= clusters.max(dim + 1) {
            break;
        }
        let chunk = n.div_ceil(clusters);
        let groups: Vec<(usize, usize)> = (0..n)
            .step_by(chunk)
            .map(|start| (start, (start + chunk).min(n)))
            .collect();

        let stats = par::map_slice(&groups, |&(start, end)| {
            let mut mass = 0.0;
            let mut mean = vec![0.0; dim];
            for idx in start..end {
                let w = weights[idx];
                mass += w;
                for (c, m) in mean.iter_mut().enumerate() {
                    *m += w * points[(rows[idx], c)];
                }
            }
            mean.iter_mut().for_each(|m| *m /= mass);
            (mean, mass)
        });
        let means = DMatrix::from_fn(groups.len(), dim, |r, c| stats[r].0[c]);
        let masses: Vec<f64> = stats.iter().map(|s| s.1).collect();

        let kept = reduce_rows(&means, (0..groups.len()).collect(), masses.clone())?;
        if kept.len() == groups.len() {
            // Clusters are no finer than the rank; finish on the points directly.
            break;
        }

        let mut next_rows = Vec::new();
        let mut next_weights = Vec::new();
        for (g, new_mass) in kept {
            let (start, end) = groups[g];
            let scale = new_mass / masses[g];
            for idx in start..end {
                next_rows.push(rows[idx]);
                next_weights.push(scale * weights[idx]);
            }
        }
        rows = next_rows;
        weights = next_weights;
    }

    let pairs = reduce_rows(points, rows, weights)?;
    Ok(CoresetSelection::from_pairs(pairs))
}

/// Unit-weight clustered reduction of a kernel matrix; preserves its column
/// sums. `clusters = None` uses [`default_clusters`].
pub fn accurate_coreset<K: KernelRows + ?Sized>(
    kernel: &K,
    clusters: Option<usize>,
) -> Result<CoresetSelection> {
    let rows = kernel.kernel_rows();
    if rows.nrows() == 0 {
        return Err(CoresetError::InvalidArgument(
            "kernel matrix has no rows".into(),
        ));
    }
    let set = WeightedPointSet::unit(rows)?;
    let k = clusters.unwrap_or_else(|| default_clusters(rows.nrows(), rows.ncols()));
    fast_caratheodory(&set, k.max(2))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::matrix_rank;
    use crate::testutil::random_matrix;

    fn assert_contracts(
        points: &DMatrix<f64>,
        input: &WeightedPointSet<'_>,
        sel: &CoresetSelection,
    ) {
        let full = input.weighted_sum();
        let got = sel.weighted_sum(points);
        let tol = 1e-9 * (1.0 + full.norm());
        for c in 0..full.len() {
            assert!(
                (full[c] - got[c]).abs() <= tol,
                "coord {c}: {} vs {}",
                full[c],
                got[c]
            );
        }
        let total = input.total_weight();
        assert!((sel.total_weight() - total).abs() <= 1e-9 * total);
        assert!(sel.weights.iter().all(|&w| w > 0.0));
        assert!(sel.indices.windows(2).all(|w| w[0] < w[1]));
        assert!(sel.len() <= matrix_rank(points).unwrap() + 1);
    }

    #[test]
    fn single_point_is_untouched() {
        let pts = DMatrix::from_row_slice(1, 2, &[3.0, 4.0]);
        let set = WeightedPointSet::unit(&pts).unwrap();
        let sel = caratheodory_reduce(&set).unwrap();
        assert_eq!(sel.indices, vec![0]);
        assert_eq!(sel.weights, vec![1.0]);
    }

    #[test]
    fn square_corners_reduce_to_three() {
        let pts = DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 0.0, 1.0, -1.0, 0.0, 0.0, -1.0]);
        let set = WeightedPointSet::unit(&pts).unwrap();
        let sel = caratheodory_reduce(&set).unwrap();
        assert!(sel.len() <= 3);
        let sum = sel.weighted_sum(&pts);
        assert!(sum.norm() <= 1e-12);
        assert!((sel.total_weight() - 4.0).abs() <= 1e-12);
    }

    #[test]
    fn collinear_points_keep_two() {
        let pts = DMatrix::from_fn(10, 3, |r, c| (r as f64 + 1.0) * [1.0, -2.0, 0.5][c]);
        let set = WeightedPointSet::unit(&pts).unwrap();
        assert_eq!(matrix_rank(&pts).unwrap(), 1);
        let sel = caratheodory_reduce(&set).unwrap();
        assert!(sel.len() <= 2);
        assert_contracts(&pts, &set, &sel);
    }

    #[test]
    fn zero_weights_are_stripped() {
        let pts = random_matrix(5, 2, 3);
        let set = WeightedPointSet::new(&pts, &[0.0, 1.0, 0.0, 2.0, 1.0]).unwrap();
        assert_eq!(set.rows(), &[1, 3, 4]);
        assert!(WeightedPointSet::new(&pts, &[0.0; 5]).is_err());
        assert!(WeightedPointSet::new(&pts, &[1.0, -1.0, 1.0, 1.0, 1.0]).is_err());
        assert!(WeightedPointSet::new(&pts, &[1.0; 4]).is_err());
    }

    #[test]
    fn small_generic_sets_are_returned_unchanged() {
        let pts = random_matrix(4, 3, 11);
        let weights = [0.5, 1.5, 2.0, 1.0];
        let set = WeightedPointSet::new(&pts, &weights).unwrap();
        let sel = fast_caratheodory(&set, 12).unwrap();
        assert_eq!(sel.indices, vec![0, 1, 2, 3]);
        assert_eq!(sel.weights, weights.to_vec());
    }

    #[test]
    fn fast_reduces_a_thousand_points() {
        let pts = random_matrix(1000, 4, 5);
        let set = WeightedPointSet::unit(&pts).unwrap();
        let sel = fast_caratheodory(&set, 12).unwrap();
        assert!(sel.len() <= 5);
        assert_contracts(&pts, &set, &sel);
    }

    #[test]
    fn fast_and_base_agree_on_sums() {
        let pts = random_matrix(30, 3, 9);
        let set = WeightedPointSet::unit(&pts).unwrap();
        let a = caratheodory_reduce(&set).unwrap();
        let b = fast_caratheodory(&set, 4).unwrap();
        let (sa, sb) = (a.weighted_sum(&pts), b.weighted_sum(&pts));
        assert!((sa - sb).amax() <= 1e-9 * (1.0 + set.weighted_sum().norm()));
        assert_contracts(&pts, &set, &a);
        assert_contracts(&pts, &set, &b);
    }

    #[test]
    fn two_clusters_still_terminate() {
        let pts = random_matrix(40, 3, 21);
        let set = WeightedPointSet::unit(&pts).unwrap();
        let sel = fast_caratheodory(&set, 2).unwrap();
        assert_contracts(&pts, &set, &sel);
        assert!(fast_caratheodory(&set, 1).is_err());
    }

    #[test]
    fn reduction_is_idempotent() {
        let pts = random_matrix(200, 3, 4);
        let set = WeightedPointSet::unit(&pts).unwrap();
        let first = fast_caratheodory(&set, 10).unwrap();
        let mut w = vec![0.0; pts.nrows()];
        for (&i, &wi) in first.indices.iter().zip(&first.weights) {
            w[i] = wi;
        }
        let again = caratheodory_reduce(&WeightedPointSet::new(&pts, &w).unwrap()).unwrap();
        assert_eq!(again, first);
    }

    #[test]
    fn accurate_coreset_on_one_row() {
        let pts = DMatrix::from_row_slice(1, 3, &[1.0, 2.0, 3.0]);
        let sel = accurate_coreset(&pts, None).unwrap();
        assert_eq!(sel.indices, vec![0]);
        assert_eq!(sel.weights, vec![1.0]);
    }

    #[test]
    fn deterministic_for_fixed_input() {
        let pts = random_matrix(500, 6, 8);
        let a = accurate_coreset(&pts, None).unwrap();
        let b = par::install(Some(1), || accurate_coreset(&pts, None).unwrap());
        assert_eq!(a, b);
    }
}
