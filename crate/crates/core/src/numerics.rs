//! Dense linear-algebra contracts shared by every pipeline: thin SVD,
//! numerical rank, null-space extraction and statistical dimension.
//!
//! The decompositions themselves come from `nalgebra`; this module pins
//! down ordering, tolerances and error behaviour on top of it.

use nalgebra::{DMatrix, DVector};

use crate::error::{CoresetError, Result};

/// Singular triple of a matrix, singular values sorted nonincreasing.
///
/// `left_basis` is `rows x r` and `right_basis` is `cols x r`, where `r` is the
/// number of retained singular values.
#[derive(Debug, Clone)]
pub struct SpectralSummary {
    pub singular_values: Vec<f64>,
    pub left_basis: DMatrix<f64>,
    pub right_basis: DMatrix<f64>,
    pub rank_tolerance: f64,
    pub shape: (usize, usize),
}

impl SpectralSummary {
    /// Summary holding only a spectrum, for callers that do not need the bases.
    /// The tolerance follows the default convention for a `rows x cols` source.
    pub fn from_singular_values(mut values: Vec<f64>, rows: usize, cols: usize) -> Self {
        values.sort_by(|a, b| b.total_cmp(a));
        let rank_tolerance = default_rank_tolerance(&values, rows, cols);
        SpectralSummary {
            singular_values: values,
            left_basis: DMatrix::zeros(rows, 0),
            right_basis: DMatrix::zeros(cols, 0),
            rank_tolerance,
            shape: (rows, cols),
        }
    }

    pub fn largest(&self) -> f64 {
        self.singular_values.first().copied().unwrap_or(0.0)
    }
}

/// `max(rows, cols) * eps * sigma_1`.
pub fn default_rank_tolerance(sorted_values: &[f64], rows: usize, cols: usize) -> f64 {
    let sigma1 = sorted_values.first().copied().unwrap_or(0.0);
    rows.max(cols) as f64 * f64::EPSILON * sigma1
}

pub fn ensure_finite(a: &DMatrix<f64>, what: &str) -> Result<()> {
    if let Some(pos) = a.iter().position(|v| !v.is_finite()) {
        // nalgebra storage is column-major
        let (r, c) = (pos % a.nrows().max(1), pos / a.nrows().max(1));
        return Err(CoresetError::InvalidInput(format!(
            "{what} has a non-finite entry at ({r}, {c})"
        )));
    }
    Ok(())
}

pub fn frobenius_norm(a: &DMatrix<f64>) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Thin SVD. With `k = None` every singular triple is returned; with
/// `k = Some(k)` only the top `k`.
pub fn thin_svd(a: &DMatrix<f64>, k: Option<usize>) -> Result<SpectralSummary> {
    ensure_finite(a, "matrix")?;
    let (rows, cols) = a.shape();
    let full = rows.min(cols);
    if let Some(k) = k {
        if k == 0 || k > full {
            return Err(CoresetError::InvalidArgument(format!(
                "requested {k} singular triples from a {rows}x{cols} matrix"
            )));
        }
    }
    if full == 0 {
        return Ok(SpectralSummary {
            singular_values: Vec::new(),
            left_basis: DMatrix::zeros(rows, 0),
            right_basis: DMatrix::zeros(cols, 0),
            rank_tolerance: 0.0,
            shape: (rows, cols),
        });
    }

    let svd = a.clone().svd(true, true);
    let u = svd
        .u
        .ok_or_else(|| CoresetError::NumericalFailure("SVD did not produce U".into()))?;
    let v_t = svd
        .v_t
        .ok_or_else(|| CoresetError::NumericalFailure("SVD did not produce V".into()))?;
    if svd.singular_values.iter().any(|s| !s.is_finite()) {
        return Err(CoresetError::NumericalFailure(
            "SVD produced non-finite singular values".into(),
        ));
    }

    let mut order: Vec<usize> = (0..full).collect();
    order.sort_by(|&i, &j| {
        svd.singular_values[j]
            .total_cmp(&svd.singular_values[i])
            .then(i.cmp(&j))
    });
    let keep = k.unwrap_or(full);
    order.truncate(keep);

    let singular_values: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();
    let left_basis = DMatrix::from_fn(rows, keep, |r, c| u[(r, order[c])]);
    let right_basis = DMatrix::from_fn(cols, keep, |r, c| v_t[(order[c], r)]);
    // tolerance is anchored at sigma_1 whether or not the spectrum is truncated
    let rank_tolerance = rows.max(cols) as f64 * f64::EPSILON * singular_values[0];

    Ok(SpectralSummary {
        singular_values,
        left_basis,
        right_basis,
        rank_tolerance,
        shape: (rows, cols),
    })
}

/// Number of singular values strictly above the summary's rank tolerance.
pub fn effective_rank(s: &SpectralSummary) -> usize {
    s.singular_values
        .iter()
        .filter(|&&v| v > s.rank_tolerance)
        .count()
}

/// Numerical rank of a matrix under the default tolerance.
pub fn matrix_rank(a: &DMatrix<f64>) -> Result<usize> {
    Ok(effective_rank(&thin_svd(a, None)?))
}

/// Unit vector `v` with `A v ≈ 0`: the right singular vector belonging to the
/// smallest singular value.
pub fn null_space_vector(a: &DMatrix<f64>) -> Result<DVector<f64>> {
    ensure_finite(a, "matrix")?;
    let (rows, cols) = a.shape();
    if cols == 0 {
        return Err(CoresetError::NoNullSpace {
            rows,
            cols,
            rank: 0,
        });
    }
    if rows == 0 {
        let mut v = DVector::zeros(cols);
        v[0] = 1.0;
        return Ok(v);
    }

    // Pad with zero rows so the decomposition yields a full right basis.
    let padded;
    let square = if rows < cols {
        padded = {
            let mut m = DMatrix::zeros(cols, cols);
            m.view_mut((0, 0), (rows, cols)).copy_from(a);
            m
        };
        &padded
    } else {
        a
    };

    let s = thin_svd(square, None)?;
    let rank = effective_rank(&s);
    if rank >= cols {
        return Err(CoresetError::NoNullSpace { rows, cols, rank });
    }
    let v = s.right_basis.column(cols - 1).into_owned();
    let norm = v.norm();
    if !(norm.is_finite() && norm > 0.0) {
        return Err(CoresetError::NumericalFailure(
            "degenerate null-space vector".into(),
        ));
    }
    Ok(v / norm)
}

/// Columns spanning the null space of `a` (`cols x nullity`), from a
/// column-pivoted QR. The basis is in echelon form, not orthonormal: each
/// column is one free variable set to 1 and solved for the pivot variables.
pub fn null_space_basis(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    ensure_finite(a, "matrix")?;
    let (rows, cols) = a.shape();
    if rows == 0 || cols == 0 {
        return Ok(DMatrix::identity(cols, cols));
    }
    let qr = a.clone().col_piv_qr();
    let r = qr.r();
    let diag = r.nrows().min(cols);
    let lead = r[(0, 0)].abs();
    let tol = rows.max(cols) as f64 * f64::EPSILON * lead;
    let rank = (0..diag).take_while(|&i| r[(i, i)].abs() > tol).count();
    let nullity = cols - rank;
    if nullity == 0 {
        return Ok(DMatrix::zeros(cols, 0));
    }

    // permuted coordinates: [-R11^-1 R12; I]
    let mut basis = DMatrix::zeros(cols, nullity);
    if rank > 0 {
        let r11 = r.view((0, 0), (rank, rank));
        let r12 = r.view((0, rank), (rank, nullity)).into_owned();
        let x = r11.solve_upper_triangular(&r12).ok_or_else(|| {
            CoresetError::NumericalFailure("singular pivot block in null-space basis".into())
        })?;
        basis.view_mut((0, 0), (rank, nullity)).copy_from(&(-x));
    }
    for j in 0..nullity {
        basis[(rank + j, j)] = 1.0;
    }
    qr.p().inv_permute_rows(&mut basis);
    Ok(basis)
}

/// `sum_i 1 / (1 + lambda^2 / sigma_i^2)` over the numerically nonzero
/// singular values. At `lambda = 0` this is exactly the effective rank.
pub fn statistical_dimension(s: &SpectralSummary, lambda: f64) -> Result<f64> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(CoresetError::InvalidArgument(format!(
            "lambda must be finite and nonnegative, got {lambda}"
        )));
    }
    let lam2 = lambda * lambda;
    Ok(s.singular_values
        .iter()
        .filter(|&&v| v > s.rank_tolerance)
        .map(|&v| {
            if lam2 == 0.0 {
                1.0
            } else {
                1.0 / (1.0 + lam2 / (v * v))
            }
        })
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::testutil::random_matrix;

    fn reconstruct(s: &SpectralSummary) -> DMatrix<f64> {
        let sigma = DMatrix::from_diagonal(&DVector::from_vec(s.singular_values.clone()));
        &s.left_basis * sigma * s.right_basis.transpose()
    }

    #[test]
    fn identity_spectrum() {
        let s = thin_svd(&DMatrix::identity(3, 3), None).unwrap();
        assert_eq!(s.singular_values, vec![1.0, 1.0, 1.0]);
    }

    #[test]
    fn diagonal_top_two() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![3.0, 2.0, 0.0]));
        let s = thin_svd(&a, Some(2)).unwrap();
        assert!((s.singular_values[0] - 3.0).abs() < 1e-14);
        assert!((s.singular_values[1] - 2.0).abs() < 1e-14);
        assert_eq!(s.left_basis.shape(), (3, 2));
        assert_eq!(s.right_basis.shape(), (3, 2));
    }

    #[test]
    fn random_reconstruction_and_orthonormality() {
        let a = random_matrix(20, 5, 7);
        let s = thin_svd(&a, None).unwrap();
        let resid = frobenius_norm(&(reconstruct(&s) - &a));
        assert!(
            resid <= 1e-8 * (1.0 + frobenius_norm(&a)),
            "residual {resid}"
        );
        for basis in [&s.left_basis, &s.right_basis] {
            let gram = basis.transpose() * basis;
            let dev = gram - DMatrix::<f64>::identity(basis.ncols(), basis.ncols());
            assert!(dev.amax() <= 1e-10);
        }
        assert!(s.singular_values.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn k_out_of_range_and_nonfinite_rejected() {
        let a = DMatrix::<f64>::identity(3, 2);
        assert!(matches!(
            thin_svd(&a, Some(0)),
            Err(CoresetError::InvalidArgument(_))
        ));
        assert!(matches!(
            thin_svd(&a, Some(3)),
            Err(CoresetError::InvalidArgument(_))
        ));
        let mut b = a.clone();
        b[(1, 1)] = f64::NAN;
        assert!(matches!(
            thin_svd(&b, None),
            Err(CoresetError::InvalidInput(_))
        ));
    }

    #[test]
    fn effective_rank_examples() {
        let s = SpectralSummary::from_singular_values(vec![1.0, 1.0, 0.0], 3, 3);
        assert_eq!(effective_rank(&s), 2);
        // tolerance = 2 * eps * 5 ≈ 2.2e-15, far above 1e-18
        let s = SpectralSummary::from_singular_values(vec![5.0, 1e-18], 2, 2);
        assert_eq!(effective_rank(&s), 1);
        let s = SpectralSummary::from_singular_values(vec![], 0, 0);
        assert_eq!(effective_rank(&s), 0);
    }

    #[test]
    fn null_vector_of_single_equation() {
        let a = DMatrix::from_row_slice(1, 2, &[1.0, 1.0]);
        let v = null_space_vector(&a).unwrap();
        let expect = 1.0 / 2f64.sqrt();
        assert!((v[0].abs() - expect).abs() < 1e-12);
        assert!((v[0] + v[1]).abs() < 1e-12);
    }

    #[test]
    fn null_vector_of_dependent_columns() {
        // columns e1, e2, e1 + e2
        let a = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 1.0, 0.0, 1.0, 1.0, 0.0, 0.0, 0.0]);
        let v = null_space_vector(&a).unwrap();
        assert!((&a * &v).norm() <= 1e-10 * frobenius_norm(&a));
        assert!((v.norm() - 1.0).abs() < 1e-12);
        let expect = 1.0 / 3f64.sqrt();
        assert!((v[0].abs() - expect).abs() < 1e-10);
        assert!((v[0] - v[1]).abs() < 1e-10 && (v[0] + v[2]).abs() < 1e-10);
    }

    #[test]
    fn invertible_has_no_null_space() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 3.0]);
        assert!(matches!(
            null_space_vector(&a),
            Err(CoresetError::NoNullSpace { rank: 2, .. })
        ));
    }

    #[test]
    fn statistical_dimension_examples() {
        let s = SpectralSummary::from_singular_values(vec![2.0, 1.0], 2, 2);
        assert_eq!(statistical_dimension(&s, 0.0).unwrap(), 2.0);
        // 1/(1 + 1/4) + 1/(1 + 1) = 0.8 + 0.5
        assert!((statistical_dimension(&s, 1.0).unwrap() - 1.3).abs() < 1e-15);
        assert!(statistical_dimension(&s, 1e6).unwrap() < 1e-10);
        assert!(statistical_dimension(&s, -1.0).is_err());
    }

    #[test]
    fn null_space_basis_annihilates() {
        let a = crate::testutil::random_matrix(4, 9, 3);
        let n = null_space_basis(&a).unwrap();
        assert_eq!(n.shape(), (9, 5));
        assert!((&a * &n).amax() <= 1e-12 * n.amax());
        assert_eq!(matrix_rank(&n).unwrap(), 5);

        // rank-deficient: third column copies the first
        let b = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 1.0, 3.0, 4.0, 3.0]);
        let n = null_space_basis(&b).unwrap();
        assert_eq!(n.ncols(), 1);
        let v = n.column(0) / n.column(0).norm();
        assert!((v[0] + v[2]).abs() < 1e-12 && v[1].abs() < 1e-12);

        assert_eq!(
            null_space_basis(&DMatrix::identity(3, 3)).unwrap().ncols(),
            0
        );
        assert_eq!(null_space_basis(&DMatrix::zeros(2, 3)).unwrap().ncols(), 3);
    }
}
