//! Outer-power lifting of data rows and the diagonal sign structures that
//! turn a regularizer `lambda * ||w||_p^p` into extra kernel rows.
//!
//! Flat positions follow the row-major multi-index layout: the 0-based
//! tuple `(i_1, .., i_p)` over an alphabet of size `base` sits at
//! `i_1 * base^(p-1) + .. + i_p`.

use std::collections::HashMap;

use nalgebra::{DMatrix, DVector};

use crate::caratheodory::KernelRows;
use crate::error::{CoresetError, Result};
use crate::numerics::ensure_finite;
use crate::par;

/// Upper bound on entries per kernel row.
pub const MAX_ROW_ENTRIES: u128 = 10_000_000;

/// Row length `base^p`, rejected above [`MAX_ROW_ENTRIES`].
pub fn kernel_row_len(base: usize, p: usize) -> Result<usize> {
    let entries = (base as u128).checked_pow(p as u32).unwrap_or(u128::MAX);
    if entries > MAX_ROW_ENTRIES {
        return Err(CoresetError::SizeLimit {
            entries,
            limit: MAX_ROW_ENTRIES,
        });
    }
    Ok(entries as usize)
}

pub fn flat_index(multi: &[usize], base: usize) -> usize {
    multi.iter().fold(0, |acc, &i| acc * base + i)
}

pub fn multi_index(mut flat: usize, base: usize, p: usize) -> Vec<usize> {
    let mut out = vec![0; p];
    for slot in out.iter_mut().rev() {
        *slot = flat % base;
        flat /= base;
    }
    out
}

/// `vec(x ⊗ x ⊗ .. ⊗ x)` with `p` factors.
pub fn outer_power_vec(x: &[f64], p: usize) -> Vec<f64> {
    let mut out = vec![1.0];
    for _ in 0..p {
        let mut next = Vec::with_capacity(out.len() * x.len());
        for &a in &out {
            next.extend(x.iter().map(|&b| a * b));
        }
        out = next;
    }
    out
}

/// Where a kernel row came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RowProvenance {
    /// Index of the originating sample.
    Data(usize),
    /// Flat position on the regularizer diagonal.
    Regularizer(usize),
}

/// A single kernel row with its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct KernelRow {
    pub values: Vec<f64>,
    pub provenance: RowProvenance,
}

/// Diagonal of a `{-1, 0, +1}` sign tensor over `[d_aug]^p`, flattened.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignTensorDiagonal {
    pub d_aug: usize,
    pub p: usize,
    pub diag: Vec<i8>,
}

impl SignTensorDiagonal {
    pub fn len(&self) -> usize {
        self.diag.len()
    }

    pub fn is_empty(&self) -> bool {
        self.diag.is_empty()
    }

    pub fn get(&self, flat: usize) -> f64 {
        self.diag[flat] as f64
    }

    /// `(flat position, sign)` for every nonzero entry, in flat order.
    pub fn nonzero(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.diag
            .iter()
            .enumerate()
            .filter(|(_, &s)| s != 0)
            .map(|(j, &s)| (j, s as f64))
    }

    /// `1ᵀ diag(self) vec(q ⊗ .. ⊗ q)`.
    pub fn contract(&self, q: &[f64]) -> f64 {
        debug_assert_eq!(q.len(), self.d_aug);
        let lifted = outer_power_vec(q, self.p);
        self.nonzero().map(|(j, s)| s * lifted[j]).sum()
    }
}

/// Ridge sign matrix over `d + 1` slots (last one is the label):
/// `-1` above the diagonal, `0` at the label-label corner, `+1` elsewhere.
pub fn ridge_sign_matrix(d: usize) -> SignTensorDiagonal {
    let n = d + 1;
    let mut diag = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            diag.push(if i < j {
                -1
            } else if i == d && j == d {
                0
            } else {
                1
            });
        }
    }
    SignTensorDiagonal {
        d_aug: n,
        p: 2,
        diag,
    }
}

/// Sign matrix without a label slot: `-1` above the diagonal, `+1` elsewhere.
pub fn unlabeled_ridge_sign_matrix(d: usize) -> SignTensorDiagonal {
    let mut diag = Vec::with_capacity(d * d);
    for i in 0..d {
        for j in 0..d {
            diag.push(if i < j { -1 } else { 1 });
        }
    }
    SignTensorDiagonal {
        d_aug: d,
        p: 2,
        diag,
    }
}

/// Sign tensor for `lambda ||w||_p^p` over `d + 1` slots.
///
/// Each class of permuted multi-indices that are not all equal gets zero
/// total: the first half of its permutations (lexicographic order) is `-1`
/// and the second half `+1`. Classes with an odd number of permutations
/// (possible from `p = 6` on) zero their first permutation and split the
/// rest. All-equal tuples `(i, .., i)` are `+1` for features and `0` for
/// the label.
pub fn lp_sign_tensor(d: usize, p: usize) -> Result<SignTensorDiagonal> {
    if p < 2 || !p.is_multiple_of(2) {
        return Err(CoresetError::InvalidArgument(format!(
            "p must be even and at least 2, got {p}"
        )));
    }
    let base = d + 1;
    let len = kernel_row_len(base, p)?;
    let mut diag = vec![0i8; len];

    let mut classes: HashMap<usize, Vec<usize>> = HashMap::new();
    for flat in 0..len {
        let mut multi = multi_index(flat, base, p);
        multi.sort_unstable();
        classes
            .entry(flat_index(&multi, base))
            .or_default()
            .push(flat);
    }

    for (key, members) in classes {
        let first = multi_index(key, base, p)[0];
        if members.len() == 1 {
            // only all-equal tuples have a single permutation
            diag[members[0]] = if first == d { 0 } else { 1 };
            continue;
        }
        let rest = if members.len() % 2 == 1 {
            &members[1..]
        } else {
            &members[..]
        };
        let half = rest.len() / 2;
        for &flat in &rest[..half] {
            diag[flat] = -1;
        }
        for &flat in &rest[half..] {
            diag[flat] = 1;
        }
    }

    Ok(SignTensorDiagonal {
        d_aug: base,
        p,
        diag,
    })
}

/// `+1` on the feature diagonal `(i, .., i)`, `i < d`, and `0` elsewhere:
/// one regularizer row per feature.
pub fn diagonal_regularizer(d: usize, p: usize) -> Result<SignTensorDiagonal> {
    let base = d + 1;
    let len = kernel_row_len(base, p)?;
    let mut diag = vec![0i8; len];
    for i in 0..d {
        diag[flat_index(&vec![i; p], base)] = 1;
    }
    Ok(SignTensorDiagonal {
        d_aug: base,
        p,
        diag,
    })
}

/// Which regularizer rows are appended to the data rows.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RegularizerLayout {
    /// `lambda * T` with the full sign tensor.
    #[default]
    SignTensor,
    /// `lambda * vec(e_i ⊗ .. ⊗ e_i)` for each feature `i`.
    Diagonal,
}

impl RegularizerLayout {
    pub fn as_str(&self) -> &'static str {
        match self {
            RegularizerLayout::SignTensor => "sign-tensor",
            RegularizerLayout::Diagonal => "diagonal",
        }
    }

    pub fn signs(&self, d: usize, p: usize) -> Result<SignTensorDiagonal> {
        match self {
            RegularizerLayout::SignTensor if p == 2 => Ok(ridge_sign_matrix(d)),
            RegularizerLayout::SignTensor => lp_sign_tensor(d, p),
            RegularizerLayout::Diagonal => diagonal_regularizer(d, p),
        }
    }
}

impl std::str::FromStr for RegularizerLayout {
    type Err = CoresetError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sign-tensor" | "sign" => Ok(RegularizerLayout::SignTensor),
            "diagonal" => Ok(RegularizerLayout::Diagonal),
            other => Err(CoresetError::InvalidArgument(format!(
                "unknown regularizer layout '{other}'"
            ))),
        }
    }
}

/// Kernelized rows: data rows first, then (when `lambda > 0`) one row per
/// nonzero entry of `lambda * T`.
#[derive(Debug, Clone)]
pub struct KernelMatrix {
    pub rows: DMatrix<f64>,
    pub provenance: Vec<RowProvenance>,
    pub d_aug: usize,
    pub p: usize,
    pub lambda: f64,
    pub n_data: usize,
    pub signs: SignTensorDiagonal,
    pub layout: RegularizerLayout,
}

impl KernelMatrix {
    pub fn row(&self, i: usize) -> KernelRow {
        KernelRow {
            values: self.rows.row(i).iter().copied().collect(),
            provenance: self.provenance[i],
        }
    }

    pub fn n_rows(&self) -> usize {
        self.rows.nrows()
    }

    /// The data block (no regularizer rows).
    pub fn data_block(&self) -> DMatrix<f64> {
        self.rows.rows(0, self.n_data).into_owned()
    }

    /// Column sums `1ᵀ H`.
    pub fn column_sums(&self) -> DVector<f64> {
        self.rows.row_sum().transpose()
    }
}

impl KernelRows for KernelMatrix {
    fn kernel_rows(&self) -> &DMatrix<f64> {
        &self.rows
    }
}

/// Lifts `d_i = (x_i, y_i)` to `vec(d_i ⊗^p)` and appends `lambda * T` rows.
pub fn build_regression_kernel(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    lambda: f64,
    p: usize,
) -> Result<KernelMatrix> {
    build_regression_kernel_with(x, y, lambda, p, RegularizerLayout::default())
}

pub fn build_regression_kernel_with(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    lambda: f64,
    p: usize,
    layout: RegularizerLayout,
) -> Result<KernelMatrix> {
    let (n, d) = x.shape();
    if y.len() != n {
        return Err(CoresetError::DimensionMismatch {
            expected: n,
            found: y.len(),
        });
    }
    if n == 0 {
        return Err(CoresetError::InvalidArgument("no samples".into()));
    }
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(CoresetError::InvalidArgument(format!(
            "lambda must be finite and nonnegative, got {lambda}"
        )));
    }
    ensure_finite(x, "design matrix")?;
    if y.iter().any(|v| !v.is_finite()) {
        return Err(CoresetError::InvalidInput(
            "labels contain non-finite values".into(),
        ));
    }
    let signs = layout.signs(d, p)?;
    let width = signs.len();

    let lifted = par::map_range(n, |i| {
        let mut aug: Vec<f64> = x.row(i).iter().copied().collect();
        aug.push(y[i]);
        outer_power_vec(&aug, p)
    });

    let reg: Vec<(usize, f64)> = if lambda > 0.0 {
        signs.nonzero().collect()
    } else {
        Vec::new()
    };
    let total = n + reg.len();
    let mut rows = DMatrix::zeros(total, width);
    for (i, r) in lifted.iter().enumerate() {
        for (j, &v) in r.iter().enumerate() {
            rows[(i, j)] = v;
        }
    }
    let mut provenance: Vec<RowProvenance> = (0..n).map(RowProvenance::Data).collect();
    for (k, &(pos, sign)) in reg.iter().enumerate() {
        rows[(n + k, pos)] = lambda * sign;
        provenance.push(RowProvenance::Regularizer(pos));
    }

    Ok(KernelMatrix {
        rows,
        provenance,
        d_aug: d + 1,
        p,
        lambda,
        n_data: n,
        signs,
        layout,
    })
}
