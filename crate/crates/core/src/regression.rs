//! Ridge and ℓp-regularized ℓp regression coresets.
//!
//! The pipeline kernelizes `(x_i, y_i)` together with the regularizer sign
//! rows, reduces the kernel with [`accurate_coreset`], and rebuilds a small
//! problem: selected samples scaled by `weight^(1/p)` plus a sparse
//! regularizer diagonal that replaces `lambda * ||w||_p^p`.

use std::collections::BTreeMap;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::caratheodory::{accurate_coreset, CoresetSelection};
use crate::error::{CoresetError, Result};
use crate::kernelization::{
    build_regression_kernel_with, kernel_row_len, multi_index, KernelMatrix, RegularizerLayout,
    RowProvenance,
};
use crate::numerics::{effective_rank, ensure_finite, statistical_dimension, thin_svd};
use crate::par;
use crate::synthetic;

/// `min_w ||X w - y||_p^p + lambda ||w||_p^p`, `p` even.
#[derive(Debug, Clone)]
pub struct RegressionProblem {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub lambda: f64,
    pub p: usize,
}

impl RegressionProblem {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>, lambda: f64, p: usize) -> Result<Self> {
        if x.nrows() == 0 {
            return Err(CoresetError::InvalidArgument("no samples".into()));
        }
        if y.len() != x.nrows() {
            return Err(CoresetError::DimensionMismatch {
                expected: x.nrows(),
                found: y.len(),
            });
        }
        if p < 2 || !p.is_multiple_of(2) {
            return Err(CoresetError::InvalidArgument(format!(
                "p must be even and at least 2, got {p}"
            )));
        }
        if !(lambda.is_finite() && lambda >= 0.0) {
            return Err(CoresetError::InvalidArgument(format!(
                "lambda must be finite and nonnegative, got {lambda}"
            )));
        }
        ensure_finite(&x, "design matrix")?;
        if y.iter().any(|v| !v.is_finite()) {
            return Err(CoresetError::InvalidInput(
                "labels contain non-finite values".into(),
            ));
        }
        Ok(RegressionProblem { x, y, lambda, p })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn d(&self) -> usize {
        self.x.ncols()
    }

    pub fn with_lambda(&self, lambda: f64) -> Result<Self> {
        Self::new(self.x.clone(), self.y.clone(), lambda, self.p)
    }
}

fn check_query(d: usize, w: &[f64]) -> Result<()> {
    if w.len() != d {
        return Err(CoresetError::DimensionMismatch {
            expected: d,
            found: w.len(),
        });
    }
    Ok(())
}

/// `sum_i (x_iᵀ w - y_i)^p + lambda sum_j w_j^p`.
pub fn reg_loss(prob: &RegressionProblem, w: &[f64]) -> Result<f64> {
    check_query(prob.d(), w)?;
    let p = prob.p as i32;
    let data: f64 = (0..prob.n())
        .map(|i| {
            let r: f64 = prob.x.row(i).iter().zip(w).map(|(a, b)| a * b).sum::<f64>() - prob.y[i];
            r.powi(p)
        })
        .sum();
    let reg: f64 = w.iter().map(|v| v.powi(p)).sum();
    Ok(data + prob.lambda * reg)
}

/// The reconstructed small problem.
#[derive(Debug, Clone)]
pub struct RegressionCoreset {
    /// Original sample indices of the selected data rows.
    pub indices: Vec<usize>,
    /// Selected rows scaled by `weight^(1/p)`.
    pub xc: DMatrix<f64>,
    pub yc: DVector<f64>,
    pub data_weights: Vec<f64>,
    /// Flat regularizer position → accumulated `weight * sign`.
    pub reg_diag: BTreeMap<usize, f64>,
    pub lambda: f64,
    pub p: usize,
    /// Total number of kernel rows selected (data and regularizer).
    pub selected_rows: usize,
    pub kernel_rank: usize,
}

impl RegressionCoreset {
    pub fn d(&self) -> usize {
        self.xc.ncols()
    }

    pub fn n_data_rows(&self) -> usize {
        self.indices.len()
    }

    /// Rebuilds a coreset from selected samples, their weights and a
    /// regularizer diagonal, e.g. after deserialization.
    pub fn from_parts(
        prob: &RegressionProblem,
        indices: Vec<usize>,
        weights: Vec<f64>,
        reg_diag: BTreeMap<usize, f64>,
    ) -> Result<Self> {
        if indices.len() != weights.len() {
            return Err(CoresetError::DimensionMismatch {
                expected: indices.len(),
                found: weights.len(),
            });
        }
        if let Some(&bad) = indices.iter().find(|&&i| i >= prob.n()) {
            return Err(CoresetError::InvalidInput(format!(
                "sample index {bad} out of range for {} samples",
                prob.n()
            )));
        }
        if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
            return Err(CoresetError::InvalidInput(format!(
                "weight {w} is not positive"
            )));
        }
        let width = kernel_row_len(prob.d() + 1, prob.p)?;
        if let Some((&pos, _)) = reg_diag.iter().find(|(&pos, _)| pos >= width) {
            return Err(CoresetError::InvalidInput(format!(
                "regularizer position {pos} out of range for width {width}"
            )));
        }
        let root = 1.0 / prob.p as f64;
        let scales: Vec<f64> = weights.iter().map(|w| w.powf(root)).collect();
        let xc = DMatrix::from_fn(indices.len(), prob.d(), |r, c| {
            scales[r] * prob.x[(indices[r], c)]
        });
        let yc = DVector::from_fn(indices.len(), |r, _| scales[r] * prob.y[indices[r]]);
        let selected_rows = indices.len() + reg_diag.len();
        Ok(RegressionCoreset {
            indices,
            xc,
            yc,
            data_weights: weights,
            reg_diag,
            lambda: prob.lambda,
            p: prob.p,
            selected_rows,
            kernel_rank: 0,
        })
    }
}

/// Options for [`build_coreset_with`].
#[derive(Debug, Clone, Copy, Default)]
pub struct BuildOptions {
    pub clusters: Option<usize>,
    pub layout: RegularizerLayout,
    /// Skip the kernel SVD used to report `kernel_rank`.
    pub skip_rank: bool,
}

pub fn build_coreset(prob: &RegressionProblem) -> Result<RegressionCoreset> {
    build_coreset_with(prob, BuildOptions::default())
}

pub fn build_coreset_with(
    prob: &RegressionProblem,
    opts: BuildOptions,
) -> Result<RegressionCoreset> {
    let kernel = build_regression_kernel_with(&prob.x, &prob.y, prob.lambda, prob.p, opts.layout)?;
    let selection = accurate_coreset(&kernel, opts.clusters)?;
    let mut coreset = reconstruct(prob, &kernel, &selection)?;
    if !opts.skip_rank {
        coreset.kernel_rank = effective_rank(&thin_svd(&kernel.rows, None)?);
    }
    Ok(coreset)
}

/// Turns a kernel-row selection back into a [`RegressionCoreset`].
pub fn reconstruct(
    prob: &RegressionProblem,
    kernel: &KernelMatrix,
    selection: &CoresetSelection,
) -> Result<RegressionCoreset> {
    let mut indices = Vec::new();
    let mut weights = Vec::new();
    let mut reg_diag = BTreeMap::new();
    for (&row, &w) in selection.indices.iter().zip(&selection.weights) {
        match kernel.provenance[row] {
            RowProvenance::Data(i) => {
                indices.push(i);
                weights.push(w);
            }
            RowProvenance::Regularizer(pos) => {
                *reg_diag.entry(pos).or_insert(0.0) += w * kernel.signs.get(pos);
            }
        }
    }
    let mut c = RegressionCoreset::from_parts(prob, indices, weights, reg_diag)?;
    c.selected_rows = selection.len();
    Ok(c)
}

/// Coreset loss: `sum_i (xc_iᵀ w - yc_i)^p + lambda sum_j r_j (q ⊗^p)_j`
/// with `q = (w, -1)`.
pub fn coreset_reg_loss(c: &RegressionCoreset, w: &[f64]) -> Result<f64> {
    check_query(c.d(), w)?;
    let p = c.p as i32;
    let data: f64 = (0..c.xc.nrows())
        .map(|i| {
            let r: f64 = c.xc.row(i).iter().zip(w).map(|(a, b)| a * b).sum::<f64>() - c.yc[i];
            r.powi(p)
        })
        .sum();
    let base = c.d() + 1;
    let reg: f64 = c
        .reg_diag
        .iter()
        .map(|(&pos, &value)| {
            let term: f64 = multi_index(pos, base, c.p)
                .into_iter()
                .map(|i| if i == base - 1 { -1.0 } else { w[i] })
                .product();
            value * term
        })
        .sum();
    Ok(data + c.lambda * reg)
}

/// Minimizer of the coreset ridge loss (`p = 2`).
///
/// The regularizer diagonal contributes a quadratic form from its
/// feature block and a linear term from entries pairing a feature with the
/// label slot; both are needed to reproduce the full-data minimizer.
pub fn solve_ridge(c: &RegressionCoreset) -> Result<DVector<f64>> {
    if c.p != 2 {
        return Err(CoresetError::InvalidArgument(format!(
            "closed-form solve needs p = 2, got {}",
            c.p
        )));
    }
    let d = c.d();
    let base = d + 1;
    let mut quad = DMatrix::zeros(d, d);
    let mut lin = DVector::zeros(d);
    for (&pos, &value) in &c.reg_diag {
        let (i, j) = (pos / base, pos % base);
        match (i < d, j < d) {
            (true, true) => {
                quad[(i, j)] += 0.5 * value;
                quad[(j, i)] += 0.5 * value;
            }
            // r * w_i * (-1): contributes +r/2 to the right-hand side
            (true, false) => lin[i] += 0.5 * value,
            (false, true) => lin[j] += 0.5 * value,
            (false, false) => {}
        }
    }
    let xt = c.xc.transpose();
    let normal = &xt * &c.xc + quad * c.lambda;
    let rhs = &xt * &c.yc + lin * c.lambda;
    solve_spd(normal, rhs)
}

/// `(XᵀX + lambda I)^{-1} Xᵀ y` on the full data.
pub fn solve_ridge_full(prob: &RegressionProblem) -> Result<DVector<f64>> {
    if prob.p != 2 {
        return Err(CoresetError::InvalidArgument(format!(
            "closed-form solve needs p = 2, got {}",
            prob.p
        )));
    }
    let xt = prob.x.transpose();
    let normal = &xt * &prob.x + DMatrix::identity(prob.d(), prob.d()) * prob.lambda;
    solve_spd(normal, &xt * &prob.y)
}

fn solve_spd(normal: DMatrix<f64>, rhs: DVector<f64>) -> Result<DVector<f64>> {
    let chol = normal.cholesky().ok_or_else(|| {
        CoresetError::NumericalFailure("normal matrix is not positive definite".into())
    })?;
    let diag_ratio = {
        let l = chol.l_dirty();
        let ds: Vec<f64> = (0..l.nrows()).map(|i| l[(i, i)].abs()).collect();
        let max = ds.iter().cloned().fold(0.0, f64::max);
        let min = ds.iter().cloned().fold(f64::INFINITY, f64::min);
        min / max
    };
    // condition number of the normal matrix is roughly diag_ratio^-2
    if !(diag_ratio > 1e-7) {
        return Err(CoresetError::NumericalFailure(
            "normal matrix is numerically singular".into(),
        ));
    }
    let x = chol.solve(&rhs);
    if x.iter().any(|v| !v.is_finite()) {
        return Err(CoresetError::NumericalFailure(
            "solve produced non-finite values".into(),
        ));
    }
    Ok(x)
}

/// Loss agreement between a problem and its coreset over seeded queries.
#[derive(Debug, Clone, PartialEq)]
pub struct EquivalenceReport {
    pub num_queries: usize,
    pub seed: u64,
    pub max_abs_gap: f64,
    /// Largest `|full - coreset| / |full|`.
    pub max_rel_gap: f64,
    pub full_solution: Option<Vec<f64>>,
    pub coreset_solution: Option<Vec<f64>>,
    /// `||x_full - x_coreset|| / ||x_full||`.
    pub solution_gap: Option<f64>,
    pub n: usize,
    pub d: usize,
    pub coreset_rows: usize,
    pub full_eval_ms: f64,
    pub coreset_eval_ms: f64,
}

/// Standard normal queries `w ∈ R^d`, drawn sequentially from `seed`.
pub fn sample_queries(d: usize, count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = synthetic::rng(seed);
    (0..count)
        .map(|_| (0..d).map(|_| rng.sample(StandardNormal)).collect())
        .collect()
}

pub fn relative_gap(full: f64, other: f64) -> f64 {
    let gap = (full - other).abs();
    if gap == 0.0 {
        0.0
    } else {
        gap / full.abs().max(f64::MIN_POSITIVE)
    }
}

pub fn verify_equivalence(
    prob: &RegressionProblem,
    c: &RegressionCoreset,
    num_queries: usize,
    seed: u64,
) -> Result<EquivalenceReport> {
    if num_queries == 0 {
        return Err(CoresetError::InvalidArgument(
            "need at least one query".into(),
        ));
    }
    if c.d() != prob.d() || c.p != prob.p {
        return Err(CoresetError::DimensionMismatch {
            expected: prob.d(),
            found: c.d(),
        });
    }
    let queries = sample_queries(prob.d(), num_queries, seed);

    let t = Instant::now();
    let full = par::map_slice(&queries, |w| reg_loss(prob, w));
    let full_eval_ms = t.elapsed().as_secs_f64() * 1e3;
    let t = Instant::now();
    let core = par::map_slice(&queries, |w| coreset_reg_loss(c, w));
    let coreset_eval_ms = t.elapsed().as_secs_f64() * 1e3;

    let mut max_abs_gap = 0.0f64;
    let mut max_rel_gap = 0.0f64;
    for (f, k) in full.into_iter().zip(core) {
        let (f, k) = (f?, k?);
        max_abs_gap = max_abs_gap.max((f - k).abs());
        max_rel_gap = max_rel_gap.max(relative_gap(f, k));
    }

    let (full_solution, coreset_solution, solution_gap) = if prob.p == 2 {
        match (solve_ridge_full(prob), solve_ridge(c)) {
            (Ok(a), Ok(b)) => {
                let gap = (&a - &b).norm() / a.norm().max(f64::MIN_POSITIVE);
                (
                    Some(a.as_slice().to_vec()),
                    Some(b.as_slice().to_vec()),
                    Some(gap),
                )
            }
            _ => (None, None, None),
        }
    } else {
        (None, None, None)
    };

    Ok(EquivalenceReport {
        num_queries,
        seed,
        max_abs_gap,
        max_rel_gap,
        full_solution,
        coreset_solution,
        solution_gap,
        n: prob.n(),
        d: prob.d(),
        coreset_rows: c.n_data_rows(),
        full_eval_ms,
        coreset_eval_ms,
    })
}

/// One line of a regularization sweep.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub lambda: f64,
    /// Data rows kept by the coreset.
    pub selected: usize,
    /// Statistical dimension of the data kernel at `lambda`, plus one.
    pub sd_bound: f64,
}

pub fn sweep_lambda(prob: &RegressionProblem, lambdas: &[f64]) -> Result<Vec<SweepRow>> {
    sweep_lambda_with(prob, lambdas, BuildOptions::default())
}

pub fn sweep_lambda_with(
    prob: &RegressionProblem,
    lambdas: &[f64],
    opts: BuildOptions,
) -> Result<Vec<SweepRow>> {
    if lambdas.is_empty() {
        return Err(CoresetError::InvalidArgument(
            "no lambda values given".into(),
        ));
    }
    if let Some(l) = lambdas.iter().find(|l| !(l.is_finite() && **l >= 0.0)) {
        return Err(CoresetError::InvalidArgument(format!("invalid lambda {l}")));
    }
    let data_kernel = build_regression_kernel_with(&prob.x, &prob.y, 0.0, prob.p, opts.layout)?;
    let spectrum = thin_svd(&data_kernel.rows, None)?;
    let opts = BuildOptions {
        skip_rank: true,
        ..opts
    };

    let rows = par::map_slice(lambdas, |&lambda| -> Result<SweepRow> {
        let coreset = build_coreset_with(&prob.with_lambda(lambda)?, opts)?;
        Ok(SweepRow {
            lambda,
            selected: coreset.n_data_rows(),
            sd_bound: statistical_dimension(&spectrum, lambda)? + 1.0,
        })
    });
    rows.into_iter().collect()
}
