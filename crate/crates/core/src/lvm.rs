//! Moment-based latent variable models: whitening of the second moment,
//! per-sample whitened third-moment kernel rows, the accurate coreset over
//! those rows, and tensor power iteration with deflation.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::caratheodory::{accurate_coreset, CoresetSelection, KernelRows};
use crate::error::{CoresetError, Result};
use crate::kernelization::outer_power_vec;
use crate::numerics::{effective_rank, ensure_finite, thin_svd};
use crate::par;
use crate::regression::{relative_gap, sample_queries};
use crate::synthetic;

/// Samples (one per row) and the number of latent components `k < d`.
#[derive(Debug, Clone)]
pub struct MomentModel {
    pub x: DMatrix<f64>,
    pub k: usize,
}

impl MomentModel {
    pub fn new(x: DMatrix<f64>, k: usize) -> Result<Self> {
        let (n, d) = x.shape();
        if k == 0 || k >= d {
            return Err(CoresetError::InvalidArgument(format!(
                "need 1 <= k < d, got k = {k}, d = {d}"
            )));
        }
        if n < k {
            return Err(CoresetError::InvalidArgument(format!(
                "need at least k = {k} samples, got {n}"
            )));
        }
        ensure_finite(&x, "sample matrix")?;
        Ok(MomentModel { x, k })
    }
}

/// `(1/n) sum_i x_i x_iᵀ`, exactly symmetric.
pub fn second_moment(x: &DMatrix<f64>) -> DMatrix<f64> {
    let (n, d) = x.shape();
    let mut t2 = DMatrix::zeros(d, d);
    for a in 0..d {
        for b in a..d {
            let s: f64 = (0..n).map(|i| x[(i, a)] * x[(i, b)]).sum::<f64>() / n.max(1) as f64;
            t2[(a, b)] = s;
            t2[(b, a)] = s;
        }
    }
    t2
}

/// `M = V_k diag(sigma_k)^{-1/2}`, so that `Mᵀ T2 M = I_k`.
#[derive(Debug, Clone)]
pub struct WhiteningMatrix {
    pub m: DMatrix<f64>,
    /// Top-`k` singular values of `T2`.
    pub source_spectrum: Vec<f64>,
    /// Top-`k` singular vectors of `T2` (`d x k`).
    pub basis: DMatrix<f64>,
}

impl WhiteningMatrix {
    pub fn k(&self) -> usize {
        self.m.ncols()
    }

    /// `Mᵀ x`.
    pub fn whiten(&self, x: &[f64]) -> Vec<f64> {
        (0..self.k())
            .map(|j| self.m.column(j).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    /// `(Mᵀ)⁺ v = V_k diag(sigma_k)^{1/2} v`.
    pub fn unwhiten(&self, v: &[f64]) -> DVector<f64> {
        let scaled = DVector::from_fn(self.k(), |j, _| self.source_spectrum[j].sqrt() * v[j]);
        &self.basis * scaled
    }
}

pub fn whitening_matrix(t2: &DMatrix<f64>, k: usize) -> Result<WhiteningMatrix> {
    let (r, c) = t2.shape();
    if r != c {
        return Err(CoresetError::DimensionMismatch {
            expected: r,
            found: c,
        });
    }
    let s = thin_svd(t2, Some(k))?;
    let sigma_k = s.singular_values[k - 1];
    if !(sigma_k > s.rank_tolerance) {
        let found = effective_rank(&thin_svd(t2, None)?);
        return Err(CoresetError::DeficientRank { needed: k, found });
    }
    let m = DMatrix::from_fn(r, k, |i, j| {
        s.right_basis[(i, j)] / s.singular_values[j].sqrt()
    });
    Ok(WhiteningMatrix {
        m,
        source_spectrum: s.singular_values,
        basis: s.right_basis,
    })
}

/// Per-sample rows `vec((Mᵀ x_i) ⊗^3) / n`.
#[derive(Debug, Clone)]
pub struct WhitenedTensorKernel {
    pub rows: DMatrix<f64>,
    pub whitening: WhiteningMatrix,
}

impl KernelRows for WhitenedTensorKernel {
    fn kernel_rows(&self) -> &DMatrix<f64> {
        &self.rows
    }
}

impl WhitenedTensorKernel {
    pub fn k(&self) -> usize {
        self.whitening.k()
    }

    /// Column sums: the whitened empirical third moment.
    pub fn tensor(&self) -> SymmetricTensor3 {
        SymmetricTensor3 {
            k: self.k(),
            data: self.rows.row_sum().iter().copied().collect(),
        }
    }

    /// Weighted selected rows; its tensor equals the full one.
    pub fn restrict(&self, selection: &CoresetSelection) -> WhitenedTensorKernel {
        let rows = DMatrix::from_fn(selection.len(), self.rows.ncols(), |r, c| {
            selection.weights[r] * self.rows[(selection.indices[r], c)]
        });
        WhitenedTensorKernel {
            rows,
            whitening: self.whitening.clone(),
        }
    }
}

pub fn build_lvm_kernel(model: &MomentModel) -> Result<WhitenedTensorKernel> {
    let t2 = second_moment(&model.x);
    let whitening = whitening_matrix(&t2, model.k)?;
    Ok(lvm_kernel_with(&model.x, whitening))
}

/// Kernel rows for `x` under a fixed whitening.
pub fn lvm_kernel_with(x: &DMatrix<f64>, whitening: WhiteningMatrix) -> WhitenedTensorKernel {
    let n = x.nrows();
    let k = whitening.k();
    let scale = 1.0 / n as f64;
    let lifted = par::map_range(n, |i| {
        let xi: Vec<f64> = x.row(i).iter().copied().collect();
        outer_power_vec(&whitening.whiten(&xi), 3)
    });
    let rows = DMatrix::from_fn(n, k * k * k, |r, c| lifted[r][c] * scale);
    WhitenedTensorKernel { rows, whitening }
}

/// A coreset over samples together with the kernel it was built from.
#[derive(Debug, Clone)]
pub struct LvmCoreset {
    pub selection: CoresetSelection,
    pub kernel: WhitenedTensorKernel,
}

pub fn lvm_coreset(model: &MomentModel) -> Result<LvmCoreset> {
    lvm_coreset_with(model, None)
}

pub fn lvm_coreset_with(model: &MomentModel, clusters: Option<usize>) -> Result<LvmCoreset> {
    let kernel = build_lvm_kernel(model)?;
    let selection = accurate_coreset(&kernel, clusters)?;
    Ok(LvmCoreset { selection, kernel })
}

/// `sum_i w_i (p_iᵀ x)^p` over the rows of `points`.
pub fn tensor_contract(points: &DMatrix<f64>, weights: &[f64], x: &[f64], p: usize) -> Result<f64> {
    if x.len() != points.ncols() {
        return Err(CoresetError::DimensionMismatch {
            expected: points.ncols(),
            found: x.len(),
        });
    }
    if weights.len() != points.nrows() {
        return Err(CoresetError::DimensionMismatch {
            expected: points.nrows(),
            found: weights.len(),
        });
    }
    Ok((0..points.nrows())
        .map(|i| {
            let dot: f64 = points.row(i).iter().zip(x).map(|(a, b)| a * b).sum();
            weights[i] * dot.powi(p as i32)
        })
        .sum())
}

/// Dense symmetric `k x k x k` tensor, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricTensor3 {
    pub k: usize,
    pub data: Vec<f64>,
}

impl SymmetricTensor3 {
    pub fn from_components(values: &[f64], vectors: &[Vec<f64>]) -> Self {
        let k = vectors.first().map_or(0, |v| v.len());
        let mut t = SymmetricTensor3 {
            k,
            data: vec![0.0; k * k * k],
        };
        for (&l, v) in values.iter().zip(vectors) {
            t.add_rank_one(l, v);
        }
        t
    }

    fn add_rank_one(&mut self, scale: f64, v: &[f64]) {
        for (slot, val) in self.data.iter_mut().zip(outer_power_vec(v, 3)) {
            *slot += scale * val;
        }
    }

    /// `T(x, x, I)`.
    pub fn contract_twice(&self, x: &[f64]) -> Vec<f64> {
        let k = self.k;
        let mut out = vec![0.0; k];
        for a in 0..k {
            for b in 0..k {
                let xab = x[a] * x[b];
                let base = (a * k + b) * k;
                for (c, o) in out.iter_mut().enumerate() {
                    *o += self.data[base + c] * xab;
                }
            }
        }
        out
    }

    /// `T(x, x, x)`.
    pub fn contract(&self, x: &[f64]) -> f64 {
        self.contract_twice(x)
            .iter()
            .zip(x)
            .map(|(a, b)| a * b)
            .sum()
    }
}

/// Eigenpair `T(v, v, I) = value * v` with `||v|| = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct EigenPair {
    pub value: f64,
    pub vector: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerDecomposition {
    pub pairs: Vec<EigenPair>,
    /// False if any component stopped at the iteration cap.
    pub converged: bool,
    pub warnings: Vec<String>,
}

/// Restarts, iteration cap and stopping threshold for power iteration.
#[derive(Debug, Clone, Copy)]
pub struct PowerOptions {
    pub restarts: usize,
    pub iters: usize,
    pub tol: f64,
}

impl Default for PowerOptions {
    fn default() -> Self {
        PowerOptions {
            restarts: 10,
            iters: 100,
            tol: 1e-10,
        }
    }
}

struct Run {
    vector: Vec<f64>,
    value: f64,
    converged: bool,
}

fn normalize(v: &mut [f64]) -> f64 {
    let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|a| *a /= norm);
    }
    norm
}

fn power_run(t: &SymmetricTensor3, mut x: Vec<f64>, iters: usize, tol: f64) -> Run {
    let mut converged = false;
    for _ in 0..iters {
        let mut next = t.contract_twice(&x);
        if normalize(&mut next) == 0.0 {
            break;
        }
        let delta = next
            .iter()
            .zip(&x)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        x = next;
        if delta < tol {
            converged = true;
            break;
        }
    }
    let value = t.contract(&x);
    Run {
        vector: x,
        value,
        converged,
    }
}

/// Extracts `k` eigenpairs of the kernel's whitened tensor.
pub fn tensor_power_decompose(
    kernel: &WhitenedTensorKernel,
    restarts: usize,
    iters: usize,
    seed: u64,
) -> Result<PowerDecomposition> {
    let opts = PowerOptions {
        restarts,
        iters,
        ..Default::default()
    };
    decompose_tensor(&kernel.tensor(), kernel.k(), opts, seed)
}

/// Greedy power iteration with deflation on an explicit tensor.
///
/// Each component takes the best of `restarts` seeded starts (orthogonalized
/// against the components already found), polishes it, and subtracts
/// `value * v ⊗ v ⊗ v`.
pub fn decompose_tensor(
    tensor: &SymmetricTensor3,
    components: usize,
    opts: PowerOptions,
    seed: u64,
) -> Result<PowerDecomposition> {
    if opts.restarts == 0 || opts.iters == 0 {
        return Err(CoresetError::InvalidArgument(
            "power iteration needs at least one restart and one iteration".into(),
        ));
    }
    let k = tensor.k;
    if components > k {
        return Err(CoresetError::InvalidArgument(format!(
            "cannot extract {components} components from a rank-{k} tensor space"
        )));
    }
    let mut rng = synthetic::rng(seed);
    let mut residual = tensor.clone();
    let mut pairs: Vec<EigenPair> = Vec::with_capacity(components);
    let mut warnings = Vec::new();

    for comp in 0..components {
        let starts: Vec<Vec<f64>> = (0..opts.restarts)
            .map(|_| {
                let raw: Vec<f64> = (0..k).map(|_| rng.sample(StandardNormal)).collect();
                let mut x = raw.clone();
                for found in &pairs {
                    let dot: f64 = x.iter().zip(&found.vector).map(|(a, b)| a * b).sum();
                    x.iter_mut()
                        .zip(&found.vector)
                        .for_each(|(a, b)| *a -= dot * b);
                }
                if normalize(&mut x) < 1e-8 {
                    x = raw;
                    normalize(&mut x);
                }
                x
            })
            .collect();

        let runs = par::map_slice(&starts, |x| {
            power_run(&residual, x.clone(), opts.iters, opts.tol)
        });
        let mut best = 0;
        for (i, r) in runs.iter().enumerate() {
            if r.value > runs[best].value {
                best = i;
            }
        }
        let polished = power_run(&residual, runs[best].vector.clone(), opts.iters, opts.tol);
        let converged = polished.converged || runs[best].converged;
        if !converged {
            warnings.push(format!(
                "component {comp} did not converge within {} iterations",
                opts.iters
            ));
        }
        let mut pair = EigenPair {
            value: polished.value,
            vector: polished.vector,
        };
        canonical_sign(&mut pair);
        residual.add_rank_one(-pair.value, &pair.vector);
        pairs.push(pair);
    }

    Ok(PowerDecomposition {
        converged: warnings.is_empty(),
        pairs,
        warnings,
    })
}

/// `(value, v)` and `(-value, -v)` describe the same component; keep the
/// nonnegative value, and for a zero value make the largest entry positive.
fn canonical_sign(pair: &mut EigenPair) {
    let flip = if pair.value != 0.0 {
        pair.value < 0.0
    } else {
        let mut idx = 0;
        for (i, v) in pair.vector.iter().enumerate() {
            if v.abs() > pair.vector[idx].abs() {
                idx = i;
            }
        }
        pair.vector.get(idx).is_some_and(|v| *v < 0.0)
    };
    if flip {
        pair.value = -pair.value;
        pair.vector.iter_mut().for_each(|a| *a = -*a);
    }
}

/// Mixture weights and component means.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentParameters {
    pub weights: Vec<f64>,
    /// One vector in `R^d` per component.
    pub components: Vec<Vec<f64>>,
}

/// `gamma_j = 1 / value_j^2`, `mu_j = value_j (Mᵀ)⁺ v_j`.
pub fn recover_parameters(
    pairs: &[EigenPair],
    whitening: &WhiteningMatrix,
) -> Result<LatentParameters> {
    let mut weights = Vec::with_capacity(pairs.len());
    let mut components = Vec::with_capacity(pairs.len());
    for (j, pair) in pairs.iter().enumerate() {
        if !(pair.value > 0.0) {
            return Err(CoresetError::Recovery {
                component: j,
                eigenvalue: pair.value,
            });
        }
        if pair.vector.len() != whitening.k() {
            return Err(CoresetError::DimensionMismatch {
                expected: whitening.k(),
                found: pair.vector.len(),
            });
        }
        weights.push(1.0 / (pair.value * pair.value));
        let mu = whitening.unwhiten(&pair.vector) * pair.value;
        components.push(mu.iter().copied().collect());
    }
    Ok(LatentParameters {
        weights,
        components,
    })
}

/// Agreement between the full and the coreset third moment.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorEquivalenceReport {
    pub num_queries: usize,
    pub seed: u64,
    /// Largest `|T(x,x,x) - T_c(x,x,x)|` over the queries.
    pub max_abs_gap: f64,
    pub max_rel_gap: f64,
    /// Largest entrywise difference between the two tensors.
    pub moment_max_abs_gap: f64,
    pub n: usize,
    pub k: usize,
    pub coreset_rows: usize,
    pub full_eval_ms: f64,
    pub coreset_eval_ms: f64,
}

/// Compares `T(x,x,x)` of the full kernel against the weighted selection
/// on standard normal queries `x ∈ R^k`, evaluated row by row.
pub fn verify_tensor_equivalence(
    kernel: &WhitenedTensorKernel,
    selection: &CoresetSelection,
    num_queries: usize,
    seed: u64,
) -> Result<TensorEquivalenceReport> {
    if num_queries == 0 {
        return Err(CoresetError::InvalidArgument(
            "need at least one query".into(),
        ));
    }
    if let Some(&bad) = selection
        .indices
        .iter()
        .find(|&&i| i >= kernel.rows.nrows())
    {
        return Err(CoresetError::InvalidInput(format!(
            "sample index {bad} out of range for {} samples",
            kernel.rows.nrows()
        )));
    }
    let k = kernel.k();
    let queries = sample_queries(k, num_queries, seed);
    let restricted = kernel.restrict(selection);
    let contract_rows = |rows: &DMatrix<f64>, x: &[f64]| -> f64 {
        let cube = outer_power_vec(x, 3);
        (0..rows.nrows())
            .map(|r| {
                rows.row(r)
                    .iter()
                    .zip(&cube)
                    .map(|(a, b)| a * b)
                    .sum::<f64>()
            })
            .sum()
    };

    let t = Instant::now();
    let full = par::map_slice(&queries, |x| contract_rows(&kernel.rows, x));
    let full_eval_ms = t.elapsed().as_secs_f64() * 1e3;
    let t = Instant::now();
    let core = par::map_slice(&queries, |x| contract_rows(&restricted.rows, x));
    let coreset_eval_ms = t.elapsed().as_secs_f64() * 1e3;

    let mut max_abs_gap = 0.0f64;
    let mut max_rel_gap = 0.0f64;
    for (f, c) in full.into_iter().zip(core) {
        max_abs_gap = max_abs_gap.max((f - c).abs());
        max_rel_gap = max_rel_gap.max(relative_gap(f, c));
    }
    let moment_max_abs_gap = kernel
        .tensor()
        .data
        .iter()
        .zip(&restricted.tensor().data)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);

    Ok(TensorEquivalenceReport {
        num_queries,
        seed,
        max_abs_gap,
        max_rel_gap,
        moment_max_abs_gap,
        n: kernel.rows.nrows(),
        k,
        coreset_rows: selection.len(),
        full_eval_ms,
        coreset_eval_ms,
    })
}
