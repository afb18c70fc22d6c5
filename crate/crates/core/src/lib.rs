//! Accurate coresets: weighted data subsets whose loss equals the full-data
//! loss for every query.
//!
//! Each pipeline lifts data rows to flattened outer powers so that the loss
//! becomes a linear functional of the column sums of a kernel matrix, and
//! then reduces that matrix with Carathéodory's theorem to at most
//! `rank + 1` weighted rows.
//!
//! * [`regression`]: ridge and ℓp-regularized ℓp regression (even `p`).
//! * [`lvm`]: whitened third-moment coresets and tensor power iteration.
//! * [`caratheodory`]: the exact reductions both pipelines share.

// `!(x > 0.0)` style checks are meant to reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod caratheodory;
pub mod error;
pub mod kernelization;
pub mod lvm;
pub mod numerics;
pub mod par;
pub mod regression;
pub mod synthetic;

pub use caratheodory::{
    accurate_coreset, caratheodory_reduce, fast_caratheodory, CoresetSelection, KernelRows,
    WeightedPointSet,
};
pub use error::{CoresetError, Result};
pub use kernelization::{KernelMatrix, RegularizerLayout, RowProvenance, SignTensorDiagonal};
pub use lvm::{
    LatentParameters, MomentModel, TensorEquivalenceReport, WhitenedTensorKernel, WhiteningMatrix,
};
pub use numerics::SpectralSummary;
pub use regression::{EquivalenceReport, RegressionCoreset, RegressionProblem};

#[cfg(test)]
pub(crate) mod testutil {
    pub use crate::synthetic::{random_matrix, random_vector};
}
