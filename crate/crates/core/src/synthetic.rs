//! Seeded synthetic data used by tests, benches and the CLI examples.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `n x m` matrix of standard normal entries, filled row by row.
pub fn random_matrix(n: usize, m: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = rng(seed);
    let data: Vec<f64> = (0..n * m).map(|_| rng.sample(StandardNormal)).collect();
    DMatrix::from_row_slice(n, m, &data)
}

pub fn random_vector(n: usize, seed: u64) -> DVector<f64> {
    let mut rng = rng(seed);
    DVector::from_fn(n, |_, _| rng.sample(StandardNormal))
}

/// Linear-model data `y = X beta + 0.5 noise` with standard normal `X` and `beta`.
pub fn regression_data(n: usize, d: usize, seed: u64) -> (DMatrix<f64>, DVector<f64>) {
    let mut rng = rng(seed);
    let x = DMatrix::from_fn(n, d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let beta = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
    let noise = DVector::from_fn(n, |_, _| 0.5 * rng.sample::<f64, _>(StandardNormal));
    let y = &x * beta + noise;
    (x, y)
}

/// Planted single-topic corpus with noiseless word frequencies: every
/// document row equals the word distribution of its topic.
#[derive(Debug, Clone)]
pub struct PlantedCorpus {
    /// `n x d` document rows.
    pub documents: DMatrix<f64>,
    /// `d x k`; column `j` is the word distribution of topic `j`.
    pub topics: DMatrix<f64>,
    /// Empirical topic proportions.
    pub proportions: Vec<f64>,
    pub assignments: Vec<usize>,
}

pub fn planted_topic_corpus(n: usize, d: usize, k: usize, seed: u64) -> PlantedCorpus {
    let mut rng = rng(seed);
    let mut topics = DMatrix::zeros(d, k);
    for j in 0..k {
        let raw: Vec<f64> = (0..d).map(|_| rng.random::<f64>() + 0.05).collect();
        let total: f64 = raw.iter().sum();
        for (i, v) in raw.into_iter().enumerate() {
            topics[(i, j)] = v / total;
        }
    }
    // Unequal topic prevalence keeps the whitened eigenvalues well separated.
    let prevalence: Vec<f64> = (0..k).map(|j| (j + 1) as f64).collect();
    let mass: f64 = prevalence.iter().sum();
    let mut assignments = Vec::with_capacity(n);
    for _ in 0..n {
        let mut u = rng.random::<f64>() * mass;
        let mut h = k - 1;
        for (j, &p) in prevalence.iter().enumerate() {
            if u < p {
                h = j;
                break;
            }
            u -= p;
        }
        assignments.push(h);
    }
    let documents = DMatrix::from_fn(n, d, |r, c| topics[(c, assignments[r])]);
    let mut counts = vec![0usize; k];
    for &h in &assignments {
        counts[h] += 1;
    }
    let proportions = counts.iter().map(|&c| c as f64 / n as f64).collect();
    PlantedCorpus {
        documents,
        topics,
        proportions,
        assignments,
    }
}

/// Gaussian-mixture style samples: `k` random centres in `R^d` plus
/// isotropic noise of scale `noise`.
pub fn mixture_samples(n: usize, d: usize, k: usize, noise: f64, seed: u64) -> DMatrix<f64> {
    let mut rng = rng(seed);
    let centres = DMatrix::from_fn(k, d, |_, _| 3.0 * rng.sample::<f64, _>(StandardNormal));
    let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
    DMatrix::from_fn(n, d, |r, c| {
        centres[(labels[r], c)] + noise * rng.sample::<f64, _>(StandardNormal)
    })
}
