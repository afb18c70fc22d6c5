use exact_coreset::caratheodory::{caratheodory_reduce, fast_caratheodory, WeightedPointSet};
use exact_coreset::kernelization::{flat_index, lp_sign_tensor, multi_index, outer_power_vec};
use exact_coreset::numerics::{
    effective_rank, null_space_basis, null_space_vector, statistical_dimension, thin_svd,
};
use exact_coreset::regression::{build_coreset, coreset_reg_loss, reg_loss};
use exact_coreset::RegressionProblem;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use proptest::test_runner::RngSeed;

fn config(cases: u32) -> ProptestConfig {
    ProptestConfig {
        cases,
        rng_seed: RngSeed::Fixed(0x5eed),
        ..ProptestConfig::default()
    }
}

fn matrix(max_rows: usize, max_cols: usize) -> impl Strategy<Value = DMatrix<f64>> {
    (1..=max_rows, 1..=max_cols).prop_flat_map(|(r, c)| {
        prop::collection::vec(-10.0f64..10.0, r * c)
            .prop_map(move |v| DMatrix::from_row_slice(r, c, &v))
    })
}

/// Points with a planted rank: `n x r` coefficients times an `r x m` basis.
fn low_rank_points() -> impl Strategy<Value = DMatrix<f64>> {
    (1usize..60, 1usize..7, 1usize..7).prop_flat_map(|(n, m, r)| {
        let r = r.min(m);
        (
            prop::collection::vec(-3.0f64..3.0, n * r),
            prop::collection::vec(-3.0f64..3.0, r * m),
        )
            .prop_map(move |(a, b)| {
                DMatrix::from_row_slice(n, r, &a) * DMatrix::from_row_slice(r, m, &b)
            })
    })
}

proptest! {
    #![proptest_config(config(64))]

    #[test]
    fn svd_reconstructs(a in matrix(8, 8)) {
        let s = thin_svd(&a, None).unwrap();
        let sigma = DMatrix::from_diagonal(&DVector::from_vec(s.singular_values.clone()));
        let back = &s.left_basis * sigma * s.right_basis.transpose();
        prop_assert!((&back - &a).amax() <= 1e-10 * (1.0 + a.amax()));
        prop_assert!(s.singular_values.windows(2).all(|w| w[0] >= w[1]));
        prop_assert!(s.singular_values.iter().all(|&v| v >= 0.0));
        let k = s.singular_values.len();
        let gram = s.right_basis.transpose() * &s.right_basis;
        prop_assert!((gram - DMatrix::<f64>::identity(k, k)).amax() <= 1e-10);
    }

    #[test]
    fn statistical_dimension_bounds(a in matrix(10, 6), l1 in 0.0f64..50.0, l2 in 0.0f64..50.0) {
        let s = thin_svd(&a, None).unwrap();
        let rank = effective_rank(&s) as f64;
        let (lo, hi) = if l1 <= l2 { (l1, l2) } else { (l2, l1) };
        let sd_lo = statistical_dimension(&s, lo).unwrap();
        let sd_hi = statistical_dimension(&s, hi).unwrap();
        prop_assert!(sd_hi <= sd_lo + 1e-12);
        prop_assert!(sd_lo <= rank + 1e-12 && sd_hi >= 0.0);
        prop_assert!((statistical_dimension(&s, 0.0).unwrap() - rank).abs() <= 1e-12);
    }

    #[test]
    fn null_vectors_annihilate(a in matrix(5, 9)) {
        let rank = effective_rank(&thin_svd(&a, None).unwrap());
        let basis = null_space_basis(&a).unwrap();
        prop_assert_eq!(basis.ncols(), a.ncols() - rank);
        prop_assert!((&a * &basis).amax() <= 1e-9 * (1.0 + a.amax()) * (1.0 + basis.amax()));
        match null_space_vector(&a) {
            Ok(v) => {
                prop_assert!((v.norm() - 1.0).abs() <= 1e-12);
                prop_assert!((&a * v).amax() <= 1e-9 * (1.0 + a.amax()));
            }
            Err(_) => prop_assert_eq!(rank, a.ncols()),
        }
    }

    #[test]
    fn caratheodory_contracts(points in low_rank_points(), seed in any::<u64>(), clusters in 2usize..20) {
        let n = points.nrows();
        let weights: Vec<f64> = (0..n).map(|i| 0.5 + ((seed >> (i % 32)) & 7) as f64 / 4.0).collect();
        let set = WeightedPointSet::new(&points, &weights).unwrap();
        let rank = effective_rank(&thin_svd(&points, None).unwrap());
        let expected = set.weighted_sum();
        let total = set.total_weight();
        for sel in [caratheodory_reduce(&set).unwrap(), fast_caratheodory(&set, clusters).unwrap()] {
            prop_assert!(sel.len() <= rank + 1);
            prop_assert!(sel.weights.iter().all(|&w| w > 0.0));
            prop_assert!(sel.indices.windows(2).all(|w| w[0] < w[1]));
            let got = sel.weighted_sum(&points);
            prop_assert!((&got - &expected).norm() <= 1e-9 * (1.0 + expected.norm()));
            prop_assert!((sel.total_weight() - total).abs() <= 1e-9 * total);
        }
    }

    #[test]
    fn flat_index_round_trips(base in 1usize..6, p in 1usize..5, seed in any::<u64>()) {
        let len = base.pow(p as u32);
        let flat = (seed % len as u64) as usize;
        let multi = multi_index(flat, base, p);
        prop_assert_eq!(multi.len(), p);
        prop_assert!(multi.iter().all(|&i| i < base));
        prop_assert_eq!(flat_index(&multi, base), flat);
    }

    #[test]
    fn outer_power_is_symmetric(x in prop::collection::vec(-2.0f64..2.0, 1..4), p in 1usize..5) {
        let base = x.len();
        let lifted = outer_power_vec(&x, p);
        prop_assert_eq!(lifted.len(), base.pow(p as u32));
        for (j, &value) in lifted.iter().enumerate() {
            let mut multi = multi_index(j, base, p);
            let direct: f64 = multi.iter().map(|&i| x[i]).product();
            prop_assert!((value - direct).abs() <= 1e-12 * (1.0 + direct.abs()));
            multi.reverse();
            let mirrored = lifted[flat_index(&multi, base)];
            prop_assert!((value - mirrored).abs() <= 1e-12 * (1.0 + value.abs()));
        }
    }

    #[test]
    fn sign_tensor_reproduces_lp_norm(d in 1usize..4, half_p in 1usize..4, w in prop::collection::vec(-2.0f64..2.0, 3)) {
        let p = 2 * half_p;
        let w = &w[..d];
        let signs = lp_sign_tensor(d, p).unwrap();
        let mut q = w.to_vec();
        q.push(-1.0);
        let expected: f64 = w.iter().map(|v| v.powi(p as i32)).sum();
        prop_assert!((signs.contract(&q) - expected).abs() <= 1e-9 * (1.0 + expected));
    }
}

proptest! {
    #![proptest_config(config(16))]

    #[test]
    fn coreset_loss_matches(
        rows in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 3), 5..80),
        lambda in 0.0f64..3.0,
        p in prop::sample::select(vec![2usize, 4]),
        w in prop::collection::vec(-2.0f64..2.0, 2),
    ) {
        let n = rows.len();
        let x = DMatrix::from_fn(n, 2, |r, c| rows[r][c]);
        let y = DVector::from_fn(n, |r, _| rows[r][2]);
        let prob = RegressionProblem::new(x, y, lambda, p).unwrap();
        let c = build_coreset(&prob).unwrap();
        let full = reg_loss(&prob, &w).unwrap();
        let core = coreset_reg_loss(&c, &w).unwrap();
        prop_assert!((full - core).abs() <= 1e-8 * full.abs().max(1e-12), "{} vs {}", full, core);
    }
}
