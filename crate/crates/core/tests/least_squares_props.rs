use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use salbfgs_core::{DenseBatch, ForgetWeight, ForgettingState};

fn dense_batch(rows: usize, dim: usize) -> impl Strategy<Value = DenseBatch> {
    (
        proptest::collection::vec(-2.0f64..2.0, rows * dim),
        proptest::collection::vec(-2.0f64..2.0, rows),
    )
        .prop_map(move |(x, y)| DenseBatch::new(DMatrix::from_vec(rows, dim, x), DVector::from_vec(y)).unwrap())
}

fn stream(dim: usize) -> impl Strategy<Value = Vec<DenseBatch>> {
    proptest::collection::vec(dense_batch(3 * dim, dim), 1..5)
}

/// Least squares via SVD on the stacked rows, independent of the normal equations.
fn lstsq(batches: &[DenseBatch]) -> DVector<f64> {
    let dim = batches[0].dim();
    let rows: usize = batches.iter().map(|b| b.x.nrows()).sum();
    let mut x = DMatrix::zeros(rows, dim);
    let mut y = DVector::zeros(rows);
    let mut r = 0;
    for b in batches {
        x.rows_mut(r, b.x.nrows()).copy_from(&b.x);
        y.rows_mut(r, b.x.nrows()).copy_from(&b.y);
        r += b.x.nrows();
    }
    x.svd(true, true).solve(&y, 1e-14).unwrap()
}

fn run(batches: &[DenseBatch], mu: f64) -> ForgettingState {
    let mut s = ForgettingState::init_state(&batches[0]).unwrap();
    for b in &batches[1..] {
        s.update_state(b, ForgetWeight::new(mu).unwrap()).unwrap();
    }
    s
}

fn rel(a: &[f64], b: &DVector<f64>) -> f64 {
    (DVector::from_column_slice(a) - b).norm() / b.norm().max(1e-300)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(60))]

    #[test]
    fn mu_one_is_pooled_least_squares(bs in stream(4)) {
        let theta = run(&bs, 1.0).solve_theta(false).unwrap().theta;
        prop_assert!(rel(&theta, &lstsq(&bs)) <= 1e-8);
    }

    #[test]
    fn mu_zero_keeps_only_the_newest_batch(bs in stream(3)) {
        let theta = run(&bs, 0.0).solve_theta(false).unwrap().theta;
        prop_assert!(rel(&theta, &lstsq(&bs[bs.len() - 1..])) <= 1e-8);
    }

    #[test]
    fn scaling_the_state_leaves_theta_unchanged(bs in stream(3), mu in 0.0f64..3.0, c in 0.01f64..100.0) {
        // scaling every design row and target by sqrt(c) scales A and B by c
        let scaled: Vec<DenseBatch> = bs
            .iter()
            .map(|b| DenseBatch::new(&b.x * c.sqrt(), &b.y * c.sqrt()).unwrap())
            .collect();
        let s = run(&bs, mu);
        let t = run(&scaled, mu);
        prop_assert!((t.a() - s.a() * c).norm() <= 1e-9 * (s.a() * c).norm());
        let a = s.solve_theta(false).unwrap().theta;
        let b = t.solve_theta(false).unwrap().theta;
        prop_assert!(rel(&b, &DVector::from_column_slice(&a)) <= 1e-8);
    }

    #[test]
    fn updates_keep_a_symmetric_psd(bs in stream(4), mu in 0.0f64..3.0) {
        let mut s = ForgettingState::init_state(&bs[0]).unwrap();
        for b in &bs[1..] {
            s.update_state(b, ForgetWeight::new(mu).unwrap()).unwrap();
            let a = s.a();
            prop_assert_eq!(a, &a.transpose());
            let floor = -1e-10 * a.norm();
            let eig = a.clone().symmetric_eigen();
            prop_assert!(eig.eigenvalues.iter().all(|&l| l >= floor));
        }
    }
}
