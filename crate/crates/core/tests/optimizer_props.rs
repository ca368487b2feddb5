use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use salbfgs_core::{minimize, CurvatureMemory, FnObjective, LbfgsConfig, Objective, ParameterVector};

/// Random SPD matrix `Q Q^T + d I` with its linear term.
fn quadratic(dim: usize) -> impl Strategy<Value = (DMatrix<f64>, DVector<f64>)> {
    (
        proptest::collection::vec(-1.0f64..1.0, dim * dim),
        proptest::collection::vec(-5.0f64..5.0, dim),
    )
        .prop_map(move |(q, b)| {
            let q = DMatrix::from_vec(dim, dim, q);
            let a = &q * q.transpose() + DMatrix::identity(dim, dim) * (0.5 * dim as f64);
            (a, DVector::from_vec(b))
        })
}

fn objective(a: DMatrix<f64>, b: DVector<f64>) -> impl Objective {
    let dim = b.len();
    FnObjective::new(dim, move |theta: &[f64], grad: &mut [f64]| {
        let x = DVector::from_column_slice(theta);
        let ax = &a * &x;
        grad.copy_from_slice((&ax - &b).as_slice());
        0.5 * x.dot(&ax) - b.dot(&x)
    })
}

fn tight() -> LbfgsConfig {
    LbfgsConfig {
        max_iterations: 200,
        grad_tolerance: 1e-10,
        ..LbfgsConfig::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn quadratic_matches_direct_solve_for_any_memory(
        (a, b) in quadratic(8),
        start in proptest::collection::vec(-3.0f64..3.0, 8),
    ) {
        let direct = a.clone().cholesky().unwrap().solve(&b);
        let obj = objective(a, b);
        let start = ParameterVector::new(start).unwrap();
        for m in [3, 10, 20] {
            let r = minimize(&obj, &start, CurvatureMemory::new(m), &tight()).unwrap();
            prop_assert!(r.converged);
            let err = (DVector::from_column_slice(&r.theta) - &direct).norm() / direct.norm().max(1.0);
            prop_assert!(err <= 1e-6, "M={m}: rel err {err}");
        }
    }

    #[test]
    fn descent_and_memory_validity(
        (a, b) in quadratic(6),
        start in proptest::collection::vec(-3.0f64..3.0, 6),
        m in 1usize..12,
    ) {
        let obj = objective(a, b);
        let start = ParameterVector::new(start).unwrap();
        let r = minimize(&obj, &start, CurvatureMemory::new(m), &tight()).unwrap();
        for w in r.cost_trace.windows(2) {
            // accepted steps may sit at the rounding floor of the cost
            let slack = 1e-12 * w[0].abs().max(1.0);
            prop_assert!(w[1] <= w[0] + slack, "cost rose from {} to {}", w[0], w[1]);
        }
        prop_assert!(r.memory.len() <= m);
        for pair in r.memory.pairs() {
            prop_assert!(pair.curvature() > 0.0);
        }
        prop_assert!(r.memory.gamma() > 0.0 && r.memory.gamma().is_finite());
    }

    #[test]
    fn warm_start_at_optimum_is_a_no_op((a, b) in quadratic(5)) {
        let obj = objective(a, b);
        let first = minimize(&obj, &ParameterVector::zeros(5), CurvatureMemory::new(10), &tight()).unwrap();
        let again = minimize(&obj, &first.theta, first.memory.clone(), &tight()).unwrap();
        prop_assert_eq!(again.iterations, 0);
        prop_assert_eq!(again.theta, first.theta);
    }
}
