mod common;

use common::{batches, theta};
use proptest::prelude::*;
use salbfgs_core::{batch_cost, batch_gradient, CostConfig, ExampleObjective, LossKind, ParameterVector, RegKind};

const DIM: usize = 6;

fn cfg(kind: LossKind, lambda: f64) -> CostConfig {
    CostConfig::new(kind, RegKind::L2, lambda).unwrap()
}

fn kinds() -> impl Strategy<Value = LossKind> {
    prop_oneof![Just(LossKind::Logistic), Just(LossKind::Squared)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn cost_is_convex(
        bs in batches(DIM as u32, 3, 8),
        a in theta(DIM),
        b in theta(DIM),
        alpha in 0.0f64..=1.0,
        kind in kinds(),
        lambda in 0.0f64..2.0,
    ) {
        let c = cfg(kind, lambda);
        let mid: Vec<f64> = a.iter().zip(&b).map(|(x, y)| alpha * x + (1.0 - alpha) * y).collect();
        let pv = |v: &[f64]| ParameterVector::new(v.to_vec()).unwrap();
        let lhs = batch_cost(&pv(&mid), &bs, &c).unwrap();
        let rhs = alpha * batch_cost(&pv(&a), &bs, &c).unwrap() + (1.0 - alpha) * batch_cost(&pv(&b), &bs, &c).unwrap();
        prop_assert!(lhs <= rhs + 1e-9 * (1.0 + rhs.abs()), "{lhs} > {rhs}");
    }

    #[test]
    fn gradient_matches_central_differences(
        bs in batches(DIM as u32, 2, 10),
        th in theta(DIM),
        kind in kinds(),
        lambda in 0.0f64..2.0,
    ) {
        let c = cfg(kind, lambda);
        let p = ParameterVector::new(th.clone()).unwrap();
        let g = batch_gradient(&p, &bs, &c).unwrap();
        let h = 1e-6;
        for i in 0..DIM {
            let mut up = th.clone();
            let mut dn = th.clone();
            up[i] += h;
            dn[i] -= h;
            let fd = (batch_cost(&ParameterVector::new(up).unwrap(), &bs, &c).unwrap()
                - batch_cost(&ParameterVector::new(dn).unwrap(), &bs, &c).unwrap())
                / (2.0 * h);
            let scale = g[i].abs().max(fd.abs()).max(1.0);
            prop_assert!((g[i] - fd).abs() / scale <= 1e-5, "coord {i}: {} vs {fd}", g[i]);
        }
    }

    #[test]
    fn cost_decomposes_over_batches(
        bs in batches(DIM as u32, 4, 6),
        th in theta(DIM),
        kind in kinds(),
        lambda in 0.0f64..2.0,
    ) {
        let c = cfg(kind, lambda);
        let p = ParameterVector::new(th.clone()).unwrap();
        let reg = c.regularizer(&th);
        let whole = batch_cost(&p, &bs, &c).unwrap();
        let parts: f64 = bs
            .iter()
            .map(|b| batch_cost(&p, std::slice::from_ref(b), &c).unwrap() - reg)
            .sum();
        prop_assert!((whole - (parts + reg)).abs() <= 1e-9 * (1.0 + whole.abs()));
    }
}

#[test]
fn parallel_evaluation_is_bit_identical() {
    use rand::{Rng, SeedableRng};
    use salbfgs_core::{Example, Label, SparseVector};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
    let dim = 40;
    let examples: Vec<Example> = (0..20_000)
        .map(|_| {
            let mut e = Vec::new();
            for i in 0..dim as u32 {
                if rng.random_bool(0.2) {
                    e.push((i, rng.random_range(-1.0..1.0)));
                }
            }
            e.retain(|&(_, v): &(u32, f64)| v != 0.0);
            Example::new(SparseVector::new(e).unwrap(), Label::from(rng.random_bool(0.5)))
        })
        .collect();
    let th: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    let obj = ExampleObjective::new(dim, &examples, cfg(LossKind::Logistic, 0.3)).unwrap();
    let run = |threads| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            let mut g = vec![0.0; dim];
            let f = obj.cost_and_gradient(&th, &mut g).unwrap();
            (f.to_bits(), g.iter().map(|v| v.to_bits()).collect::<Vec<_>>())
        })
    };
    let base = run(1);
    for threads in [2, 3, 8] {
        assert_eq!(run(threads), base);
    }
}
