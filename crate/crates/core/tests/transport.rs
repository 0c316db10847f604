mod common;

use approx::assert_abs_diff_eq;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use otgate::transport::{
    gaussian_w2, gaussian_w2_squared, sinkhorn, solve_discrete_ot, spd_sqrt, CostMatrix, DiscreteMeasure,
};
use otgate::{ClusterModel, SpdMatrix};

use common::*;

fn instance(seed: u64, max: usize) -> (Vec<f64>, Vec<f64>, DMatrix<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let m = rng.random_range(1..=max);
    let n = rng.random_range(1..=max);
    let a = random_weights(&mut rng, m);
    let b = random_weights(&mut rng, n);
    let c = DMatrix::from_fn(m, n, |_, _| rng.random_range(0.0..1.0));
    (a, b, c)
}

#[test]
fn two_by_two_example() {
    let a = DiscreteMeasure::new(vec![0.7, 0.3]).unwrap();
    let b = DiscreteMeasure::new(vec![0.4, 0.6]).unwrap();
    let c = CostMatrix::new(DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 1.0])).unwrap();
    let plan = solve_discrete_ot(&a, &b, &c).unwrap();
    // the free parameter w11 ranges over [0.1, 0.4]; cost 1.6 - 0.75·w11 is smallest at 0.4
    let oracle = brute_force_ot(&[0.7, 0.3], &[0.4, 0.6], c.as_matrix());
    assert_abs_diff_eq!(oracle, 1.3, epsilon = 1e-12);
    assert_abs_diff_eq!(plan.cost(), 1.3, epsilon = 1e-12);
    let expected = DMatrix::from_row_slice(2, 2, &[0.4, 0.3, 0.0, 0.3]);
    assert!((plan.plan() - expected).amax() < 1e-12);
}

#[test]
fn zero_weight_atoms_get_empty_rows() {
    let a = DiscreteMeasure::new(vec![0.5, 0.0, 0.5]).unwrap();
    let b = DiscreteMeasure::new(vec![1.0]).unwrap();
    let c = CostMatrix::new(DMatrix::from_row_slice(3, 1, &[1.0, 0.0, 3.0])).unwrap();
    let plan = solve_discrete_ot(&a, &b, &c).unwrap();
    assert_eq!(plan.plan()[(1, 0)], 0.0);
    assert_abs_diff_eq!(plan.cost(), 2.0, epsilon = 1e-12);
}

#[test]
fn mismatched_shapes_are_rejected() {
    let a = DiscreteMeasure::uniform(2).unwrap();
    let c = CostMatrix::new(DMatrix::zeros(3, 2)).unwrap();
    assert!(solve_discrete_ot(&a, &a, &c).is_err());
}

#[test]
fn spd_square_root_squares_back() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..50 {
        let m = random_spd(&mut rng, 3);
        let r = spd_sqrt(m.as_matrix()).unwrap();
        assert!((r.as_matrix() * r.as_matrix() - m.as_matrix()).norm() < 1e-8);
    }
}

#[test]
fn sinkhorn_with_a_nearly_isolated_block() {
    // row 2 and column 1 almost balance each other, so the optimal coupling
    // routes only ~7.6e-6 of mass into column 1 from elsewhere
    let a = [0.14275212135266668, 0.18595877683786766, 0.2149790041422053, 0.45631009766726044];
    let b = [0.2997068003598532, 0.21498655455998064, 0.4853066450801662];
    #[rustfmt::skip]
    let c = DMatrix::from_row_slice(4, 3, &[
        0.038750771892288816, 0.4606915267374514, 0.8025738039551051,
        0.09595759100300616, 0.7324355911155327, 0.31616788952371055,
        0.17352304932830642, 0.12399623739267462, 0.5295078767307337,
        0.3888140736642647, 0.6669222612170058, 0.17925520511328763,
    ]);
    let (sa, sb) = (DiscreteMeasure::new(a.to_vec()).unwrap(), DiscreteMeasure::new(b.to_vec()).unwrap());
    let cost = CostMatrix::new(c.clone()).unwrap();
    let exact = brute_force_ot(&a, &b, &c);
    for gamma in [1e-2, 3e-3, 1e-3] {
        let soft = sinkhorn(&sa, &sb, &cost, gamma, 100_000, 1e-10).unwrap();
        assert!(soft.marginal_error(&sa, &sb) < 1e-9);
        assert!((soft.transport_cost(&cost) - exact).abs() < 1e-2);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn simplex_matches_vertex_enumeration(seed in any::<u64>()) {
        let (a, b, c) = instance(seed, 4);
        let plan = solve_discrete_ot(
            &DiscreteMeasure::new(a.clone()).unwrap(),
            &DiscreteMeasure::new(b.clone()).unwrap(),
            &CostMatrix::new(c.clone()).unwrap(),
        ).unwrap();
        prop_assert!((plan.cost() - brute_force_ot(&a, &b, &c)).abs() < 1e-8);
    }

    #[test]
    fn plans_are_feasible(seed in any::<u64>()) {
        let (a, b, c) = instance(seed, 6);
        let (sa, sb) = (DiscreteMeasure::new(a).unwrap(), DiscreteMeasure::new(b).unwrap());
        let plan = solve_discrete_ot(&sa, &sb, &CostMatrix::new(c).unwrap()).unwrap();
        prop_assert!(plan.plan().iter().all(|&w| w >= 0.0));
        prop_assert!(plan.marginal_error(&sa, &sb) < 1e-9);
    }

    #[test]
    fn sinkhorn_approaches_the_exact_cost(seed in any::<u64>()) {
        let (a, b, c) = instance(seed, 5);
        let (sa, sb, cost) = (DiscreteMeasure::new(a).unwrap(), DiscreteMeasure::new(b).unwrap(), CostMatrix::new(c).unwrap());
        let exact = solve_discrete_ot(&sa, &sb, &cost).unwrap().cost();
        let soft = sinkhorn(&sa, &sb, &cost, 1e-3, 1_000_000, 1e-10).unwrap();
        prop_assert!(soft.marginal_error(&sa, &sb) < 1e-9);
        prop_assert!((soft.transport_cost(&cost) - exact).abs() < 1e-2);
    }

    #[test]
    fn w2_one_dimensional_closed_form(m1 in -50.0..50.0f64, m2 in -50.0..50.0f64, s1 in 0.01..10.0f64, s2 in 0.01..10.0f64) {
        let g = |m: f64, s: f64| ClusterModel::new(DVector::from_element(1, m), SpdMatrix::from_diagonal(&[s * s]).unwrap(), 1.0, None).unwrap();
        let expected = ((m1 - m2).powi(2) + (s1 - s2).powi(2)).sqrt();
        prop_assert!((gaussian_w2(&g(m1, s1), &g(m2, s2)).unwrap() - expected).abs() < 1e-10);
    }

    #[test]
    fn w2_metric_axioms(seed in any::<u64>(), d in 1usize..=5) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = random_model(&mut rng, d, 3.0, 1.0);
        let y = random_model(&mut rng, d, 3.0, 1.0);
        let z = random_model(&mut rng, d, 3.0, 1.0);
        let dxy = gaussian_w2(&x, &y).unwrap();
        prop_assert_eq!(dxy, gaussian_w2(&y, &x).unwrap());
        prop_assert!(dxy >= 0.0);
        prop_assert!(gaussian_w2_squared(&x, &x).unwrap().abs() < 1e-9);
        let (dxz, dzy) = (gaussian_w2(&x, &z).unwrap(), gaussian_w2(&z, &y).unwrap());
        prop_assert!(dxy <= dxz + dzy + 1e-9);
    }

    #[test]
    fn w2_commuting_covariances(seed in any::<u64>()) {
        // diagonal covariances: W2² = |Δm|² + Σ (√a_i − √b_i)²
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = 3;
        let da: Vec<f64> = (0..d).map(|_| rng.random_range(0.1..4.0)).collect();
        let db: Vec<f64> = (0..d).map(|_| rng.random_range(0.1..4.0)).collect();
        let ma = DVector::from_fn(d, |_, _| rng.random_range(-3.0..3.0));
        let mb = DVector::from_fn(d, |_, _| rng.random_range(-3.0..3.0));
        let expected = (&ma - &mb).norm_squared()
            + da.iter().zip(&db).map(|(a, b)| (a.sqrt() - b.sqrt()).powi(2)).sum::<f64>();
        let x = ClusterModel::new(ma, SpdMatrix::from_diagonal(&da).unwrap(), 1.0, None).unwrap();
        let y = ClusterModel::new(mb, SpdMatrix::from_diagonal(&db).unwrap(), 1.0, None).unwrap();
        prop_assert!((gaussian_w2_squared(&x, &y).unwrap() - expected).abs() < 1e-9);
    }
}
