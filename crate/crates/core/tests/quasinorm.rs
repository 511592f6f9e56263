mod common;

use common::*;
use dropfact::quasinorm::equalize_diagonal;
use dropfact::{
    doubling_construction, envelope_gap, equalized_factorization, lambda_d, nuclear_norm, omega,
    quasi_norm, quasi_norm_eval, DenseMatrix, Error, FactorPair,
};
use proptest::prelude::*;
use rand::Rng;

fn low_rank(m: usize, n: usize, r: usize, rng: &mut dropfact::rng::DropRng) -> DenseMatrix {
    gaussian(m, r, rng).matmul_t(&gaussian(n, r, rng)).unwrap()
}

#[test]
fn repeated_doubling_shrinks_omega_geometrically() {
    let mut rng = rng(40);
    let f = random_pair(5, 4, 3, &mut rng);
    let mut g = f.clone();
    for _ in 0..10 {
        g = doubling_construction(&g);
    }
    assert_eq!(g.width(), 3 << 10);
    assert!(rel(omega(&g), omega(&f) / 1024.0) <= 1e-10);
    let target = f.product();
    assert!(dropfact::rel_frob_dist(&g.product(), &target).unwrap() <= 1e-10);
}

#[test]
fn equalizer_is_orthogonal_with_constant_diagonal() {
    let mut rng = rng(41);
    for _ in 0..30 {
        let d = rng.random_range(1..=9);
        let mut vals: Vec<f64> = (0..d).map(|_| rng.random_range(0.0..4.0)).collect();
        if rng.random_bool(0.3) {
            vals[d - 1] = 0.0;
        }
        let w = equalize_diagonal(&vals).unwrap();
        let eye = DenseMatrix::identity(d);
        assert!(max_abs_diff(&w.t_matmul(&w).unwrap(), &eye) <= 1e-12);
        let m = matmul_loop(&matmul_loop(&transpose_loop(&w), &DenseMatrix::from_diag(d, d, &vals)), &w);
        let target = vals.iter().sum::<f64>() / d as f64;
        for i in 0..d {
            assert!((m[(i, i)] - target).abs() <= 1e-12 * (1.0 + target));
        }
    }
}

#[test]
fn equalized_factorization_has_equal_energies_and_reproduces_target() {
    let mut rng = rng(42);
    for _ in 0..30 {
        let (m, n) = (rng.random_range(2..=7), rng.random_range(2..=7));
        let r = rng.random_range(1..=m.min(n));
        let y = low_rank(m, n, r, &mut rng);
        let theta_bar = rng.random_range(0.1..0.9);
        for d in r..=r + 4 {
            let eq = equalized_factorization(&y, d, theta_bar).unwrap();
            assert_eq!(eq.factors.width(), d);
            assert!(dropfact::rel_frob_dist(&eq.factors.product(), &y).unwrap() <= 1e-10);
            let e = eq.factors.column_energies();
            let mean = e.iter().sum::<f64>() / d as f64;
            assert!(e.iter().all(|&v| (v - mean).abs() <= 1e-9 * mean));
            // The value does not depend on the width.
            let nuc = nuclear_norm(&y).unwrap();
            let envelope = (1.0 - theta_bar) / theta_bar * nuc * nuc;
            assert!(rel(eq.achieved_value, envelope) <= 1e-8);
            assert!(rel(lambda_d(d, theta_bar).unwrap() * omega_loop(&eq.factors), envelope) <= 1e-8);
        }
    }
}

#[test]
fn width_below_rank_is_rejected() {
    let y = DenseMatrix::from_diag(3, 3, &[3.0, 2.0, 1.0]);
    assert!(matches!(equalized_factorization(&y, 2, 0.5), Err(Error::Contract(_))));
}

/// Direct search over all width-2 factorizations of diag(3, 1): every
/// invertible `U` gives `V = Y^T U^{-T}`.
#[test]
fn diagonal_quasi_norm_matches_direct_search() {
    let y = DenseMatrix::from_diag(2, 2, &[3.0, 1.0]);
    let theta_bar = 0.5;
    let lambda2 = lambda_d(2, theta_bar).unwrap();
    let value = |p: &[f64]| -> f64 {
        let (a, b, c, d) = (p[0], p[1], p[2], p[3]);
        let det = a * d - b * c;
        if det.abs() < 1e-9 {
            return f64::INFINITY;
        }
        let u = DenseMatrix::from_rows(&[vec![a, b], vec![c, d]]).unwrap();
        // V^T = U^{-1} Y
        let inv = DenseMatrix::from_rows(&[vec![d / det, -b / det], vec![-c / det, a / det]]).unwrap();
        let vt = matmul_loop(&inv, &y);
        let f = FactorPair::new(u, transpose_loop(&vt)).unwrap();
        lambda2 * omega_loop(&f)
    };
    let mut rng = rng(43);
    let mut best = f64::INFINITY;
    for _ in 0..20 {
        let start: Vec<f64> = (0..4).map(|_| rng.random_range(-2.0..2.0)).collect();
        let (_, v) = nelder_mead(value, &start, 0.5, 4000);
        assert!(v >= 16.0 - 1e-9, "search went below the bound: {v}");
        best = best.min(v);
    }
    assert!((best - 16.0).abs() <= 1e-4, "direct search found {best}");
    let q = quasi_norm(&y, theta_bar).unwrap();
    assert!((q * q - 16.0).abs() <= 1e-10);
}

#[test]
fn zero_matrix_has_zero_quasi_norm() {
    let z = DenseMatrix::zeros(3, 4);
    let e = quasi_norm_eval(&z, 0.5).unwrap();
    assert_eq!(e.value, 0.0);
    assert_eq!(e.rank, 0);
}

#[test]
fn quasi_norm_axioms_on_random_samples() {
    let mut rng = rng(44);
    let sqrt2 = 2f64.sqrt();
    for _ in 0..200 {
        let (m, n) = random_shape(&mut rng, 5);
        let theta_bar = [0.3, 0.5, 0.9][rng.random_range(0..3)];
        let y = gaussian(m, n, &mut rng);
        let z = gaussian(m, n, &mut rng).scale(rng.random_range(0.01..3.0));
        let qy = quasi_norm(&y, theta_bar).unwrap();
        let qz = quasi_norm(&z, theta_bar).unwrap();
        assert!(qy >= 0.0);
        if y.frobenius_norm() >= 1e-3 {
            assert!(qy > 0.0);
        }
        let alpha = rng.random_range(-4.0..4.0);
        let scaled = quasi_norm(&y.scale(alpha), theta_bar).unwrap();
        assert!((scaled - alpha.abs() * qy).abs() <= 1e-10 * (1.0 + qy * alpha.abs()));
        let sum = quasi_norm(&y.add(&z).unwrap(), theta_bar).unwrap();
        assert!(sum <= sqrt2 * (qy + qz) * (1.0 + 1e-12));
        assert!(envelope_gap(&y, theta_bar).unwrap() >= -1e-8 * (1.0 + qy * qy));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn quasi_norm_is_a_scaled_nuclear_norm(seed in any::<u64>(), m in 1usize..6, n in 1usize..6,
                                           theta_bar in 0.05f64..0.95) {
        let mut r = rng(seed);
        let y = gaussian(m, n, &mut r);
        let q = quasi_norm(&y, theta_bar).unwrap();
        let expected = ((1.0 - theta_bar) / theta_bar).sqrt() * nuclear_norm(&y).unwrap();
        prop_assert!(rel(q, expected) <= 1e-8);
    }

    #[test]
    fn doubling_preserves_product(seed in any::<u64>(), d in 1usize..5) {
        let mut r = rng(seed);
        let f = random_pair(4, 3, d, &mut r);
        let g = doubling_construction(&f);
        prop_assert!(max_abs_diff(&g.product(), &f.product()) <= 1e-12 * (1.0 + f.product().max_abs()));
        prop_assert!(rel(omega(&g), 0.5 * omega(&f)) <= 1e-12);
    }

    /// The adaptive objective of the best width-2d factorization never drops
    /// below that of width d.
    #[test]
    fn adaptive_value_does_not_shrink_with_width(seed in any::<u64>(), r in 1usize..4,
                                                 theta_bar in 0.1f64..0.9) {
        let mut rg = rng(seed);
        let y = low_rank(5, 5, r, &mut rg);
        let at_d = equalized_factorization(&y, r, theta_bar).unwrap().achieved_value;
        let at_2d = equalized_factorization(&y, 2 * r, theta_bar).unwrap().achieved_value;
        prop_assert!(at_2d >= at_d - 1e-6);
    }
}
