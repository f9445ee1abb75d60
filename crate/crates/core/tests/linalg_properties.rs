mod support;

use proptest::prelude::*;
use support::*;
use tenproj_core::gradcheck::central_diff_gradient;
use tenproj_core::linalg::{
    inv_sqrt_derivative_apply, inv_sqrt_jacobian_exact, inv_sqrt_jacobian_paper, inv_sqrt_psd, inv_sqrt_with_eig,
    spd_power, sym_eig,
};
use tenproj_core::structure::commutation_matrix;
use tenproj_core::{JacobianMode, Matrix};

#[test]
fn eigendecomposition_reconstructs_random_symmetric() {
    let mut r = rng(1);
    for _ in 0..20 {
        let m = random_symmetric(&mut r, 6);
        let eig = sym_eig(&m).unwrap();
        assert!(eig.reconstruct().max_abs_diff(&m) <= 1e-10);
        let qtq = eig.vectors.t_matmul(&eig.vectors);
        assert!(qtq.max_abs_diff(&Matrix::identity(6)) <= 1e-12);
        assert!(eig.values.windows(2).all(|w| w[0] >= w[1]));
    }
}

#[test]
fn eigenvector_signs_are_canonical() {
    let mut r = rng(2);
    let m = random_symmetric(&mut r, 5);
    let eig = sym_eig(&m).unwrap();
    for j in 0..5 {
        let col = eig.vectors.column(j);
        let peak = col.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
        let first = col.iter().find(|v| v.abs() >= peak * (1.0 - 1e-10)).unwrap();
        assert!(*first > 0.0);
    }
    assert_eq!(sym_eig(&m).unwrap(), eig);
}

#[test]
fn inverse_square_root_of_random_spd() {
    let mut r = rng(3);
    for _ in 0..10 {
        let m = random_spd(&mut r, 5);
        let g = inv_sqrt_psd(&m).unwrap();
        assert!(g.matmul(&g).matmul(&m).max_abs_diff(&Matrix::identity(5)) <= 1e-10);
        assert!(g.matmul(&m).max_abs_diff(&m.matmul(&g)) <= 1e-10);
        assert!(g.asymmetry().0 <= 1e-12);
        let half = spd_power(&m, 0.5).unwrap();
        assert!(half.matmul(&half).max_abs_diff(&m) <= 1e-10);
    }
}

/// Columns are `J · vec(Eᵢⱼ + Eⱼᵢ)` for `i ≤ j`; the map is only defined on
/// symmetric inputs so both sides are compared on that subspace.
fn symmetric_basis_columns(m: &Matrix, mut column: impl FnMut(&Matrix) -> Vec<f64>) -> Matrix {
    let n = m.rows();
    let mut cols = Vec::new();
    for j in 0..n {
        for i in 0..=j {
            let mut dir = Matrix::zeros(n, n);
            dir.as_mut_slice()[i + n * j] = 1.0;
            dir.as_mut_slice()[j + n * i] = 1.0;
            cols.extend(column(&dir));
        }
    }
    Matrix::from_col_major(n * n, n * (n + 1) / 2, cols).unwrap()
}

#[test]
fn exact_jacobian_matches_finite_differences() {
    let mut r = rng(4);
    let step = 1e-5;
    for _ in 0..5 {
        let m = random_spd(&mut r, 4);
        let jac = inv_sqrt_jacobian_exact(&m).unwrap();
        let exact = symmetric_basis_columns(&m, |d| jac.mul_vec(d.as_slice()));
        let numeric = symmetric_basis_columns(&m, |d| {
            let f = |s: f64| inv_sqrt_psd(&m.add(&d.scale(s))).unwrap();
            f(step).sub(&f(-step)).scale(0.5 / step).into_vec()
        });
        let rel = exact.sub(&numeric).frobenius_norm() / exact.frobenius_norm();
        assert!(rel <= 1e-7, "relative error {rel}");
    }
}

#[test]
fn exact_jacobian_directional_derivative() {
    let mut r = rng(5);
    let m = random_spd(&mut r, 4);
    let dir = random_symmetric(&mut r, 4);
    let g = inv_sqrt_psd(&m).unwrap();
    let f = |s: &[f64]| {
        let probe = inv_sqrt_psd(&m.add(&dir.scale(s[0]))).unwrap();
        probe.sub(&g).as_slice().iter().zip(dir.as_slice()).map(|(a, b)| a * b).sum::<f64>()
    };
    let numeric = central_diff_gradient(f, &[0.0], 1e-5).unwrap()[0];
    let (_, eig) = inv_sqrt_with_eig(&m).unwrap();
    let dg = inv_sqrt_derivative_apply(&eig, JacobianMode::Exact, &dir);
    let analytic: f64 = dg.as_slice().iter().zip(dir.as_slice()).map(|(a, b)| a * b).sum();
    assert!((analytic - numeric).abs() <= 1e-7 * analytic.abs().max(1.0));
}

#[test]
fn jacobians_commute_with_transposition() {
    let mut r = rng(6);
    let m = random_spd(&mut r, 3);
    let k = commutation_matrix(3, 3).unwrap();
    for j in [inv_sqrt_jacobian_exact(&m).unwrap(), inv_sqrt_jacobian_paper(&m).unwrap()] {
        assert!(j.matmul(&k).max_abs_diff(&k.matmul(&j)) <= 1e-12);
        assert!(j.asymmetry().0 <= 1e-12);
    }
}

#[test]
fn paper_and_exact_agree_on_scaled_identity() {
    for c in [0.5, 1.0, 4.0] {
        for n in [1, 2, 3] {
            let m = Matrix::identity(n).scale(c);
            let exact = inv_sqrt_jacobian_exact(&m).unwrap();
            let paper = inv_sqrt_jacobian_paper(&m).unwrap();
            assert!(exact.max_abs_diff(&paper) <= 1e-10, "c = {c}, n = {n}");
        }
    }
}

#[test]
fn paper_and_exact_disagree_on_anisotropic_spectrum() {
    let m = Matrix::from_diag(&[4.0, 1.0]);
    let exact = inv_sqrt_jacobian_exact(&m).unwrap();
    let paper = inv_sqrt_jacobian_paper(&m).unwrap();
    let rel = exact.sub(&paper).frobenius_norm() / exact.frobenius_norm();
    assert!(rel > 1e-2, "relative distance {rel}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn operator_form_matches_materialized(n in 1usize..=4, seed in any::<u64>(), paper in any::<bool>()) {
        let mut r = rng(seed);
        let m = random_spd(&mut r, n);
        let dir = random_matrix(&mut r, n, n);
        let mode = if paper { JacobianMode::Paper } else { JacobianMode::Exact };
        let (_, eig) = inv_sqrt_with_eig(&m).unwrap();
        let applied = inv_sqrt_derivative_apply(&eig, mode, &dir);
        let jac = if paper { inv_sqrt_jacobian_paper(&m) } else { inv_sqrt_jacobian_exact(&m) }.unwrap();
        let materialized = jac.mul_vec(dir.as_slice());
        prop_assert!(max_abs_diff(applied.as_slice(), &materialized) <= 1e-12 * (1.0 + jac.max_abs()));
    }

    #[test]
    fn spectrum_of_spd_is_positive(n in 1usize..=6, seed in any::<u64>()) {
        let m = random_spd(&mut rng(seed), n);
        let eig = sym_eig(&m).unwrap();
        prop_assert!(eig.min_value() >= 1.0 - 1e-10);
        let trace: f64 = (0..n).map(|i| m[(i, i)]).sum();
        prop_assert!((eig.values.iter().sum::<f64>() - trace).abs() <= 1e-10 * trace);
    }
}
