//! Vec/Kronecker identities, unfolding relations and k-mode product oracles.

mod support;

use proptest::prelude::*;
use support::*;
use tenproj_core::structure::{commutation_matrix, kronecker, kronecker3, mode_permutation_matrix};
use tenproj_core::{Matrix, Mode, Tensor3};

fn dims_strategy() -> impl Strategy<Value = [usize; 3]> {
    (1usize..=5, 1usize..=5, 1usize..=5).prop_map(|(a, b, c)| [a, b, c])
}

proptest! {
    #[test]
    fn fold_inverts_unfold(dims in dims_strategy(), k in 1usize..=3, seed in any::<u64>()) {
        let x = random_tensor(&mut rng(seed), dims);
        let mode = Mode::new(k).unwrap();
        let back = Tensor3::fold(&x.unfold(mode), mode, dims).unwrap();
        prop_assert_eq!(back.as_slice(), x.as_slice());
    }

    #[test]
    fn kmode_matches_triple_loop(dims in dims_strategy(), k in 1usize..=3, q in 1usize..=5, seed in any::<u64>()) {
        let mut r = rng(seed);
        let x = random_tensor(&mut r, dims);
        let m = random_matrix(&mut r, q, dims[k - 1]);
        let fast = x.kmode_product(Mode::new(k).unwrap(), &m).unwrap();
        let slow = naive_kmode(&x, k, &m);
        prop_assert_eq!(fast.dims(), slow.dims());
        prop_assert!(fast.max_abs_diff(&slow) <= 1e-12);
    }

    #[test]
    fn kmode_equals_fold_of_product(dims in dims_strategy(), k in 1usize..=3, q in 1usize..=5, seed in any::<u64>()) {
        let mut r = rng(seed);
        let x = random_tensor(&mut r, dims);
        let m = random_matrix(&mut r, q, dims[k - 1]);
        let mode = Mode::new(k).unwrap();
        let mut out_dims = dims;
        out_dims[k - 1] = q;
        let literal = Tensor3::fold(&m.matmul(&x.unfold(mode)), mode, out_dims).unwrap();
        prop_assert!(x.kmode_product(mode, &m).unwrap().max_abs_diff(&literal) <= 1e-12);
    }

    #[test]
    fn vec_of_multilinear_product_is_kronecker(dims in dims_strategy(), q in (1usize..=4, 1usize..=4, 1usize..=4), seed in any::<u64>()) {
        let mut r = rng(seed);
        let x = random_tensor(&mut r, dims);
        let a1 = random_matrix(&mut r, q.0, dims[0]);
        let a2 = random_matrix(&mut r, q.1, dims[1]);
        let a3 = random_matrix(&mut r, q.2, dims[2]);
        let lhs = x
            .kmode_product(Mode::ONE, &a1).unwrap()
            .kmode_product(Mode::TWO, &a2).unwrap()
            .kmode_product(Mode::THREE, &a3).unwrap();
        let rhs = kronecker3(&a3, &a2, &a1).mul_vec(x.as_slice());
        prop_assert!(max_abs_diff(lhs.as_slice(), &rhs) <= 1e-12);
    }

    #[test]
    fn mode_permutation_recovers_vec(dims in dims_strategy(), k in 1usize..=3, seed in any::<u64>()) {
        let z = random_tensor(&mut rng(seed), dims);
        let mode = Mode::new(k).unwrap();
        let p = mode_permutation_matrix(mode, dims);
        prop_assert_eq!(p.mul_vec(z.unfold(mode).as_slice()), z.vec());
    }
}

#[test]
fn unfolding_relations_for_all_modes() {
    // Z = X ×₁ U₁ᵀ ×₂ U₂ᵀ ×₃ U₃ᵀ unfolds as
    //   Z₍₁₎ = U₁ᵀ X₍₁₎ (U₃ ⊗ U₂), Z₍₂₎ = U₂ᵀ X₍₂₎ (U₃ ⊗ U₁), Z₍₃₎ = U₃ᵀ X₍₃₎ (U₂ ⊗ U₁)
    let mut r = rng(11);
    for (p, q) in [([5, 5, 5], [3, 4, 2]), ([4, 3, 2], [2, 2, 2]), ([2, 5, 3], [1, 5, 3])] {
        let x = random_tensor(&mut r, p);
        let u: Vec<Matrix> = (0..3).map(|k| random_matrix(&mut r, p[k], q[k])).collect();
        let z = x
            .kmode_product(Mode::ONE, &u[0].transpose())
            .unwrap()
            .kmode_product(Mode::TWO, &u[1].transpose())
            .unwrap()
            .kmode_product(Mode::THREE, &u[2].transpose())
            .unwrap();
        let cases = [
            (Mode::ONE, 0, kronecker(&u[2], &u[1])),
            (Mode::TWO, 1, kronecker(&u[2], &u[0])),
            (Mode::THREE, 2, kronecker(&u[1], &u[0])),
        ];
        for (mode, k, tail) in cases {
            let rhs = u[k].t_matmul(&x.unfold(mode)).matmul(&tail);
            let diff = z.unfold(mode).max_abs_diff(&rhs);
            assert!(diff <= 1e-12, "mode {mode}: {diff}");
        }
    }
}

#[test]
fn kmode_composition_along_one_mode() {
    let mut r = rng(5);
    let x = random_tensor(&mut r, [3, 3, 3]);
    let a = random_matrix(&mut r, 3, 3);
    let b = random_matrix(&mut r, 3, 3);
    for k in 1..=3 {
        let mode = Mode::new(k).unwrap();
        let twice = naive_kmode(&naive_kmode(&x, k, &a), k, &b);
        let fused = naive_kmode(&x, k, &b.matmul(&a));
        assert!(twice.max_abs_diff(&fused) <= 1e-12);
        let fast = x.kmode_product(mode, &a).unwrap().kmode_product(mode, &b).unwrap();
        assert!(fast.max_abs_diff(&fused) <= 1e-12);
    }
}

#[test]
fn vec_axb_identity() {
    let mut r = rng(17);
    let a = random_matrix(&mut r, 2, 3);
    let x = random_matrix(&mut r, 3, 2);
    let b = random_matrix(&mut r, 2, 2);
    let lhs = a.matmul(&x).matmul(&b).vec();
    let rhs = kronecker(&b.transpose(), &a).mul_vec(x.as_slice());
    assert!(max_abs_diff(&lhs, &rhs) <= 1e-14);
}

#[test]
fn commutation_transposes_random_matrices() {
    let mut r = rng(23);
    for (m, n) in [(1, 1), (2, 3), (4, 1), (3, 5)] {
        let a = random_matrix(&mut r, m, n);
        assert_eq!(commutation_matrix(m, n).unwrap().mul_vec(a.as_slice()), a.transpose().vec());
    }
}

#[test]
fn mode_three_permutation_on_2x3x4() {
    let z = random_tensor(&mut rng(29), [2, 3, 4]);
    let p3 = mode_permutation_matrix(Mode::THREE, [2, 3, 4]);
    assert_eq!(p3.mul_vec(z.unfold(Mode::THREE).as_slice()), z.vec());
    assert_ne!(p3, Matrix::identity(24));
}
