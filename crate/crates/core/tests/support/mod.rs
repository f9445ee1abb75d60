#![allow(dead_code)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tenproj_core::{Matrix, Tensor3};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.gen_range(-1.0..=1.0))
}

pub fn random_tensor(rng: &mut ChaCha8Rng, dims: [usize; 3]) -> Tensor3 {
    Tensor3::from_fn(dims, |_, _, _| rng.gen_range(-1.0..=1.0))
}

pub fn random_spd(rng: &mut ChaCha8Rng, n: usize) -> Matrix {
    let a = random_matrix(rng, n, n);
    a.t_matmul(&a).add(&Matrix::identity(n))
}

pub fn random_symmetric(rng: &mut ChaCha8Rng, n: usize) -> Matrix {
    let a = random_matrix(rng, n, n);
    a.add(&a.transpose()).scale(0.5)
}

/// Brute-force `X ×ₖ M`: `Y[.., i, ..] = Σⱼ M[i, j] · X[.., j, ..]`.
pub fn naive_kmode(x: &Tensor3, k: usize, m: &Matrix) -> Tensor3 {
    let mut dims = x.dims();
    dims[k - 1] = m.rows();
    Tensor3::from_fn(dims, |a, b, c| {
        let mut s = 0.0;
        for j in 0..m.cols() {
            s += match k {
                1 => m[(a, j)] * x.get(j, b, c),
                2 => m[(b, j)] * x.get(a, j, c),
                _ => m[(c, j)] * x.get(a, b, j),
            };
        }
        s
    })
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}
