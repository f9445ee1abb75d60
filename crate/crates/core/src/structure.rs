//! Structural matrices of the vec/Kronecker calculus.
//!
//! These are materialized only by the reference gradient path and the
//! tests; sizes grow as the product of all dimensions involved.

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::tensor::{unfolded_position, unfolded_shape, Mode};

/// Kronecker product `A ⊗ B`: block `(i, j)` is `A[i, j] · B`.
pub fn kronecker(a: &Matrix, b: &Matrix) -> Matrix {
    let (m, n) = a.shape();
    let (p, q) = b.shape();
    let mut out = Matrix::zeros(m * p, n * q);
    for j in 0..n {
        for i in 0..m {
            let aij = a[(i, j)];
            if aij == 0.0 {
                continue;
            }
            for l in 0..q {
                for k in 0..p {
                    out[(i * p + k, j * q + l)] = aij * b[(k, l)];
                }
            }
        }
    }
    out
}

/// `A₃ ⊗ A₂ ⊗ A₁`, the matrix acting on `vec(X)` for `X ×₁ A₁ ×₂ A₂ ×₃ A₃`.
pub fn kronecker3(a3: &Matrix, a2: &Matrix, a1: &Matrix) -> Matrix {
    kronecker(&kronecker(a3, a2), a1)
}

/// Commutation matrix `K_{m,n}`: the `mn × mn` permutation with
/// `K_{m,n} · vec(A) = vec(Aᵀ)` for every `m × n` matrix `A`.
pub fn commutation_matrix(m: usize, n: usize) -> Result<Matrix> {
    if m == 0 || n == 0 {
        return Err(Error::InvalidParameter(format!(
            "commutation matrix needs positive sizes, got {m}x{n}"
        )));
    }
    let mut k = Matrix::zeros(m * n, m * n);
    for i in 0..m {
        for j in 0..n {
            // A[i, j] sits at i + m·j in vec(A) and at j + n·i in vec(Aᵀ)
            k[(j + n * i, i + m * j)] = 1.0;
        }
    }
    Ok(k)
}

/// Mode-permutation matrix `P⁽ᵏ⁾` for tensors of shape `dims`: the
/// permutation with `vec(Z) = P⁽ᵏ⁾ · vec(Z₍ₖ₎)` for every such `Z`.
///
/// Built by tracing where each element `(a, b, c)` lands in both
/// vectorizations, so it does not depend on any tensor values.
pub fn mode_permutation_matrix(mode: Mode, dims: [usize; 3]) -> Matrix {
    let [q1, q2, q3] = dims;
    let n = q1 * q2 * q3;
    let (rows, _) = unfolded_shape(dims, mode);
    let mut p = Matrix::zeros(n, n);
    for c in 0..q3 {
        for b in 0..q2 {
            for a in 0..q1 {
                let (r, col) = unfolded_position(dims, mode, a, b, c);
                p[(a + q1 * (b + q2 * c), r + rows * col)] = 1.0;
            }
        }
    }
    p
}

/// True when every row and every column holds exactly one `1` and all other
/// entries are `0`.
pub fn is_permutation_matrix(p: &Matrix) -> bool {
    if !p.is_square() {
        return false;
    }
    let n = p.rows();
    let mut col_hits = vec![0usize; n];
    for i in 0..n {
        let mut row_hits = 0;
        for (j, hits) in col_hits.iter_mut().enumerate() {
            let v = p[(i, j)];
            if v == 1.0 {
                row_hits += 1;
                *hits += 1;
            } else if v != 0.0 {
                return false;
            }
        }
        if row_hits != 1 {
            return false;
        }
    }
    col_hits.iter().all(|&h| h == 1)
}
