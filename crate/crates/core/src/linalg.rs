//! Symmetric eigendecomposition and functions of SPD matrices.
//!
//! The projection layer needs `G = M^{-1/2}` for small `q × q` SPD matrices
//! together with the derivative of `M ↦ M^{-1/2}`. Two derivatives are
//! provided:
//!
//! * [`JacobianMode::Exact`]: the Fréchet derivative. In the eigenbasis
//!   `M = Q D Qᵀ` it scales each coordinate of `Qᵀ ΔM Q` by
//!   `−1 / (√dᵢ √dⱼ (√dᵢ + √dⱼ))`.
//! * [`JacobianMode::Paper`]: `−½ M^{-3/4} ⊗ M^{-3/4}`, which coincides with
//!   the exact derivative only when the perturbation commutes with `M`.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::structure::kronecker;

/// Relative off-diagonal threshold for the Jacobi sweeps.
pub const JACOBI_TOLERANCE: f64 = 1e-14;
/// Sweep limit for the Jacobi solver.
pub const JACOBI_MAX_SWEEPS: usize = 30;
/// Absolute symmetry tolerance, scaled by `max(1, max |mᵢⱼ|)`.
pub const SYMMETRY_TOLERANCE: f64 = 1e-12;

/// Which derivative of `M ↦ M^{-1/2}` the backward pass uses.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum JacobianMode {
    #[default]
    Exact,
    Paper,
}

impl fmt::Display for JacobianMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            JacobianMode::Exact => "exact",
            JacobianMode::Paper => "paper",
        })
    }
}

impl FromStr for JacobianMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "exact" => Ok(JacobianMode::Exact),
            "paper" => Ok(JacobianMode::Paper),
            other => Err(Error::InvalidParameter(format!(
                "unknown jacobian mode {other:?} (expected exact or paper)"
            ))),
        }
    }
}

/// Spectral decomposition `M = Q · diag(values) · Qᵀ`.
#[derive(Clone, Debug, PartialEq)]
pub struct SymEig {
    /// Eigenvalues, sorted descending.
    pub values: Vec<f64>,
    /// Orthonormal eigenvectors as columns, in the order of `values`.
    pub vectors: Matrix,
}

impl SymEig {
    /// `Q · diag(f(λ)) · Qᵀ`.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> Matrix {
        let q = &self.vectors;
        let n = q.rows();
        let scaled = Matrix::from_fn(n, n, |i, j| q[(i, j)] * f(self.values[j]));
        scaled.matmul_t(q)
    }

    pub fn reconstruct(&self) -> Matrix {
        self.map(|l| l)
    }

    pub fn min_value(&self) -> f64 {
        self.values.last().copied().unwrap_or(f64::INFINITY)
    }
}

fn check_symmetric(m: &Matrix) -> Result<()> {
    if !m.is_square() {
        return Err(Error::NotSquare {
            rows: m.rows(),
            cols: m.cols(),
        });
    }
    if !m.is_finite() {
        return Err(Error::NonFinite("matrix passed to the eigensolver".into()));
    }
    let (defect, row, col) = m.asymmetry();
    if defect > SYMMETRY_TOLERANCE * m.max_abs().max(1.0) {
        return Err(Error::NotSymmetric { row, col, defect });
    }
    Ok(())
}

/// Full eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Sweeps run in fixed row-major pair order until the off-diagonal
/// Frobenius norm drops to `1e-14 · ‖M‖_F`. Eigenvalues are sorted
/// descending and each eigenvector is signed so that its largest-magnitude
/// component is positive (the first one wins among components equal in
/// magnitude to within `1e-10` relative).
pub fn sym_eig(m: &Matrix) -> Result<SymEig> {
    check_symmetric(m)?;
    let n = m.rows();
    // symmetrize so both triangles agree exactly
    let mut a = Matrix::from_fn(n, n, |i, j| 0.5 * (m[(i, j)] + m[(j, i)]));
    let mut v = Matrix::identity(n);
    let threshold = JACOBI_TOLERANCE * a.frobenius_norm();

    let off_norm = |a: &Matrix| -> f64 {
        let mut s = 0.0;
        for j in 0..n {
            for i in 0..n {
                if i != j {
                    s += a[(i, j)] * a[(i, j)];
                }
            }
        }
        s.sqrt()
    };

    let mut converged = off_norm(&a) <= threshold;
    let mut sweeps = 0;
    while !converged {
        if sweeps == JACOBI_MAX_SWEEPS {
            return Err(Error::NoConvergence(JACOBI_MAX_SWEEPS));
        }
        sweeps += 1;
        for p in 0..n.saturating_sub(1) {
            for q in (p + 1)..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = if theta.abs() > 1e150 {
                    0.5 / theta
                } else {
                    theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt())
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                a[(p, p)] -= t * apq;
                a[(q, q)] += t * apq;
                a[(p, q)] = 0.0;
                a[(q, p)] = 0.0;
                for r in 0..n {
                    if r != p && r != q {
                        let arp = a[(r, p)];
                        let arq = a[(r, q)];
                        let new_rp = c * arp - s * arq;
                        let new_rq = s * arp + c * arq;
                        a[(r, p)] = new_rp;
                        a[(p, r)] = new_rp;
                        a[(r, q)] = new_rq;
                        a[(q, r)] = new_rq;
                    }
                    let vrp = v[(r, p)];
                    let vrq = v[(r, q)];
                    v[(r, p)] = c * vrp - s * vrq;
                    v[(r, q)] = s * vrp + c * vrq;
                }
            }
        }
        converged = off_norm(&a) <= threshold;
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[(j, j)].total_cmp(&a[(i, i)]));
    let values: Vec<f64> = order.iter().map(|&i| a[(i, i)]).collect();
    let mut vectors = Matrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let col = v.column(src);
        let peak = col.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let lead = col
            .iter()
            .find(|x| x.abs() >= peak * (1.0 - 1e-10))
            .copied()
            .unwrap_or(0.0);
        let sign = if lead < 0.0 { -1.0 } else { 1.0 };
        for i in 0..n {
            vectors[(i, dst)] = sign * col[i];
        }
    }
    Ok(SymEig { values, vectors })
}

fn spd_eig(m: &Matrix) -> Result<SymEig> {
    let eig = sym_eig(m)?;
    let min = eig.min_value();
    if !(min > 0.0) {
        return Err(Error::NotPositiveDefinite(min));
    }
    Ok(eig)
}

/// `M^p` for SPD `M`.
pub fn spd_power(m: &Matrix, p: f64) -> Result<Matrix> {
    Ok(spd_eig(m)?.map(|l| l.powf(p)))
}

/// `M^{-1/2}` for SPD `M`, computed as `Q · diag(λ^{-1/2}) · Qᵀ`.
pub fn inv_sqrt_psd(m: &Matrix) -> Result<Matrix> {
    Ok(inv_sqrt_with_eig(m)?.0)
}

/// Like [`inv_sqrt_psd`] but also returns the eigendecomposition, which the
/// backward pass reuses.
pub fn inv_sqrt_with_eig(m: &Matrix) -> Result<(Matrix, SymEig)> {
    let eig = spd_eig(m)?;
    let g = eig.map(|l| 1.0 / l.sqrt());
    Ok((g, eig))
}

/// Divided-difference coefficient of `x ↦ x^{-1/2}` between two
/// eigenvalues: `−1 / (√dᵢ √dⱼ (√dᵢ + √dⱼ))`. Continuous as `dᵢ → dⱼ`,
/// where it tends to the derivative `−½ d^{-3/2}`.
#[inline]
pub fn inv_sqrt_divided_difference(di: f64, dj: f64) -> f64 {
    let (si, sj) = (di.sqrt(), dj.sqrt());
    -1.0 / (si * sj * (si + sj))
}

/// `q² × q²` matrix `−½ (M^{-3/4} ⊗ M^{-3/4})`.
pub fn inv_sqrt_jacobian_paper(m: &Matrix) -> Result<Matrix> {
    let a = spd_power(m, -0.75)?;
    Ok(kronecker(&a, &a).scale(-0.5))
}

/// `q² × q²` Fréchet derivative `J` of `M ↦ M^{-1/2}`:
/// `vec(ΔG) = J · vec(ΔM)`.
///
/// With `M = Q D Qᵀ`, `J = (Q ⊗ Q) · diag(vec F) · (Q ⊗ Q)ᵀ` where
/// `F[i, j]` is [`inv_sqrt_divided_difference`]`(dᵢ, dⱼ)`.
pub fn inv_sqrt_jacobian_exact(m: &Matrix) -> Result<Matrix> {
    let eig = spd_eig(m)?;
    let n = m.rows();
    let qq = kronecker(&eig.vectors, &eig.vectors);
    let mut scaled = qq.clone();
    // column (i + n·j) of Q⊗Q corresponds to eigen-coordinate (i, j)
    for j in 0..n {
        for i in 0..n {
            let f = inv_sqrt_divided_difference(eig.values[i], eig.values[j]);
            let col = i + n * j;
            for r in 0..n * n {
                scaled[(r, col)] *= f;
            }
        }
    }
    Ok(scaled.matmul_t(&qq))
}

/// The Jacobian of `M ↦ M^{-1/2}` selected by `mode`, materialized.
pub fn inv_sqrt_jacobian(m: &Matrix, mode: JacobianMode) -> Result<Matrix> {
    match mode {
        JacobianMode::Exact => inv_sqrt_jacobian_exact(m),
        JacobianMode::Paper => inv_sqrt_jacobian_paper(m),
    }
}

/// Applies the selected derivative of `M ↦ M^{-1/2}` at `M = eig` to a
/// direction `dm` without materializing the `q² × q²` Jacobian.
///
/// Both variants are self-adjoint under the Frobenius inner product, so the
/// same call also pulls a gradient with respect to `G` back to `M`.
pub fn inv_sqrt_derivative_apply(eig: &SymEig, mode: JacobianMode, dm: &Matrix) -> Matrix {
    let q = &eig.vectors;
    match mode {
        JacobianMode::Exact => {
            let n = q.rows();
            let rotated = q.t_matmul(dm).matmul(q);
            let weighted = Matrix::from_fn(n, n, |i, j| {
                rotated[(i, j)] * inv_sqrt_divided_difference(eig.values[i], eig.values[j])
            });
            q.matmul(&weighted).matmul_t(q)
        }
        JacobianMode::Paper => {
            let a = eig.map(|l| l.powf(-0.75));
            a.matmul(dm).matmul(&a).scale(-0.5)
        }
    }
}
