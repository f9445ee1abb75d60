//! Dense 3-order tensors, mode-k unfolding/folding and the k-mode product.
//!
//! Unfoldings follow the Kolda–Bader convention with a column-major
//! reshape:
//!
//! | mode | shape             | column index of `X[a, b, c]` |
//! |------|-------------------|------------------------------|
//! | 1    | `p1 × (p2·p3)`    | `b + p2·c`                   |
//! | 2    | `p2 × (p3·p1)`    | `a + p1·c`                   |
//! | 3    | `p3 × (p1·p2)`    | `a + p1·b`                   |
//!
//! With that convention `X ×ₖ M = fold(M · X₍ₖ₎)`.

use std::fmt;

use crate::error::{Error, Result};
use crate::gemm::{gemm, MatMut, MatRef};
use crate::matrix::Matrix;

/// A tensor mode, numbered 1, 2, 3 at the API surface.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Mode(u8);

impl Mode {
    pub const ONE: Mode = Mode(1);
    pub const TWO: Mode = Mode(2);
    pub const THREE: Mode = Mode(3);
    pub const ALL: [Mode; 3] = [Mode::ONE, Mode::TWO, Mode::THREE];

    /// Validates a 1-based mode index.
    pub fn new(k: usize) -> Result<Mode> {
        match k {
            1..=3 => Ok(Mode(k as u8)),
            _ => Err(Error::InvalidMode(k)),
        }
    }

    /// The 1-based index.
    pub fn number(self) -> usize {
        self.0 as usize
    }

    /// 0-based axis offset.
    pub fn axis(self) -> usize {
        self.0 as usize - 1
    }

    /// The two remaining modes in increasing order.
    pub fn others(self) -> [Mode; 2] {
        match self.0 {
            1 => [Mode::TWO, Mode::THREE],
            2 => [Mode::ONE, Mode::THREE],
            _ => [Mode::ONE, Mode::TWO],
        }
    }
}

impl TryFrom<usize> for Mode {
    type Error = Error;

    fn try_from(k: usize) -> Result<Mode> {
        Mode::new(k)
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Shape of the mode-k unfolding for tensor dims `dims`.
pub fn unfolded_shape(dims: [usize; 3], mode: Mode) -> (usize, usize) {
    let [p1, p2, p3] = dims;
    match mode.number() {
        1 => (p1, p2 * p3),
        2 => (p2, p3 * p1),
        _ => (p3, p1 * p2),
    }
}

/// `(row, col)` of element `(a, b, c)` in the mode-k unfolding.
#[inline]
pub fn unfolded_position(dims: [usize; 3], mode: Mode, a: usize, b: usize, c: usize) -> (usize, usize) {
    let [p1, p2, _] = dims;
    match mode.number() {
        1 => (a, b + p2 * c),
        2 => (b, a + p1 * c),
        _ => (c, a + p1 * b),
    }
}

/// Dense `p1 × p2 × p3` tensor; element `(a, b, c)` at `a + p1·b + p1·p2·c`.
#[derive(Clone, PartialEq)]
pub struct Tensor3 {
    dims: [usize; 3],
    data: Vec<f64>,
}

impl Tensor3 {
    pub fn zeros(dims: [usize; 3]) -> Self {
        Self {
            dims,
            data: vec![0.0; dims.iter().product()],
        }
    }

    pub fn from_col_major(dims: [usize; 3], data: Vec<f64>) -> Result<Self> {
        let expected: usize = dims.iter().product();
        if data.len() != expected {
            return Err(Error::DataLength {
                expected,
                actual: data.len(),
            });
        }
        Ok(Self { dims, data })
    }

    pub fn from_fn(dims: [usize; 3], mut f: impl FnMut(usize, usize, usize) -> f64) -> Self {
        let [p1, p2, p3] = dims;
        let mut data = Vec::with_capacity(p1 * p2 * p3);
        for c in 0..p3 {
            for b in 0..p2 {
                for a in 0..p1 {
                    data.push(f(a, b, c));
                }
            }
        }
        Self { dims, data }
    }

    pub fn dims(&self) -> [usize; 3] {
        self.dims
    }

    pub fn dim(&self, mode: Mode) -> usize {
        self.dims[mode.axis()]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    fn offset(&self, a: usize, b: usize, c: usize) -> usize {
        debug_assert!(a < self.dims[0] && b < self.dims[1] && c < self.dims[2]);
        a + self.dims[0] * (b + self.dims[1] * c)
    }

    #[inline]
    pub fn get(&self, a: usize, b: usize, c: usize) -> f64 {
        self.data[self.offset(a, b, c)]
    }

    #[inline]
    pub fn set(&mut self, a: usize, b: usize, c: usize, v: f64) {
        let o = self.offset(a, b, c);
        self.data[o] = v;
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    /// `vec(X)`: first index fastest.
    pub fn vec(&self) -> Vec<f64> {
        self.data.clone()
    }

    /// Mode-k unfolding `X₍ₖ₎`.
    pub fn unfold(&self, mode: Mode) -> Matrix {
        let [p1, p2, p3] = self.dims;
        let (rows, cols) = unfolded_shape(self.dims, mode);
        let mut out = vec![0.0; rows * cols];
        match mode.number() {
            // already the column-major p1 × (p2·p3) layout
            1 => out.copy_from_slice(&self.data),
            2 => {
                for c in 0..p3 {
                    for b in 0..p2 {
                        for a in 0..p1 {
                            out[b + rows * (a + p1 * c)] = self.data[a + p1 * (b + p2 * c)];
                        }
                    }
                }
            }
            _ => {
                for c in 0..p3 {
                    for ab in 0..p1 * p2 {
                        out[c + rows * ab] = self.data[ab + p1 * p2 * c];
                    }
                }
            }
        }
        Matrix::from_col_major(rows, cols, out).expect("unfold length")
    }

    /// Inverse of [`Tensor3::unfold`]: rebuilds a tensor with `dims` from its
    /// mode-k unfolding.
    pub fn fold(m: &Matrix, mode: Mode, dims: [usize; 3]) -> Result<Tensor3> {
        let expected = unfolded_shape(dims, mode);
        if m.shape() != expected {
            return Err(Error::ShapeMismatch(format!(
                "cannot fold a {}x{} matrix along mode {} into {:?} (expected {}x{})",
                m.rows(),
                m.cols(),
                mode,
                dims,
                expected.0,
                expected.1
            )));
        }
        let [p1, p2, p3] = dims;
        let src = m.as_slice();
        let rows = expected.0;
        let data = match mode.number() {
            1 => src.to_vec(),
            2 => {
                let mut out = vec![0.0; src.len()];
                for c in 0..p3 {
                    for b in 0..p2 {
                        for a in 0..p1 {
                            out[a + p1 * (b + p2 * c)] = src[b + rows * (a + p1 * c)];
                        }
                    }
                }
                out
            }
            _ => {
                let mut out = vec![0.0; src.len()];
                for c in 0..p3 {
                    for ab in 0..p1 * p2 {
                        out[ab + p1 * p2 * c] = src[c + rows * ab];
                    }
                }
                out
            }
        };
        Ok(Tensor3 { dims, data })
    }

    /// k-mode product `X ×ₖ M` for `M` of shape `q × pₖ`.
    ///
    /// Computes the same thing as `fold(M · unfold(X, k))` but multiplies
    /// strided views of the storage directly instead of materializing the
    /// unfolding.
    pub fn kmode_product(&self, mode: Mode, m: &Matrix) -> Result<Tensor3> {
        let pk = self.dim(mode);
        if m.cols() != pk {
            return Err(Error::ShapeMismatch(format!(
                "mode-{} product needs a matrix with {} columns, got {}x{}",
                mode,
                pk,
                m.rows(),
                m.cols()
            )));
        }
        let [p1, p2, p3] = self.dims;
        let q = m.rows();
        let mut dims = self.dims;
        dims[mode.axis()] = q;
        let mut out = vec![0.0; dims.iter().product()];
        match mode.number() {
            1 => gemm(
                1.0,
                m.view(),
                MatRef::col_major(&self.data, p1, p2 * p3),
                0.0,
                MatMut::col_major(&mut out, q, p2 * p3),
            ),
            2 => {
                let (src_slab, dst_slab) = (p1 * p2, p1 * q);
                for c in 0..p3 {
                    gemm(
                        1.0,
                        MatRef::col_major(&self.data[c * src_slab..(c + 1) * src_slab], p1, p2),
                        m.view().t(),
                        0.0,
                        MatMut::col_major(&mut out[c * dst_slab..(c + 1) * dst_slab], p1, q),
                    );
                }
            }
            _ => gemm(
                1.0,
                MatRef::col_major(&self.data, p1 * p2, p3),
                m.view().t(),
                0.0,
                MatMut::col_major(&mut out, p1 * p2, q),
            ),
        }
        Ok(Tensor3 { dims, data: out })
    }

    /// Axis permutation with numpy `transpose` semantics: output axis `i` is
    /// input axis `order[i]` (0-based).
    pub fn permute(&self, order: [usize; 3]) -> Tensor3 {
        let mut seen = [false; 3];
        for &o in &order {
            assert!(o < 3 && !seen[o], "invalid axis permutation {order:?}");
            seen[o] = true;
        }
        let dims = [self.dims[order[0]], self.dims[order[1]], self.dims[order[2]]];
        Tensor3::from_fn(dims, |i, j, k| {
            let mut src = [0; 3];
            src[order[0]] = i;
            src[order[1]] = j;
            src[order[2]] = k;
            self.get(src[0], src[1], src[2])
        })
    }

    pub fn scale(&self, s: f64) -> Tensor3 {
        Tensor3 {
            dims: self.dims,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    pub fn add_assign(&mut self, rhs: &Tensor3) {
        assert_eq!(self.dims, rhs.dims, "tensor shape mismatch");
        for (a, b) in self.data.iter_mut().zip(&rhs.data) {
            *a += b;
        }
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs_diff(&self, rhs: &Tensor3) -> f64 {
        assert_eq!(self.dims, rhs.dims, "tensor shape mismatch");
        self.data
            .iter()
            .zip(&rhs.data)
            .fold(0.0, |m, (a, b)| m.max((a - b).abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

impl fmt::Debug for Tensor3 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Tensor3 {:?} {:?}", self.dims, self.data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_to_eight() -> Tensor3 {
        Tensor3::from_col_major([2, 2, 2], (1..=8).map(f64::from).collect()).unwrap()
    }

    #[test]
    fn mode_validation() {
        assert!(Mode::new(0).is_err());
        assert_eq!(Mode::new(4), Err(Error::InvalidMode(4)));
        assert_eq!(Mode::new(2).unwrap().axis(), 1);
        assert_eq!(Mode::try_from(3).unwrap(), Mode::THREE);
    }

    #[test]
    fn vec_reads_storage_order() {
        assert_eq!(one_to_eight().vec(), (1..=8).map(f64::from).collect::<Vec<_>>());
        let scalar = Tensor3::from_col_major([1, 1, 1], vec![7.0]).unwrap();
        assert_eq!(scalar.vec(), vec![7.0]);
    }

    #[test]
    fn unfold_examples() {
        let x = one_to_eight();
        assert_eq!(
            x.unfold(Mode::ONE),
            Matrix::from_rows(&[[1.0, 3.0, 5.0, 7.0], [2.0, 4.0, 6.0, 8.0]])
        );
        assert_eq!(
            x.unfold(Mode::THREE),
            Matrix::from_rows(&[[1.0, 2.0, 3.0, 4.0], [5.0, 6.0, 7.0, 8.0]])
        );
        // mode 2: rows index b, columns a + 2c
        assert_eq!(
            x.unfold(Mode::TWO),
            Matrix::from_rows(&[[1.0, 2.0, 5.0, 6.0], [3.0, 4.0, 7.0, 8.0]])
        );
    }

    #[test]
    fn unfold_of_column_tensor_is_a_reshape() {
        let x = Tensor3::from_col_major([3, 1, 1], vec![1.0, 2.0, 3.0]).unwrap();
        assert_eq!(x.unfold(Mode::ONE), Matrix::from_rows(&[[1.0], [2.0], [3.0]]));
    }

    #[test]
    fn fold_examples() {
        let m = Matrix::from_rows(&[[1.0, 3.0, 5.0, 7.0], [2.0, 4.0, 6.0, 8.0]]);
        assert_eq!(Tensor3::fold(&m, Mode::ONE, [2, 2, 2]).unwrap(), one_to_eight());
        let s = Tensor3::fold(&Matrix::from_rows(&[[4.5]]), Mode::TWO, [1, 1, 1]).unwrap();
        assert_eq!(s.get(0, 0, 0), 4.5);
    }

    #[test]
    fn fold_rejects_wrong_shape() {
        let m = Matrix::zeros(2, 3);
        assert!(matches!(
            Tensor3::fold(&m, Mode::ONE, [2, 2, 2]),
            Err(Error::ShapeMismatch(_))
        ));
    }

    #[test]
    fn kmode_identity_and_summing_row() {
        let x = one_to_eight();
        for mode in Mode::ALL {
            assert_eq!(x.kmode_product(mode, &Matrix::identity(2)).unwrap(), x);
        }
        let summed = x.kmode_product(Mode::ONE, &Matrix::from_rows(&[[1.0, 1.0]])).unwrap();
        assert_eq!(summed.dims(), [1, 2, 2]);
        assert_eq!(summed.vec(), vec![3.0, 7.0, 11.0, 15.0]);
    }

    #[test]
    fn kmode_rejects_inner_mismatch() {
        let x = one_to_eight();
        assert!(x.kmode_product(Mode::TWO, &Matrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn permute_moves_axes() {
        let x = Tensor3::from_fn([2, 3, 4], |a, b, c| (a + 10 * b + 100 * c) as f64);
        let y = x.permute([1, 0, 2]);
        assert_eq!(y.dims(), [3, 2, 4]);
        assert_eq!(y.get(2, 1, 3), x.get(1, 2, 3));
    }
}
